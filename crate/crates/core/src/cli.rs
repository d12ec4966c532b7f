//! `medchain` command line.
//!
//! Exit codes: 0 success, 1 invalid input (scenario, configuration, I/O), 2 infeasible
//! result, 64 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::geo::GeoPoint;
use crate::opsvc::{self, OpsService};
use crate::planner::{self, PlannerConfig, PolicyKind};
use crate::scenario::{self, Scenario};
use crate::simkit;
use crate::world::{radius_of_action, secs_to_ms, TransferMode};
use crate::zones::{self, geojson, ChainContext, PlacementQuery, ZoneError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "medchain", version, about = "Maritime MEDEVAC planning and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyName {
    Mcts,
    Greedy,
}

#[derive(Debug, clap::Args)]
struct PlannerArgs {
    /// MCTS iterations per decision.
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Root-parallel search workers.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sample service-time noise inside the search.
    #[arg(long)]
    stochastic_search: bool,
}

impl PlannerArgs {
    fn config(&self, seed: u64) -> PlannerConfig {
        PlannerConfig {
            iterations: self.iterations,
            workers: self.workers,
            stochastic: self.stochastic_search,
            seed,
            ..PlannerConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode and write the event log as JSON Lines.
    Simulate {
        scenario: String,
        #[arg(long, value_enum, default_value = "mcts")]
        policy: PolicyName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sample service-time noise in the environment.
        #[arg(long)]
        stochastic: bool,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Recommend a dispatch for the world as it stands at time T (seconds).
    Plan {
        scenario: String,
        #[arg(long, default_value_t = 0.0)]
        at: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Opportunity zone between two aircraft and the watercraft windows in it, as GeoJSON.
    Zones {
        scenario: String,
        #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
        pair: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sampling step, seconds; defaults to the scenario's.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Fastest multi-aircraft transfer chain between two points.
    Chain {
        scenario: String,
        /// LAT,LON
        #[arg(long, value_parser = parse_point)]
        from: Option<GeoPoint>,
        /// LAT,LON
        #[arg(long, value_parser = parse_point)]
        to: Option<GeoPoint>,
        /// Use this request's pickup and destination instead of --from/--to.
        #[arg(long, conflicts_with_all = ["from", "to"])]
        request: Option<String>,
        /// Leave this watercraft out (repeatable).
        #[arg(long)]
        without: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Also write the plan as GeoJSON.
        #[arg(long)]
        geojson: Option<PathBuf>,
    },
    /// Best station for a dedicated exchange ship on an N x N grid over the scenario.
    PlaceAxp {
        scenario: String,
        #[arg(long, default_value_t = 5)]
        grid: usize,
        /// Start-time sampling step, seconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Compare MCTS and greedy over many episodes.
    Bench {
        scenario: String,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Run the operations service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        /// Start a session with this scenario.
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn parse_point(s: &str) -> Result<GeoPoint, String> {
    let (lat, lon) = s.split_once(',').ok_or("expected LAT,LON")?;
    let lat: f64 = lat.trim().parse().map_err(|e| format!("latitude: {e}"))?;
    let lon: f64 = lon.trim().parse().map_err(|e| format!("longitude: {e}"))?;
    GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

struct Failure(i32, String);

impl Failure {
    fn invalid(m: impl ToString) -> Self {
        Failure(EXIT_INVALID, m.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load(id: &str) -> Result<Scenario, Failure> {
    scenario::load(id).map_err(Failure::invalid)
}

fn emit(out: &mut dyn Write, v: &impl serde::Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(v).map_err(Failure::invalid)?;
    writeln!(out, "{text}").map_err(Failure::invalid)
}

fn write_file(path: &PathBuf, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Simulate { scenario, policy, seed, out: path, stochastic, planner } => {
            let mut sc = load(&scenario)?;
            sc.params.stochastic = stochastic;
            let kind = match policy {
                PolicyName::Greedy => PolicyKind::Greedy,
                PolicyName::Mcts => PolicyKind::Mcts(planner.config(seed)),
            };
            kind_config_ok(&kind)?;
            let mut p = kind.build(seed);
            let run = simkit::run(&sc, p.as_mut(), seed).map_err(Failure::invalid)?;
            let log = run.jsonl();
            match path {
                Some(path) => {
                    write_file(&path, &log)?;
                    let m = run.metrics();
                    emit(
                        out,
                        &json!({
                            "events": run.events.len(),
                            "delivered": m.delivered(),
                            "undelivered": m.undelivered(),
                            "mean_time_to_facility_s": m.mean_time_to_facility(),
                            "mean_axp_dwell_s": m.mean_axp_dwell(),
                            "total_return": run.total_return,
                        }),
                    )
                }
                None => write!(out, "{log}").map_err(Failure::invalid),
            }
        }
        Command::Plan { scenario, at, seed, planner } => {
            let sc = load(&scenario)?;
            let mut s = sc.world();
            s.advance_to(secs_to_ms(at));
            let rec = planner::plan(&s, &planner.config(seed)).map_err(|e| match e {
                planner::PlanError::TerminalState => Failure(EXIT_INFEASIBLE, e.to_string()),
                e => Failure::invalid(e),
            })?;
            emit(out, &rec)
        }
        Command::Zones { scenario, pair, out: path, dt } => {
            let sc = load(&scenario)?;
            let ac = |id: &str| sc.aircraft(id).ok_or_else(|| Failure::invalid(format!("unknown aircraft {id:?}")));
            let (a, b) = (ac(&pair[0])?, ac(&pair[1])?);
            let zone = zones::opportunity_zone(
                a.home_at(&sc.watercraft, 0.0),
                radius_of_action(a.max_range),
                b.home_at(&sc.watercraft, 0.0),
                radius_of_action(b.max_range),
            )
            .map_err(zone_failure)?;
            let windows = zones::zone_windows(&zone, &sc.watercraft, (0.0, sc.horizon), dt.unwrap_or(sc.zone_dt))
                .map_err(zone_failure)?;
            let fc = geojson::feature_collection(geojson::zone_features(&zone, &windows));
            if let Some(path) = path {
                write_file(&path, &serde_json::to_string_pretty(&fc).map_err(Failure::invalid)?)?;
            }
            emit(
                out,
                &json!({
                    "empty": zone.empty,
                    "windows": windows,
                    "blackouts": zones::blackouts(&windows, (0.0, sc.horizon)),
                }),
            )
        }
        Command::Chain { scenario, from, to, request, without, t0, dt, horizon, geojson: gj } => {
            let mut sc = load(&scenario)?;
            for id in &without {
                if sc.watercraft(id).is_none() {
                    return Err(Failure::invalid(format!("unknown watercraft {id:?}")));
                }
                sc = sc.without_watercraft(id);
            }
            let (pickup, dest, mode) = match (request, from, to) {
                (Some(id), _, _) => {
                    let r = sc
                        .requests
                        .iter()
                        .find(|r| r.id == id)
                        .ok_or_else(|| Failure::invalid(format!("unknown request {id:?}")))?;
                    let f = sc.facility(&r.destination).expect("validated scenario");
                    (r.location, f.location, r.pickup_mode)
                }
                (None, Some(f), Some(t)) => (f, t, TransferMode::Ground),
                (None, None, None) if sc.requests.len() == 1 => {
                    let r = &sc.requests[0];
                    let f = sc.facility(&r.destination).expect("validated scenario");
                    (r.location, f.location, r.pickup_mode)
                }
                _ => return Err(Failure(EXIT_USAGE, "give --from and --to, or --request".into())),
            };
            let ctx = ChainContext {
                fleet: &sc.watercraft,
                pool: &sc.aircraft,
                refuel_time: sc.params.refuel_time,
                pickup_mode: mode,
            };
            let plan = zones::chain_search(pickup, dest, &ctx, t0, horizon.unwrap_or(sc.horizon), dt.unwrap_or(sc.zone_dt))
                .map_err(zone_failure)?;
            if let Some(path) = gj {
                let fc = geojson::feature_collection(geojson::plan_features(&plan));
                write_file(&path, &serde_json::to_string_pretty(&fc).map_err(Failure::invalid)?)?;
            }
            emit(
                out,
                &json!({
                    "exchange_points": plan.exchange_points(),
                    "refuel_stops": plan.refuel_stops(),
                    "total_distance_m": plan.total_distance.meters(),
                    "total_distance_mi": plan.total_distance.statute_miles(),
                    "plan": plan,
                }),
            )
        }
        Command::PlaceAxp { scenario, grid, dt } => {
            let sc = load(&scenario)?;
            if grid == 0 {
                return Err(Failure::invalid("grid must be at least 1"));
            }
            let demand: Vec<(GeoPoint, GeoPoint)> = sc
                .requests
                .iter()
                .map(|r| (r.location, sc.facility(&r.destination).expect("validated scenario").location))
                .collect();
            if demand.is_empty() {
                return Err(Failure::invalid("the scenario has no requests to place against"));
            }
            let candidates = grid_over(&demand, grid);
            let dt = dt.unwrap_or(sc.zone_dt);
            let query = PlacementQuery {
                demand,
                t0: 0.0,
                t1: dt,
                dt,
                chain_horizon: sc.horizon,
            };
            let ctx = ChainContext {
                fleet: &sc.watercraft,
                pool: &sc.aircraft,
                refuel_time: sc.params.refuel_time,
                pickup_mode: TransferMode::Ground,
            };
            let placement = zones::place_dedicated_axp(&candidates, &query, &ctx).map_err(zone_failure)?;
            emit(out, &placement)
        }
        Command::Bench { scenario, episodes, seed, planner } => {
            let sc = load(&scenario)?;
            let mcts = PolicyKind::Mcts(planner.config(seed));
            kind_config_ok(&mcts)?;
            let g = planner::evaluate_policy(&sc, &PolicyKind::Greedy, episodes, seed).map_err(Failure::invalid)?;
            let m = planner::evaluate_policy(&sc, &mcts, episodes, seed).map_err(Failure::invalid)?;
            emit(out, &json!({"scenario": sc.id, "greedy": g, "mcts": m}))
        }
        Command::Serve { port, scenario } => {
            let ops = OpsService::new();
            if let Some(id) = scenario {
                ops.start_session(load(&id)?).map_err(Failure::invalid)?;
            }
            let rt = tokio::runtime::Runtime::new().map_err(Failure::invalid)?;
            rt.block_on(opsvc::serve(ops, port)).map_err(Failure::invalid)
        }
    }
}

fn kind_config_ok(k: &PolicyKind) -> CmdResult {
    match k {
        PolicyKind::Mcts(cfg) => cfg.validate().map_err(Failure::invalid),
        PolicyKind::Greedy => Ok(()),
    }
}

fn zone_failure(e: ZoneError) -> Failure {
    match e {
        ZoneError::NoFeasibleChain => Failure(EXIT_INFEASIBLE, e.to_string()),
        ZoneError::InvalidInput(_) => Failure::invalid(e),
    }
}

// n x n points spanning the bounding box of the demand endpoints
fn grid_over(demand: &[(GeoPoint, GeoPoint)], n: usize) -> Vec<GeoPoint> {
    let pts: Vec<GeoPoint> = demand.iter().flat_map(|&(a, b)| [a, b]).collect();
    let lat = |f: fn(f64, f64) -> f64| pts.iter().map(|p| p.lat()).fold(pts[0].lat(), f);
    let lon = |f: fn(f64, f64) -> f64| pts.iter().map(|p| p.lon()).fold(pts[0].lon(), f);
    let (lat0, lat1, lon0, lon1) = (lat(f64::min), lat(f64::max), lon(f64::min), lon(f64::max));
    let at = |lo: f64, hi: f64, i: usize| if n == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(GeoPoint::new(at(lat0, lat1, i), at(lon0, lon1, j)).expect("inside the bounding box"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("medchain").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn points_parse() {
        let p = parse_point("14.5995, 120.9842").unwrap();
        assert_eq!((p.lat(), p.lon()), (14.5995, 120.9842));
        assert!(parse_point("14.5").is_err());
        assert!(parse_point("95,0").is_err());
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["zones", "mpw2023", "--pair", "A"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_scenario_is_invalid() {
        let (code, _, err) = run_args(&["plan", "no-such-scenario"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("no-such-scenario"));
    }

    #[test]
    fn grid_spans_the_demand() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(2.0, 4.0).unwrap();
        let g = grid_over(&[(a, b)], 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], a);
        assert_eq!(g[8], b);
        assert_eq!(g[4], GeoPoint::new(1.0, 2.0).unwrap());
    }
}
