//! Dispatch recommendation: Monte Carlo tree search and a greedy baseline, plus
//! multi-episode policy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Scenario;
use crate::simkit::{self, Policy, SimError};

mod greedy;
mod mcts;

pub use greedy::{greedy_policy, GreedyPolicy};
pub use mcts::{plan, plan_filtered, ActionVisits, MctsPolicy, PlannerConfig, Recommendation, TimelineEntry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("nothing left to decide: the state is terminal")]
    TerminalState,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
}

/// Which policy to run, for callers that pick one by name.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Greedy,
    Mcts(PlannerConfig),
}

impl PolicyKind {
    /// Builds a fresh policy instance; `seed` replaces the configured search seed.
    pub fn build(&self, seed: u64) -> Box<dyn Policy + Send> {
        match self {
            PolicyKind::Greedy => Box::new(GreedyPolicy),
            PolicyKind::Mcts(cfg) => Box::new(MctsPolicy::new(PlannerConfig {
                seed,
                ..cfg.clone()
            })),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Stats {
    /// Mean, median and nearest-rank 95th percentile; all zero for no samples.
    pub fn of(mut values: Vec<f64>) -> Stats {
        if values.is_empty() {
            return Stats::default();
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Stats {
            count: n,
            mean: values.iter().sum::<f64>() / n as f64,
            median,
            p95: values[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub response_time: Stats,
    pub time_to_facility: Stats,
    pub axp_dwell: Stats,
    pub utilization: Stats,
    /// Mean episode return.
    pub mean_return: f64,
    /// Requests never delivered, summed over episodes.
    pub undelivered: usize,
}

/// Runs `episodes` simulations with per-episode seeds drawn from `seed`.
pub fn evaluate_policy(
    scenario: &Scenario,
    policy: &PolicyKind,
    episodes: usize,
    seed: u64,
) -> Result<MetricsSummary, SimError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut response = Vec::new();
    let mut ttf = Vec::new();
    let mut dwell = Vec::new();
    let mut util = Vec::new();
    let mut total_return = 0.0;
    let mut undelivered = 0;
    for _ in 0..episodes {
        let env_seed: u64 = seeds.random();
        let policy_seed: u64 = seeds.random();
        let mut p = policy.build(policy_seed);
        let out = simkit::run(scenario, p.as_mut(), env_seed)?;
        let m = out.metrics();
        response.extend(m.requests.iter().filter_map(|r| r.response_time));
        ttf.extend(m.requests.iter().filter_map(|r| r.time_to_facility));
        dwell.extend(m.requests.iter().filter_map(|r| r.axp_dwell));
        util.extend(m.utilization.values().copied());
        undelivered += m.undelivered();
        total_return += out.total_return;
    }
    Ok(MetricsSummary {
        episodes,
        response_time: Stats::of(response),
        time_to_facility: Stats::of(ttf),
        axp_dwell: Stats::of(dwell),
        utilization: Stats::of(util),
        mean_return: if episodes > 0 { total_return / episodes as f64 } else { 0.0 },
        undelivered,
    })
}

/// Two aircraft, two simultaneous requests, no watercraft. The nearest aircraft to the
/// urgent request is also the only one near the second request, so first-come greedy
/// assignment is a poor plan.
pub fn toy_instance() -> Scenario {
    use crate::geo::{GeoPoint, LengthM};
    use crate::world::{
        Aircraft, AircraftStatus, EvacRequest, FacilityRole, Precedence, TransferMode, TreatmentFacility,
    };
    let p = |lat: f64, lon: f64| GeoPoint::new(lat, lon).expect("valid toy coordinate");
    let aircraft = |id: &str, base: GeoPoint| Aircraft {
        id: id.into(),
        home_base: base,
        home_watercraft: None,
        cruise_speed: 60.0,
        max_range: LengthM(600_000.0),
        status: AircraftStatus::Idle,
        fuel_range_remaining: LengthM(600_000.0),
        service_time_hoist: 300.0,
        service_time_land: 180.0,
        cabin_size: 2,
        position: base,
        leg: None,
        tasked: None,
    };
    let request = |id: &str, at: GeoPoint, precedence| EvacRequest {
        id: id.into(),
        time: 0.0,
        location: at,
        precedence,
        patient_count: 1,
        destination: "F".into(),
        pickup_mode: TransferMode::Ground,
        required_axp: None,
    };
    let mut s = Scenario::empty("toy");
    s.aircraft = vec![aircraft("A1", p(0.0, 0.0)), aircraft("A2", p(0.0, 1.0))];
    s.facilities = vec![TreatmentFacility {
        id: "F".into(),
        location: p(0.3, 0.5),
        role: FacilityRole::Role3,
    }];
    s.requests = vec![
        request("R1", p(0.0, 0.52), Precedence::Urgent),
        request("R2", p(0.05, 1.0), Precedence::Priority),
    ];
    s
}
