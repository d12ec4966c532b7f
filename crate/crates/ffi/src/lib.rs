//! C ABI for the medchain planning engine.
//!
//! Conventions:
//! - Every fallible function returns a [`MedchainStatus`]; results go through out-pointers.
//! - Scenarios are opaque handles freed with `medchain_scenario_free`.
//! - Strings returned through out-pointers are UTF-8, NUL-terminated, owned by the
//!   caller and freed with `medchain_string_free`.
//! - After a non-OK status, `medchain_last_error_message` describes the failure. The
//!   message belongs to the calling thread and stays valid until its next call.
//! - Distances are meters, times seconds, coordinates decimal degrees.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use medchain::geo::{gc_distance, GeoPoint, LengthM};
use medchain::planner::{self, PlanError, PlannerConfig, PolicyKind};
use medchain::scenario::{self, Scenario, ScenarioError};
use medchain::simkit::{self, SimError};
use medchain::world::{leg_feasible_with_fuel, radius_of_action, secs_to_ms, TransferMode};
use medchain::zones::{self, ChainContext, ZoneError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedchainStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    NotFound = 5,
    InvalidArgument = 6,
    NoFeasibleChain = 7,
    IllegalAction = 8,
    TerminalState = 9,
    Internal = 10,
}

/// Loaded, validated scenario.
pub struct MedchainScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior NUL"));
}

struct Fail(MedchainStatus, String);

impl From<ScenarioError> for Fail {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::Parse(_) => MedchainStatus::ParseError,
            ScenarioError::NotFound(_) | ScenarioError::Io { .. } => MedchainStatus::NotFound,
            ScenarioError::Validation { .. } => MedchainStatus::ValidationError,
        };
        Fail(status, e.to_string())
    }
}

impl From<ZoneError> for Fail {
    fn from(e: ZoneError) -> Self {
        let status = match e {
            ZoneError::NoFeasibleChain => MedchainStatus::NoFeasibleChain,
            ZoneError::InvalidInput(_) => MedchainStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<PlanError> for Fail {
    fn from(e: PlanError) -> Self {
        let status = match e {
            PlanError::TerminalState => MedchainStatus::TerminalState,
            PlanError::InvalidConfig(_) => MedchainStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::IllegalAction { .. } => MedchainStatus::IllegalAction,
            _ => MedchainStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(MedchainStatus::InvalidArgument, msg.into())
}

/// Runs `f`, turning errors and panics into a status and a thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MedchainStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MedchainStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error (panic)");
            MedchainStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(MedchainStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(MedchainStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn scenario_arg<'a>(p: *const MedchainScenario) -> Result<&'a Scenario, Fail> {
    p.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| Fail(MedchainStatus::NullPointer, "scenario is null".into()))
}

fn check_out<T>(p: *mut T) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(MedchainStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(MedchainStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn point(lat: f64, lon: f64) -> Result<GeoPoint, Fail> {
    GeoPoint::new(lat, lon).map_err(|e| invalid(e.to_string()))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Fail> {
    serde_json::to_string(v).map_err(|e| Fail(MedchainStatus::Internal, e.to_string()))
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn medchain_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success. Never null.
#[no_mangle]
pub extern "C" fn medchain_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medchain_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scenario by file path or bundled id.
///
/// # Safety
/// `path_or_id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_scenario_load(path_or_id: *const c_char, out: *mut *mut MedchainScenario) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        let id = str_arg(path_or_id, "path_or_id")?;
        let inner = scenario::load(id)?;
        *out = Box::into_raw(Box::new(MedchainScenario { inner }));
        Ok(())
    })
}

/// Parses a scenario from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_scenario_parse(json: *const c_char, out: *mut *mut MedchainScenario) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        let text = str_arg(json, "json")?;
        let inner = scenario::parse(text)?;
        *out = Box::into_raw(Box::new(MedchainScenario { inner }));
        Ok(())
    })
}

/// Frees a scenario. Null is ignored.
///
/// # Safety
/// `s` must come from `medchain_scenario_load`/`_parse` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medchain_scenario_free(s: *mut MedchainScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Serializes a scenario (meters, m/s) as JSON.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_scenario_to_json(s: *const MedchainScenario, out: *mut *mut c_char) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        put_string(out, scenario_arg(s)?.to_json())
    })
}

/// Number of aircraft, watercraft, facilities and requests.
///
/// # Safety
/// `s` must be a live handle; each out-pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn medchain_scenario_counts(
    s: *const MedchainScenario,
    aircraft: *mut usize,
    watercraft: *mut usize,
    facilities: *mut usize,
    requests: *mut usize,
) -> MedchainStatus {
    guard(|| {
        let sc = scenario_arg(s)?;
        for (p, n) in [
            (aircraft, sc.aircraft.len()),
            (watercraft, sc.watercraft.len()),
            (facilities, sc.facilities.len()),
            (requests, sc.requests.len()),
        ] {
            if !p.is_null() {
                *p = n;
            }
        }
        Ok(())
    })
}

/// Great-circle distance in meters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_gc_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out: *mut f64) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        *out = gc_distance(point(lat1, lon1)?, point(lat2, lon2)?).meters();
        Ok(())
    })
}

/// Radius of action (half the maximum range), meters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_radius_of_action(max_range_m: f64, out: *mut f64) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        if !(max_range_m.is_finite() && max_range_m >= 0.0) {
            return Err(invalid("max_range_m must be a non-negative number"));
        }
        *out = radius_of_action(LengthM(max_range_m)).meters();
        Ok(())
    })
}

/// Whether a leg is flyable with `fuel_m` of range left.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_leg_feasible(
    fuel_m: f64,
    from_lat: f64,
    from_lon: f64,
    to_lat: f64,
    to_lon: f64,
    refuel_at_to: bool,
    out: *mut bool,
) -> MedchainStatus {
    guard(|| {
        check_out(out)?;
        *out = leg_feasible_with_fuel(LengthM(fuel_m), point(from_lat, from_lon)?, point(to_lat, to_lon)?, refuel_at_to);
        Ok(())
    })
}

fn policy_kind(name: &str, iterations: u32, seed: u64) -> Result<PolicyKind, Fail> {
    match name {
        "greedy" => Ok(PolicyKind::Greedy),
        "mcts" => {
            let cfg = PlannerConfig {
                iterations: iterations as usize,
                seed,
                ..PlannerConfig::default()
            };
            cfg.validate()?;
            Ok(PolicyKind::Mcts(cfg))
        }
        other => Err(invalid(format!("unknown policy {other:?}; expected \"greedy\" or \"mcts\""))),
    }
}

/// Runs one episode; writes the event log as JSON Lines.
///
/// # Safety
/// `s` must be a live handle, `policy` a NUL-terminated string, `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_simulate(
    s: *const MedchainScenario,
    policy: *const c_char,
    iterations: u32,
    seed: u64,
    out_jsonl: *mut *mut c_char,
) -> MedchainStatus {
    guard(|| {
        check_out(out_jsonl)?;
        let sc = scenario_arg(s)?;
        let kind = policy_kind(str_arg(policy, "policy")?, iterations, seed)?;
        let mut p = kind.build(seed);
        let run = simkit::run(sc, p.as_mut(), seed)?;
        put_string(out_jsonl, run.jsonl())
    })
}

/// Fastest transfer chain between two points; writes the plan as JSON. Returns
/// `NO_FEASIBLE_CHAIN` when none exists within `horizon_s`.
///
/// # Safety
/// `s` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_chain_search(
    s: *const MedchainScenario,
    from_lat: f64,
    from_lon: f64,
    to_lat: f64,
    to_lon: f64,
    t0_s: f64,
    horizon_s: f64,
    dt_s: f64,
    out_json: *mut *mut c_char,
) -> MedchainStatus {
    guard(|| {
        check_out(out_json)?;
        let sc = scenario_arg(s)?;
        let ctx = ChainContext {
            fleet: &sc.watercraft,
            pool: &sc.aircraft,
            refuel_time: sc.params.refuel_time,
            pickup_mode: TransferMode::Ground,
        };
        let plan = zones::chain_search(point(from_lat, from_lon)?, point(to_lat, to_lon)?, &ctx, t0_s, horizon_s, dt_s)?;
        put_string(out_json, to_json(&plan)?)
    })
}

/// Dispatch recommendation for the scenario's world at `at_s`; writes it as JSON.
///
/// # Safety
/// `s` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn medchain_plan(
    s: *const MedchainScenario,
    at_s: f64,
    iterations: u32,
    seed: u64,
    out_json: *mut *mut c_char,
) -> MedchainStatus {
    guard(|| {
        check_out(out_json)?;
        let sc = scenario_arg(s)?;
        if !(at_s.is_finite() && at_s >= 0.0) {
            return Err(invalid("at_s must be a non-negative number"));
        }
        let mut world = sc.world();
        world.advance_to(secs_to_ms(at_s));
        let cfg = PlannerConfig {
            iterations: iterations as usize,
            seed,
            ..PlannerConfig::default()
        };
        let rec = planner::plan(&world, &cfg)?;
        put_string(out_json, to_json(&rec)?)
    })
}
