//! Where to station a dedicated exchange ship.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chain_search, ChainContext, ZoneError};
use crate::geo::GeoPoint;
use crate::world::{MedLevel, RoutePlan, Watercraft};

pub const DEDICATED_AXP_ID: &str = "DEDICATED-AXP";

/// Evacuation demand to score candidate stations against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementQuery {
    /// (pickup, destination) pairs.
    pub demand: Vec<(GeoPoint, GeoPoint)>,
    /// Start times sampled every `dt` over `[t0, t1)`. Seconds.
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// How long each chain may take.
    pub chain_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub index: usize,
    pub point: GeoPoint,
    pub score: f64,
    /// Score of every candidate, in input order.
    pub scores: Vec<f64>,
}

/// Scores each candidate by the fraction of (demand pair, start time) combinations that
/// have a feasible transfer chain once a stationary ship with a helipad and fuel sits
/// there, and returns the best. Ties go to the earliest candidate.
pub fn place_dedicated_axp(
    candidates: &[GeoPoint],
    query: &PlacementQuery,
    ctx: &ChainContext<'_>,
) -> Result<Placement, ZoneError> {
    if candidates.is_empty() {
        return Err(ZoneError::InvalidInput("no candidate points".into()));
    }
    if query.demand.is_empty() {
        return Err(ZoneError::InvalidInput("no demand pairs".into()));
    }
    if !(query.dt > 0.0) || !(query.t1 > query.t0) {
        return Err(ZoneError::InvalidInput("need t1 > t0 and dt > 0".into()));
    }
    if ctx.fleet.iter().any(|w| w.id == DEDICATED_AXP_ID) {
        return Err(ZoneError::InvalidInput(format!("fleet already has a watercraft named {DEDICATED_AXP_ID}")));
    }
    let n_starts = ((query.t1 - query.t0) / query.dt).ceil() as usize;
    let starts: Vec<f64> = (0..n_starts).map(|k| query.t0 + k as f64 * query.dt).collect();
    let total = (starts.len() * query.demand.len()) as f64;

    let scores = candidates
        .par_iter()
        .map(|&point| {
            let mut fleet = ctx.fleet.to_vec();
            fleet.push(Watercraft {
                id: DEDICATED_AXP_ID.into(),
                route: RoutePlan::stationary(point),
                helipad: true,
                refuel: true,
                med_level: MedLevel::Role2,
                override_track: Vec::new(),
            });
            let cx = ChainContext { fleet: &fleet, ..*ctx };
            let mut ok = 0usize;
            for &(from, to) in &query.demand {
                for &t in &starts {
                    match chain_search(from, to, &cx, t, query.chain_horizon, query.dt) {
                        Ok(_) => ok += 1,
                        Err(ZoneError::NoFeasibleChain) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(ok as f64 / total)
        })
        .collect::<Result<Vec<f64>, ZoneError>>()?;

    let mut index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[index] {
            index = i;
        }
    }
    Ok(Placement {
        index,
        point: candidates[index],
        score: scores[index],
        scores,
    })
}
