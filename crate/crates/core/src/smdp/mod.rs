//! Event-driven semi-Markov decision process over world snapshots.
//!
//! Decision epochs fall on request arrivals, deliveries and aircraft becoming available
//! again. After a dispatch, if another dispatch is still possible, the next epoch is the
//! next launch slot so that several aircraft can be committed in quick succession.
//!
//! Reward is the negative precedence-weighted time patients spend undelivered, in
//! seconds. There is no discounting.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkit::Event;
use crate::world::{
    Custody, Delivery, InTransit, Millis, TransitStage, WorldState,
};

pub mod mission;

pub use mission::{build_mission, Infeasible, MeanService, Mission, NoisyService, ServiceClock};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmdpError {
    #[error("illegal action: {0}")]
    IllegalAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    DispatchDirect,
    DispatchViaAxp,
    Hold,
}

/// A commitment the planner can make at an epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DispatchAction {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aircraft_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axp_watercraft_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiving_aircraft_id: Option<String>,
    /// Launch time of the pickup aircraft, milliseconds.
    pub launch_time: Millis,
}

impl DispatchAction {
    pub fn hold(clock: Millis) -> Self {
        DispatchAction {
            kind: ActionKind::Hold,
            aircraft_id: None,
            request_id: None,
            axp_watercraft_id: None,
            receiving_aircraft_id: None,
            launch_time: clock,
        }
    }

    pub fn direct(aircraft: &str, request: &str, launch_time: Millis) -> Self {
        DispatchAction {
            kind: ActionKind::DispatchDirect,
            aircraft_id: Some(aircraft.into()),
            request_id: Some(request.into()),
            axp_watercraft_id: None,
            receiving_aircraft_id: None,
            launch_time,
        }
    }

    pub fn via_axp(aircraft: &str, request: &str, watercraft: &str, receiver: &str, launch_time: Millis) -> Self {
        DispatchAction {
            kind: ActionKind::DispatchViaAxp,
            aircraft_id: Some(aircraft.into()),
            request_id: Some(request.into()),
            axp_watercraft_id: Some(watercraft.into()),
            receiving_aircraft_id: Some(receiver.into()),
            launch_time,
        }
    }

    pub fn is_hold(&self) -> bool {
        self.kind == ActionKind::Hold
    }

    pub fn label(&self) -> String {
        match self.kind {
            ActionKind::Hold => "hold".into(),
            ActionKind::DispatchDirect => format!(
                "direct {} -> {}",
                self.aircraft_id.as_deref().unwrap_or("?"),
                self.request_id.as_deref().unwrap_or("?")
            ),
            ActionKind::DispatchViaAxp => format!(
                "via {} {} -> {} -> {}",
                self.axp_watercraft_id.as_deref().unwrap_or("?"),
                self.aircraft_id.as_deref().unwrap_or("?"),
                self.request_id.as_deref().unwrap_or("?"),
                self.receiving_aircraft_id.as_deref().unwrap_or("?")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: WorldState,
    /// Milliseconds between the two epochs.
    pub sojourn: Millis,
    /// Non-positive.
    pub reward: f64,
    pub terminal: bool,
    /// Events fired during the sojourn, in log order.
    pub events: Vec<Event>,
}

pub fn is_terminal(s: &WorldState) -> bool {
    s.pending_requests.is_empty() && s.in_transit.is_empty() && s.scheduled.is_empty()
}

/// Feasible dispatches for one pending request, each with its deterministic mission.
/// Unsorted; `stop_at_first` returns as soon as one is found.
pub fn request_candidates(s: &WorldState, req_id: &str, stop_at_first: bool) -> Vec<(DispatchAction, Mission)> {
    let mut out = Vec::new();
    let Some(req) = s.request(req_id) else { return out };
    let launch = s.params.launch_slot(s.clock);
    let fits: Vec<_> = s
        .aircraft
        .iter()
        .filter(|a| a.is_available() && req.patient_count <= a.cabin_size)
        .collect();
    let consider = |a: DispatchAction, out: &mut Vec<(DispatchAction, Mission)>| {
        if let Ok(m) = build_mission(s, &a, &mut MeanService) {
            out.push((a, m));
        }
    };
    for ac in &fits {
        if req.required_axp.is_none() {
            consider(DispatchAction::direct(&ac.id, req_id, launch), &mut out);
            if stop_at_first && !out.is_empty() {
                return out;
            }
        }
        for wc in &s.watercraft {
            if req.required_axp.as_ref().is_some_and(|w| w != &wc.id) {
                continue;
            }
            for rx in &fits {
                if rx.id == ac.id {
                    continue;
                }
                consider(DispatchAction::via_axp(&ac.id, req_id, &wc.id, &rx.id, launch), &mut out);
                if stop_at_first && !out.is_empty() {
                    return out;
                }
            }
        }
    }
    out
}

/// Every legal action, sorted, with `hold` last.
pub fn legal_actions(s: &WorldState) -> Vec<DispatchAction> {
    let mut out: Vec<DispatchAction> = s
        .pending_requests
        .iter()
        .flat_map(|r| request_candidates(s, r, false))
        .map(|(a, _)| a)
        .collect();
    out.sort();
    out.push(DispatchAction::hold(s.clock));
    out
}

/// Whether any dispatch (anything but hold) is legal.
pub fn can_dispatch(s: &WorldState) -> bool {
    s.pending_requests
        .iter()
        .any(|r| !request_candidates(s, r, true).is_empty())
}

/// Legality without enumerating every alternative.
pub fn is_legal(s: &WorldState, a: &DispatchAction) -> bool {
    if a.is_hold() {
        return a.launch_time == s.clock;
    }
    let Some(req_id) = a.request_id.as_deref() else { return false };
    if !s.pending_requests.iter().any(|r| r == req_id) {
        return false;
    }
    let Some(req) = s.request(req_id) else { return false };
    if a.launch_time != s.params.launch_slot(s.clock) {
        return false;
    }
    let fits = |id: &Option<String>| {
        id.as_deref()
            .and_then(|id| s.aircraft(id))
            .is_some_and(|ac| ac.is_available() && req.patient_count <= ac.cabin_size)
    };
    let shape_ok = match a.kind {
        ActionKind::DispatchDirect => {
            req.required_axp.is_none()
                && fits(&a.aircraft_id)
                && a.axp_watercraft_id.is_none()
                && a.receiving_aircraft_id.is_none()
        }
        ActionKind::DispatchViaAxp => {
            fits(&a.aircraft_id)
                && fits(&a.receiving_aircraft_id)
                && a.aircraft_id != a.receiving_aircraft_id
                && a.axp_watercraft_id.as_deref().is_some_and(|w| s.watercraft(w).is_some())
                && (req.required_axp.is_none() || req.required_axp == a.axp_watercraft_id)
        }
        ActionKind::Hold => false,
    };
    shape_ok && build_mission(s, a, &mut MeanService).is_ok()
}

/// Commits `a` to the snapshot without moving past the current clock.
/// Events due at the current clock (an immediate launch) fire right away.
pub fn apply_action<R: Rng>(s: &WorldState, a: &DispatchAction, rng: &mut R) -> Result<(WorldState, Vec<Event>), SmdpError> {
    if !is_legal(s, a) {
        return Err(SmdpError::IllegalAction(a.label()));
    }
    let mut next = s.clone();
    let events = commit(&mut next, a, rng)?;
    Ok((next, events))
}

fn commit<R: Rng>(next: &mut WorldState, a: &DispatchAction, rng: &mut R) -> Result<Vec<Event>, SmdpError> {
    if a.is_hold() {
        return Ok(Vec::new());
    }
    let mission = if next.params.stochastic {
        let fraction = next.params.noise_fraction;
        build_mission(next, a, &mut NoisyService { rng, fraction })
    } else {
        build_mission(next, a, &mut MeanService)
    }
    .map_err(|e| SmdpError::IllegalAction(e.to_string()))?;

    let req_id = a.request_id.clone().unwrap_or_default();
    next.pending_requests.retain(|r| r != &req_id);
    next.in_transit.push(InTransit {
        request_id: req_id.clone(),
        carrier: Custody::Ground,
        stage: TransitStage::AwaitingPickup,
    });
    for id in [&a.aircraft_id, &a.receiving_aircraft_id].into_iter().flatten() {
        if let Some(ac) = next.aircraft.iter_mut().find(|x| &x.id == id) {
            ac.tasked = Some(req_id.clone());
        }
    }
    if let Some(ac) = next
        .aircraft
        .iter_mut()
        .find(|x| Some(&x.id) == a.aircraft_id.as_ref())
    {
        ac.status = crate::world::AircraftStatus::Enroute;
    }
    next.insert_events(mission.events);
    let clock = next.clock;
    Ok(next.advance_to(clock))
}

fn undelivered_cost(start: &WorldState, end: &WorldState, t0: Millis, t1: Millis) -> f64 {
    start
        .outstanding()
        .map(|r| {
            let until = end.delivery_time(&r.id).unwrap_or(t1).min(t1);
            let secs = (until - t0).max(0) as f64 / 1000.0;
            start.params.weights.weight(r.precedence) * r.patient_count as f64 * secs
        })
        .sum()
}

/// One SMDP transition: commit `a`, then run the world to the next decision epoch.
pub fn step<R: Rng>(s: &WorldState, a: &DispatchAction, rng: &mut R) -> Result<Transition, SmdpError> {
    if !is_legal(s, a) {
        return Err(SmdpError::IllegalAction(a.label()));
    }
    Ok(step_unchecked(s, a, rng))
}

/// `step` for an action already known to be legal.
pub fn step_unchecked<R: Rng>(s: &WorldState, a: &DispatchAction, rng: &mut R) -> Transition {
    let mut next = s.clone();
    let mut events = commit(&mut next, a, rng).unwrap_or_default();
    let t0 = s.clock;

    let mut target = next.next_epoch_time();
    if !a.is_hold() && can_dispatch(&next) {
        let slot = a.launch_time.max(t0) + next.params.grid_ms();
        target = Some(target.map_or(slot, |t| t.min(slot)));
    }

    match target {
        Some(t1) => {
            events.extend(next.advance_to(t1));
            let reward = -undelivered_cost(s, &next, t0, t1);
            let terminal = is_terminal(&next);
            Transition {
                next_state: next,
                sojourn: t1 - t0,
                reward,
                terminal,
                events,
            }
        }
        None => {
            // nothing left that could ever change the picture: whoever is still waiting
            // is written off
            let penalty: f64 = next
                .outstanding()
                .map(|r| {
                    next.params.weights.weight(r.precedence)
                        * r.patient_count as f64
                        * next.params.abandon_penalty
                })
                .sum();
            let clock = next.clock;
            let dropped: Vec<String> = next.pending_requests.drain(..).collect();
            next.abandoned
                .extend(dropped.into_iter().map(|request_id| Delivery { request_id, time: clock }));
            let terminal = is_terminal(&next);
            Transition {
                next_state: next,
                sojourn: 0,
                reward: -penalty,
                terminal,
                events,
            }
        }
    }
}
