//! Discrete-event simulation of whole episodes, the event log, and metrics computed from it.
//!
//! A run is fully determined by the scenario, the policy (and its own seed) and the
//! environment seed; two runs with the same inputs produce byte-identical logs.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{gc_distance, GeoPoint, LengthM};
use crate::scenario::Scenario;
use crate::smdp::{self, DispatchAction};
use crate::world::{
    leg_feasible_with_fuel, ms_to_secs, secs_to_ms, transfer_mode, watercraft_position, Millis,
    TransferMode, WorldState,
};

mod event;

pub use event::{from_jsonl, to_jsonl, Event, EventKind};

/// Upper bound on decisions per episode; guards against a policy that never finishes.
pub const MAX_DECISIONS: usize = 100_000;

pub trait Policy {
    fn name(&self) -> &str;
    /// Chooses one of `smdp::legal_actions(s)`.
    fn decide(&mut self, s: &WorldState) -> DispatchAction;
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy {policy} chose an illegal action at t={t_ms} ms: {action}")]
    IllegalAction {
        policy: String,
        t_ms: Millis,
        action: String,
    },
    #[error("episode did not finish within {0} decisions")]
    DecisionLimit(usize),
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<Event>,
    pub decisions: Vec<(Millis, DispatchAction)>,
    pub final_state: WorldState,
    /// Sum of transition rewards over the episode.
    pub total_return: f64,
}

impl SimOutput {
    pub fn jsonl(&self) -> String {
        to_jsonl(&self.events)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_log(&self.events)
    }
}

/// Runs one episode to completion. `seed` drives service-time noise only.
pub fn run(scenario: &Scenario, policy: &mut dyn Policy, seed: u64) -> Result<SimOutput, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = scenario.world();
    let mut events = s.advance_to(0);
    let mut decisions = Vec::new();
    let mut total_return = 0.0;
    while !smdp::is_terminal(&s) {
        if decisions.len() >= MAX_DECISIONS {
            return Err(SimError::DecisionLimit(MAX_DECISIONS));
        }
        let a = policy.decide(&s);
        if !smdp::is_legal(&s, &a) {
            return Err(SimError::IllegalAction {
                policy: policy.name().to_string(),
                t_ms: s.clock,
                action: a.label(),
            });
        }
        decisions.push((s.clock, a.clone()));
        let tr = smdp::step_unchecked(&s, &a, &mut rng);
        events.extend(tr.events);
        total_return += tr.reward;
        s = tr.next_state;
    }
    // aircraft still flying home and refuelling
    events.extend(s.drain_calendar());
    Ok(SimOutput {
        events,
        decisions,
        final_state: s,
        total_return,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    pub request: String,
    /// Seconds from arrival to the first aircraft reaching the patient.
    pub response_time: Option<f64>,
    /// Seconds from arrival to handover at the treatment facility.
    pub time_to_facility: Option<f64>,
    /// Seconds the patient spent on an exchange watercraft.
    pub axp_dwell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub requests: Vec<RequestMetrics>,
    /// Busy fraction per aircraft over [0, last event]; busy runs from launch to refuel complete.
    pub utilization: BTreeMap<String, f64>,
    /// Seconds covered by the log.
    pub span: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

impl Metrics {
    /// Computes metrics from the log alone.
    pub fn from_log(events: &[Event]) -> Metrics {
        let mut by_req: BTreeMap<&str, (Option<Millis>, Option<Millis>, Option<Millis>, Option<Millis>, Option<Millis>)> =
            BTreeMap::new();
        let mut busy: BTreeMap<String, Millis> = BTreeMap::new();
        let mut launched: BTreeMap<&str, Millis> = BTreeMap::new();
        for e in events {
            if let Some(ac) = e.aircraft.as_deref() {
                busy.entry(ac.to_string()).or_insert(0);
                match e.kind {
                    EventKind::Launch => {
                        launched.entry(ac).or_insert(e.t_ms);
                    }
                    EventKind::RefuelComplete => {
                        if let Some(t0) = launched.remove(ac) {
                            *busy.get_mut(ac).expect("inserted above") += e.t_ms - t0;
                        }
                    }
                    _ => {}
                }
            }
            let Some(r) = e.request.as_deref() else { continue };
            let slot = by_req.entry(r).or_default();
            match e.kind {
                EventKind::RequestArrival => slot.0 = Some(e.t_ms),
                EventKind::ArrivePickup if slot.1.is_none() => slot.1 = Some(e.t_ms),
                EventKind::Delivered => slot.2 = Some(e.t_ms),
                EventKind::PatientDropoff => slot.3 = Some(e.t_ms),
                EventKind::PatientPickup => slot.4 = Some(e.t_ms),
                _ => {}
            }
        }
        let span_ms = events.iter().map(|e| e.t_ms).max().unwrap_or(0).max(0);
        for (ac, t0) in launched {
            *busy.get_mut(ac).expect("inserted above") += span_ms - t0;
        }
        let since = |from: Option<Millis>, to: Option<Millis>| match (from, to) {
            (Some(a), Some(b)) => Some(ms_to_secs(b - a)),
            _ => None,
        };
        Metrics {
            requests: by_req
                .into_iter()
                .map(|(id, (arr, pick, deliv, drop, up))| RequestMetrics {
                    request: id.to_string(),
                    response_time: since(arr, pick),
                    time_to_facility: since(arr, deliv),
                    axp_dwell: since(drop, up),
                })
                .collect(),
            utilization: busy
                .into_iter()
                .map(|(ac, b)| {
                    let u = if span_ms > 0 { b as f64 / span_ms as f64 } else { 0.0 };
                    (ac, u)
                })
                .collect(),
            span: ms_to_secs(span_ms),
        }
    }

    pub fn delivered(&self) -> usize {
        self.requests.iter().filter(|r| r.time_to_facility.is_some()).count()
    }

    pub fn undelivered(&self) -> usize {
        self.requests.len() - self.delivered()
    }

    pub fn mean_response_time(&self) -> Option<f64> {
        mean(self.requests.iter().filter_map(|r| r.response_time))
    }

    pub fn mean_time_to_facility(&self) -> Option<f64> {
        mean(self.requests.iter().filter_map(|r| r.time_to_facility))
    }

    pub fn mean_axp_dwell(&self) -> Option<f64> {
        mean(self.requests.iter().filter_map(|r| r.axp_dwell))
    }

    pub fn request(&self, id: &str) -> Option<&RequestMetrics> {
        self.requests.iter().find(|r| r.request == id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("event {index} ({kind}): {message}")]
pub struct ReplayError {
    pub index: usize,
    pub kind: EventKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Holder {
    Ground,
    Aircraft(String),
    Deck(String),
    /// Taken from a deck, the receiving aircraft still loading.
    Loading(String, String),
    Delivered,
}

#[derive(Debug, Clone)]
struct Track {
    pos: GeoPoint,
    t: Millis,
    fuel: f64,
    flying: bool,
    /// Watercraft the aircraft is working at, if any.
    deck: Option<String>,
}

/// Verifies a log against the scenario it claims to come from: timestamps never go
/// backwards, custody passes hand to hand in order, no aircraft moves faster than its
/// cruise speed and every flight leg was within fuel limits.
pub fn replay_check(scenario: &Scenario, events: &[Event]) -> Result<(), ReplayError> {
    let world = scenario.world();
    let params = &world.params;
    let mut holders: BTreeMap<&str, Holder> = BTreeMap::new();
    let mut tracks: BTreeMap<&str, Track> = world
        .aircraft
        .iter()
        .map(|a| {
            (
                a.id.as_str(),
                Track {
                    pos: a.position,
                    t: 0,
                    fuel: a.fuel_range_remaining.meters(),
                    flying: false,
                    deck: None,
                },
            )
        })
        .collect();

    for (index, e) in events.iter().enumerate() {
        let fail = |message: String| ReplayError {
            index,
            kind: e.kind,
            message,
        };
        if index > 0 && events[index - 1].t_ms > e.t_ms {
            return Err(fail(format!("time went backwards from {} ms", events[index - 1].t_ms)));
        }
        let req = match e.request.as_deref() {
            Some(id) => Some(world.request(id).ok_or_else(|| fail(format!("unknown request {id}")))?),
            None => None,
        };
        let wc = match e.watercraft.as_deref() {
            Some(id) => Some(world.watercraft(id).ok_or_else(|| fail(format!("unknown watercraft {id}")))?),
            None => None,
        };
        let here = |t: Millis| wc.map(|w| watercraft_position(w, ms_to_secs(t)));

        // custody
        if let Some(r) = req {
            let holder = holders.get(r.id.as_str()).cloned();
            let ac = e.aircraft.clone().unwrap_or_default();
            let next = match (e.kind, holder) {
                (EventKind::RequestArrival, None) => {
                    if e.t_ms < r.time_ms() {
                        return Err(fail("request arrived before its time".into()));
                    }
                    Holder::Ground
                }
                (EventKind::RequestArrival, Some(_)) => return Err(fail("request arrived twice".into())),
                (_, None) => return Err(fail(format!("{} before arrival", r.id))),
                (EventKind::Launch, Some(h)) => h,
                (EventKind::ArrivePickup, Some(Holder::Ground)) => Holder::Ground,
                (EventKind::ServiceComplete, Some(Holder::Ground)) => Holder::Aircraft(ac),
                (EventKind::ServiceComplete, Some(Holder::Loading(w, a))) if a == ac => {
                    tracks.get_mut(ac.as_str()).map(|t| t.deck = Some(w));
                    Holder::Aircraft(ac)
                }
                (EventKind::PatientDropoff, Some(Holder::Aircraft(a))) if a == ac => {
                    Holder::Deck(e.watercraft.clone().unwrap_or_default())
                }
                (EventKind::PatientPickup, Some(Holder::Deck(w))) if Some(&w) == e.watercraft.as_ref() => {
                    Holder::Loading(w, ac)
                }
                (EventKind::ArriveFacility, Some(Holder::Aircraft(a))) if a == ac => Holder::Aircraft(a),
                (EventKind::Delivered, Some(Holder::Aircraft(a))) if a == ac => {
                    if e.facility.as_deref() != Some(r.destination.as_str()) {
                        return Err(fail(format!("delivered to {:?}, expected {}", e.facility, r.destination)));
                    }
                    Holder::Delivered
                }
                (kind, Some(h)) => return Err(fail(format!("{kind} while patient held by {h:?}"))),
            };
            holders.insert(r.id.as_str(), next);
        }

        // kinematics and fuel
        let Some(ac_id) = e.aircraft.as_deref() else { continue };
        let ac = world
            .aircraft(ac_id)
            .ok_or_else(|| fail(format!("unknown aircraft {ac_id}")))?;
        let track = tracks.get_mut(ac_id).expect("every aircraft has a track");
        let fac_pos = e
            .facility
            .as_deref()
            .and_then(|f| world.facility(f))
            .map(|f| f.location);
        let home = |t: Millis| ac.home_at(&world.watercraft, ms_to_secs(t));
        let deck_pos = |t: Millis, deck: &Option<String>| {
            deck.as_deref()
                .and_then(|w| world.watercraft(w))
                .map(|w| watercraft_position(w, ms_to_secs(t)))
        };
        // position of the aircraft at this event, and whether it ends a flight leg
        let (pos, arrival_into_home) = match e.kind {
            EventKind::Launch => (home(e.t_ms), false),
            EventKind::ArrivePickup => (req.map(|r| r.location).unwrap_or(track.pos), false),
            EventKind::ServiceComplete => match deck_pos(e.t_ms, &track.deck) {
                Some(p) => (p, false),
                None => (track.pos, false),
            },
            EventKind::ArriveAXP | EventKind::PatientDropoff | EventKind::PatientPickup => {
                (here(e.t_ms).unwrap_or(track.pos), false)
            }
            EventKind::ArriveFacility | EventKind::Delivered => (fac_pos.unwrap_or(track.pos), false),
            EventKind::RefuelComplete => (home(e.t_ms - secs_to_ms(params.refuel_time)), true),
            EventKind::RequestArrival => continue,
        };
        let avail_ms = if arrival_into_home {
            e.t_ms - secs_to_ms(params.refuel_time) - track.t
        } else {
            e.t_ms - track.t
        };
        let d = gc_distance(track.pos, pos).meters();
        let slack = 1.0 + ac.cruise_speed * 0.002;
        let moving_deck = track.deck.is_some() && !track.flying;
        if !moving_deck && d > ac.cruise_speed * ms_to_secs(avail_ms.max(0)) + slack {
            return Err(fail(format!(
                "{ac_id} covered {d:.0} m in {:.1} s at {} m/s",
                ms_to_secs(avail_ms),
                ac.cruise_speed
            )));
        }
        if track.flying {
            let refuel_at_to = arrival_into_home && home_refuels(&world, ac.home_watercraft.as_deref());
            if !leg_feasible_with_fuel(LengthM(track.fuel + slack), track.pos, pos, refuel_at_to) {
                return Err(fail(format!("{ac_id} flew {d:.0} m with {:.0} m of fuel", track.fuel)));
            }
            track.fuel -= d;
        }
        let hoist = |mode: TransferMode| if mode == TransferMode::Hoist { ac.hoist_burn().meters() } else { 0.0 };
        match e.kind {
            EventKind::Launch => {
                track.flying = true;
                track.deck = None;
            }
            EventKind::ArrivePickup => track.flying = false,
            EventKind::ArriveAXP => {
                track.flying = false;
                track.deck = e.watercraft.clone();
            }
            EventKind::ServiceComplete => {
                let mode = match (&track.deck, req) {
                    (Some(w), _) => world.watercraft(w).map(transfer_mode).unwrap_or(TransferMode::Land),
                    (None, Some(r)) => r.pickup_mode,
                    (None, None) => TransferMode::Ground,
                };
                track.fuel -= hoist(mode);
                track.flying = true;
                track.deck = None;
            }
            EventKind::PatientDropoff => {
                track.fuel -= hoist(wc.map(transfer_mode).unwrap_or(TransferMode::Land));
                track.flying = true;
                track.deck = None;
            }
            EventKind::ArriveFacility => track.flying = false,
            EventKind::Delivered => track.flying = true,
            EventKind::RefuelComplete => {
                track.flying = false;
                track.fuel = ac.max_range.meters();
            }
            EventKind::PatientPickup | EventKind::RequestArrival => {}
        }
        track.pos = pos;
        track.t = e.t_ms;
    }
    Ok(())
}

fn home_refuels(world: &WorldState, home_watercraft: Option<&str>) -> bool {
    match home_watercraft {
        Some(id) => world.watercraft(id).is_some_and(|w| w.refuel),
        None => true,
    }
}

/// Replays a policy's recorded decisions against a fresh world; used to confirm a log.
pub struct Scripted {
    pub actions: Vec<DispatchAction>,
    next: usize,
}

impl Scripted {
    pub fn new(actions: Vec<DispatchAction>) -> Self {
        Scripted { actions, next: 0 }
    }
}

impl Policy for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn decide(&mut self, s: &WorldState) -> DispatchAction {
        let a = self
            .actions
            .get(self.next)
            .cloned()
            .unwrap_or_else(|| DispatchAction::hold(s.clock));
        self.next += 1;
        a
    }
}

/// Always holds; every request is eventually abandoned.
pub struct HoldPolicy;

impl Policy for HoldPolicy {
    fn name(&self) -> &str {
        "hold"
    }

    fn decide(&mut self, s: &WorldState) -> DispatchAction {
        DispatchAction::hold(s.clock)
    }
}
