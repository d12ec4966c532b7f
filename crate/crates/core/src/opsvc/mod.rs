//! Operations service: one live planning session that a dispatcher console drives.
//!
//! The session holds an immutable snapshot behind an `Arc`. Reads clone the `Arc`;
//! mutations are serialized, build a new snapshot, bump the revision by one and
//! broadcast exactly one [`Broadcast`] per revision. Planning runs on a snapshot and
//! never touches live state.

use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::broadcast;

use crate::geo::GeoPoint;
use crate::planner::{self, PlanError, PlannerConfig, Recommendation, TimelineEntry};
use crate::scenario::{self, Scenario, ScenarioError};
use crate::simkit::Event;
use crate::smdp::{self, build_mission, DispatchAction, MeanService};
use crate::world::{
    ms_to_secs, radius_of_action, secs_to_ms, watercraft_position, AircraftStatus, EvacRequest, InTransit,
    MedLevel, PositionFix, TreatmentFacility, WorldState,
};
use crate::zones::{self, geojson, ZoneError};

mod http;

pub use http::{router, serve, PORT_ENV};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpsError {
    #[error("no active session")]
    NoSession,
    #[error("unknown or not pending request {0:?}")]
    UnknownRequest(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("position fix for {id} at {t} s is older than the last fix at {last} s")]
    StaleFix { id: String, t: f64, last: f64 },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

impl OpsError {
    pub fn code(&self) -> &'static str {
        match self {
            OpsError::NoSession => "no_session",
            OpsError::UnknownRequest(_) => "unknown_request",
            OpsError::UnknownEntity(_) => "unknown_entity",
            OpsError::StaleFix { .. } => "stale_fix",
            OpsError::Validation(_) => "validation_error",
            OpsError::Infeasible(_) => "infeasible",
            OpsError::IllegalAction(_) => "illegal_action",
            OpsError::Plan(_) => "plan_error",
        }
    }
}

impl From<ScenarioError> for OpsError {
    fn from(e: ScenarioError) -> Self {
        OpsError::Validation(e.to_string())
    }
}

/// An immutable session snapshot.
#[derive(Debug, Clone)]
pub struct Session {
    pub scenario: Scenario,
    pub state: WorldState,
    pub revision: u64,
    /// Last fix time per entity id, seconds.
    last_fix: Vec<(String, f64)>,
}

impl Session {
    fn last_fix(&self, id: &str) -> Option<f64> {
        self.last_fix.iter().find(|(k, _)| k == id).map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftDoc {
    pub id: String,
    pub status: AircraftStatus,
    pub position: GeoPoint,
    pub home_base: GeoPoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub home_watercraft: Option<String>,
    pub fuel_range_remaining_m: f64,
    pub max_range_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tasked: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatercraftDoc {
    pub id: String,
    pub position: GeoPoint,
    pub helipad: bool,
    pub refuel: bool,
    pub med_level: MedLevel,
    pub fixes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryDoc {
    pub request_id: String,
    /// Seconds.
    pub time: f64,
}

/// Everything the console shows, at one revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub revision: u64,
    pub scenario: String,
    /// Seconds.
    pub clock: f64,
    pub aircraft: Vec<AircraftDoc>,
    pub watercraft: Vec<WatercraftDoc>,
    pub facilities: Vec<TreatmentFacility>,
    pub pending_requests: Vec<EvacRequest>,
    /// Known requests whose time has not come yet.
    pub scheduled_requests: Vec<EvacRequest>,
    pub in_transit: Vec<InTransit>,
    pub delivered: Vec<DeliveryDoc>,
}

/// One per revision, sent to every subscriber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Broadcast {
    pub revision: u64,
    /// Seconds.
    pub clock: f64,
    pub event: BroadcastEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BroadcastEvent {
    SessionStarted { scenario: String },
    RequestSubmitted { request: EvacRequest, fired: Vec<Event> },
    Committed { action: DispatchAction, fired: Vec<Event> },
    PositionFix { id: String, time: f64, position: GeoPoint },
    Tick { fired: Vec<Event> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    /// Bundled id or path.
    #[serde(default)]
    pub scenario: Option<String>,
    /// Inline scenario document; takes precedence over `scenario`.
    #[serde(default)]
    pub scenario_json: Option<Value>,
    /// Keep the requests scripted in the scenario file. Default true.
    #[serde(default)]
    pub include_requests: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub request_id: String,
    #[serde(default)]
    pub config: Option<PlannerConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub request_id: String,
    /// Exchange watercraft to use.
    #[serde(default)]
    pub forced_axp: Option<String>,
    /// Pickup aircraft to use.
    #[serde(default)]
    pub forced_aircraft: Option<String>,
    /// Fly straight to the facility, no exchange.
    #[serde(default)]
    pub direct: bool,
    /// Planner settings when nothing is forced.
    #[serde(default)]
    pub config: Option<PlannerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub action: DispatchAction,
    pub predicted_timeline: Vec<TimelineEntry>,
    /// Seconds from the request time to handover at the facility.
    pub total_time: f64,
    /// Seconds.
    pub delivered_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionRequest {
    pub id: String,
    /// Seconds.
    pub t: f64,
    pub position: GeoPoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRequest {
    /// Advance to this time, seconds.
    #[serde(default)]
    pub to: Option<f64>,
    /// Advance by this many seconds.
    #[serde(default)]
    pub by: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneQuery {
    /// Aircraft whose home (at `t0`) and radius of action define the zone.
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
}

/// The session and its subscriber channel. Cheap to clone.
#[derive(Clone)]
pub struct OpsService {
    current: Arc<Mutex<Option<Arc<Session>>>>,
    // serializes mutations; held across snapshot swap and broadcast
    writer: Arc<Mutex<()>>,
    events: broadcast::Sender<Broadcast>,
}

impl Default for OpsService {
    fn default() -> Self {
        Self::new()
    }
}

impl OpsService {
    pub fn new() -> Self {
        let (events, _) = broadcast::channel(4096);
        OpsService {
            current: Arc::new(Mutex::new(None)),
            writer: Arc::new(Mutex::new(())),
            events,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Broadcast> {
        self.events.subscribe()
    }

    /// Open subscriptions, including WebSocket clients.
    pub fn subscriber_count(&self) -> usize {
        self.events.receiver_count()
    }

    pub fn snapshot(&self) -> Result<Arc<Session>, OpsError> {
        self.current.lock().expect("session lock").clone().ok_or(OpsError::NoSession)
    }

    fn mutate(
        &self,
        f: impl FnOnce(Option<&Session>) -> Result<(Session, BroadcastEvent), OpsError>,
    ) -> Result<Ack, OpsError> {
        let _w = self.writer.lock().expect("writer lock");
        let prev = self.current.lock().expect("session lock").clone();
        let (mut next, event) = f(prev.as_deref())?;
        next.revision = prev.map_or(0, |p| p.revision + 1);
        let msg = Broadcast {
            revision: next.revision,
            clock: ms_to_secs(next.state.clock),
            event,
        };
        let ack = Ack { revision: next.revision };
        *self.current.lock().expect("session lock") = Some(Arc::new(next));
        // no subscribers is fine
        let _ = self.events.send(msg);
        Ok(ack)
    }

    fn mutate_session(&self, f: impl FnOnce(&mut Session) -> Result<BroadcastEvent, OpsError>) -> Result<Ack, OpsError> {
        self.mutate(|prev| {
            let mut s = prev.ok_or(OpsError::NoSession)?.clone();
            let event = f(&mut s)?;
            Ok((s, event))
        })
    }

    /// Replaces any session with a fresh one at clock 0.
    pub fn start_session(&self, scenario: Scenario) -> Result<Ack, OpsError> {
        self.mutate(|_| {
            let state = scenario.initial_state();
            let id = scenario.id.clone();
            let session = Session { scenario, state, revision: 0, last_fix: Vec::new() };
            Ok((session, BroadcastEvent::SessionStarted { scenario: id }))
        })
    }

    pub fn start_from_request(&self, req: &SessionRequest) -> Result<Ack, OpsError> {
        let mut sc = match (&req.scenario_json, &req.scenario) {
            (Some(doc), _) => scenario::parse(&doc.to_string())?,
            (None, Some(id)) => scenario::load(id)?,
            (None, None) => return Err(OpsError::Validation("give scenario or scenario_json".into())),
        };
        if req.include_requests == Some(false) {
            sc.requests.clear();
        }
        self.start_session(sc)
    }

    pub fn state(&self) -> Result<StateDoc, OpsError> {
        Ok(state_doc(&*self.snapshot()?))
    }

    pub fn submit_request(&self, req: EvacRequest) -> Result<Ack, OpsError> {
        self.mutate_session(|s| {
            validate_request(&s.state, &req)?;
            s.state.requests.push(req.clone());
            s.state.schedule_request(req.clone());
            let clock = s.state.clock;
            let fired = s.state.advance_to(clock);
            Ok(BroadcastEvent::RequestSubmitted { request: req, fired })
        })
    }

    /// Planner advice for one pending request. Read-only.
    pub fn recommend(&self, request_id: &str, cfg: &PlannerConfig) -> Result<Recommendation, OpsError> {
        let snap = self.snapshot()?;
        recommend_on(&snap.state, request_id, cfg)
    }

    /// Predicted outcome of dispatching `request_id` with the forced choices. Read-only.
    pub fn whatif(&self, q: &WhatIfRequest) -> Result<WhatIf, OpsError> {
        let snap = self.snapshot()?;
        let s = &snap.state;
        let req = pending(s, &q.request_id)?;
        for id in q.forced_axp.iter() {
            if s.watercraft(id).is_none() {
                return Err(OpsError::UnknownEntity(id.clone()));
            }
        }
        for id in q.forced_aircraft.iter() {
            if s.aircraft(id).is_none() {
                return Err(OpsError::UnknownEntity(id.clone()));
            }
        }
        let action = if q.forced_axp.is_none() && q.forced_aircraft.is_none() && !q.direct {
            let cfg = q.config.clone().unwrap_or_default();
            let rec = recommend_on(s, &q.request_id, &cfg)?;
            if rec.action.is_hold() {
                return Err(OpsError::Infeasible(format!("no dispatch possible for {}", q.request_id)));
            }
            rec.action
        } else {
            smdp::request_candidates(s, &q.request_id, false)
                .into_iter()
                .filter(|(a, _)| {
                    (!q.direct || a.axp_watercraft_id.is_none())
                        && (q.forced_axp.is_none() || a.axp_watercraft_id == q.forced_axp)
                        && (q.forced_aircraft.is_none() || a.aircraft_id == q.forced_aircraft)
                })
                .min_by(|(a, ma), (b, mb)| ma.delivered_at.cmp(&mb.delivered_at).then_with(|| a.cmp(b)))
                .map(|(a, _)| a)
                .ok_or_else(|| OpsError::Infeasible("the forced assignment violates leg feasibility".into()))?
        };
        let mission = build_mission(s, &action, &mut MeanService).map_err(|e| OpsError::Infeasible(e.to_string()))?;
        Ok(WhatIf {
            predicted_timeline: mission.events.iter().map(|e| TimelineEntry::from(&e.event)).collect(),
            total_time: ms_to_secs(mission.delivered_at) - req.time,
            delivered_at: ms_to_secs(mission.delivered_at),
            action,
        })
    }

    pub fn commit(&self, action: DispatchAction) -> Result<Ack, OpsError> {
        self.mutate_session(|s| {
            // deterministic commit: mean service times
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut state = s.state.clone();
            if state.params.stochastic {
                let mut p = (*state.params).clone();
                p.stochastic = false;
                state.params = Arc::new(p);
            }
            let (mut next, fired) =
                smdp::apply_action(&state, &action, &mut rng).map_err(|e| OpsError::IllegalAction(e.to_string()))?;
            next.params = s.state.params.clone();
            s.state = next;
            Ok(BroadcastEvent::Committed { action, fired })
        })
    }

    /// Records a position report. Watercraft fixes override the declared route from
    /// then on; an aircraft fix moves the aircraft only while it is on the ground.
    pub fn ingest_position(&self, fix: &PositionRequest) -> Result<Ack, OpsError> {
        if !fix.t.is_finite() {
            return Err(OpsError::Validation("fix time must be finite".into()));
        }
        self.mutate_session(|s| {
            let is_wc = s.state.watercraft(&fix.id).is_some();
            let is_ac = s.state.aircraft(&fix.id).is_some();
            if !is_wc && !is_ac {
                return Err(OpsError::UnknownEntity(fix.id.clone()));
            }
            if let Some(last) = s.last_fix(&fix.id) {
                if fix.t < last {
                    return Err(OpsError::StaleFix { id: fix.id.clone(), t: fix.t, last });
                }
            }
            if is_wc {
                let track = |w: &mut crate::world::Watercraft| {
                    let pf = PositionFix { time: fix.t, position: fix.position };
                    match w.override_track.last_mut() {
                        Some(last) if last.time == fix.t => *last = pf,
                        _ => w.override_track.push(pf),
                    }
                };
                s.state.watercraft.iter_mut().filter(|w| w.id == fix.id).for_each(track);
                s.scenario.watercraft.iter_mut().filter(|w| w.id == fix.id).for_each(track);
            } else if let Some(ac) = s.state.aircraft.iter_mut().find(|a| a.id == fix.id) {
                if ac.leg.is_none() && ac.status == AircraftStatus::Idle {
                    ac.position = fix.position;
                }
            }
            s.last_fix.retain(|(k, _)| k != &fix.id);
            s.last_fix.push((fix.id.clone(), fix.t));
            Ok(BroadcastEvent::PositionFix { id: fix.id.clone(), time: fix.t, position: fix.position })
        })
    }

    /// Moves the session clock forward, firing due events. With neither `to` nor `by`,
    /// advances to the next decision epoch (or stays put when there is none).
    pub fn tick(&self, q: &TickRequest) -> Result<Ack, OpsError> {
        self.mutate_session(|s| {
            let now = s.state.clock;
            let target = match (q.to, q.by) {
                (Some(_), Some(_)) => return Err(OpsError::Validation("give either to or by".into())),
                (Some(t), None) => secs_to_ms(t),
                (None, Some(d)) => {
                    if !(d >= 0.0) {
                        return Err(OpsError::Validation("by must be non-negative".into()));
                    }
                    now + secs_to_ms(d)
                }
                (None, None) => s.state.next_epoch_time().unwrap_or(now),
            };
            if target < now {
                return Err(OpsError::Validation(format!(
                    "cannot move the clock back from {} s to {} s",
                    ms_to_secs(now),
                    ms_to_secs(target)
                )));
            }
            let fired = s.state.advance_to(target);
            Ok(BroadcastEvent::Tick { fired })
        })
    }

    /// Opportunity zone between two aircraft and its watercraft windows, as GeoJSON.
    /// Uses the session's watercraft, including any position fixes.
    pub fn zones(&self, q: &ZoneQuery) -> Result<Value, OpsError> {
        let snap = self.snapshot()?;
        let s = &snap.state;
        let t0 = q.t0.unwrap_or(ms_to_secs(s.clock));
        let t1 = q.t1.unwrap_or(snap.scenario.horizon);
        let dt = q.dt.unwrap_or(snap.scenario.zone_dt);
        let ac = |id: &str| s.aircraft(id).ok_or_else(|| OpsError::UnknownEntity(id.to_string()));
        let (a, b) = (ac(&q.a)?, ac(&q.b)?);
        let zone = zones::opportunity_zone(
            a.home_at(&s.watercraft, t0),
            radius_of_action(a.max_range),
            b.home_at(&s.watercraft, t0),
            radius_of_action(b.max_range),
        )
        .map_err(zone_err)?;
        let windows = zones::zone_windows(&zone, &s.watercraft, (t0, t1), dt).map_err(zone_err)?;
        Ok(geojson::feature_collection(geojson::zone_features(&zone, &windows)))
    }
}

fn zone_err(e: ZoneError) -> OpsError {
    match e {
        ZoneError::NoFeasibleChain => OpsError::Infeasible(e.to_string()),
        ZoneError::InvalidInput(m) => OpsError::Validation(m),
    }
}

fn pending<'a>(s: &'a WorldState, id: &str) -> Result<&'a EvacRequest, OpsError> {
    if !s.pending_requests.iter().any(|r| r == id) {
        return Err(OpsError::UnknownRequest(id.to_string()));
    }
    s.request(id).ok_or_else(|| OpsError::UnknownRequest(id.to_string()))
}

fn recommend_on(s: &WorldState, request_id: &str, cfg: &PlannerConfig) -> Result<Recommendation, OpsError> {
    pending(s, request_id)?;
    let id = request_id.to_string();
    Ok(planner::plan_filtered(s, cfg, &move |a: &DispatchAction| {
        a.request_id.as_deref() == Some(id.as_str())
    })?)
}

fn validate_request(s: &WorldState, r: &EvacRequest) -> Result<(), OpsError> {
    let bad = |m: String| Err(OpsError::Validation(m));
    if r.id.trim().is_empty() {
        return bad("id must not be empty".into());
    }
    if s.request(&r.id).is_some() {
        return bad(format!("duplicate request id {:?}", r.id));
    }
    if !(r.time.is_finite() && r.time >= 0.0) {
        return bad("time must be a non-negative number of seconds".into());
    }
    if r.patient_count == 0 {
        return bad("patient_count must be at least 1".into());
    }
    if s.facility(&r.destination).is_none() {
        return bad(format!("unknown destination facility {:?}", r.destination));
    }
    if let Some(w) = &r.required_axp {
        if s.watercraft(w).is_none() {
            return bad(format!("unknown required_axp watercraft {w:?}"));
        }
    }
    Ok(())
}

pub fn state_doc(session: &Session) -> StateDoc {
    let s = &session.state;
    let secs = ms_to_secs(s.clock);
    let requests = |ids: &[String]| ids.iter().filter_map(|id| s.request(id).cloned()).collect::<Vec<_>>();
    StateDoc {
        revision: session.revision,
        scenario: session.scenario.id.clone(),
        clock: secs,
        aircraft: s
            .aircraft
            .iter()
            .map(|a| AircraftDoc {
                id: a.id.clone(),
                status: a.status,
                position: a.position_at(s.clock),
                home_base: a.home_base,
                home_watercraft: a.home_watercraft.clone(),
                fuel_range_remaining_m: a.fuel_range_remaining.meters(),
                max_range_m: a.max_range.meters(),
                tasked: a.tasked.clone(),
            })
            .collect(),
        watercraft: s
            .watercraft
            .iter()
            .map(|w| WatercraftDoc {
                id: w.id.clone(),
                position: watercraft_position(w, secs),
                helipad: w.helipad,
                refuel: w.refuel,
                med_level: w.med_level,
                fixes: w.override_track.len(),
            })
            .collect(),
        facilities: s.facilities.clone(),
        pending_requests: requests(&s.pending_requests),
        scheduled_requests: requests(&s.scheduled),
        in_transit: s.in_transit.clone(),
        delivered: s
            .delivered
            .iter()
            .map(|d| DeliveryDoc { request_id: d.request_id.clone(), time: ms_to_secs(d.time) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::ActionKind;
    use crate::world::Precedence;

    fn mpw() -> OpsService {
        let ops = OpsService::new();
        ops.start_session(scenario::load("mpw2023").unwrap()).unwrap();
        ops
    }

    fn quick() -> PlannerConfig {
        PlannerConfig { iterations: 300, ..PlannerConfig::default() }
    }

    #[test]
    fn no_session_errors() {
        let ops = OpsService::new();
        assert_eq!(ops.state(), Err(OpsError::NoSession));
        assert_eq!(ops.tick(&TickRequest::default()), Err(OpsError::NoSession));
    }

    #[test]
    fn fresh_mpw_session() {
        let st = mpw().state().unwrap();
        assert_eq!(st.revision, 0);
        assert_eq!(st.aircraft.len(), 2);
        assert!(st.aircraft.iter().all(|a| a.status == AircraftStatus::Idle));
        assert_eq!(st.watercraft[0].id, "LSV-3");
        assert_eq!(st.scheduled_requests.len(), 1);
    }

    #[test]
    fn recommend_names_the_lsv_and_changes_nothing() {
        let ops = mpw();
        ops.tick(&TickRequest { to: Some(600.0), by: None }).unwrap();
        let before = ops.state().unwrap();
        let rec = ops.recommend("PATIENT-1", &quick()).unwrap();
        assert_eq!(rec.action.kind, ActionKind::DispatchViaAxp);
        assert_eq!(rec.action.axp_watercraft_id.as_deref(), Some("LSV-3"));
        assert_eq!(ops.recommend("PATIENT-1", &quick()).unwrap(), rec);
        let w = ops.whatif(&WhatIfRequest { request_id: "PATIENT-1".into(), config: Some(quick()), ..Default::default() }).unwrap();
        assert_eq!(w.action, rec.action);
        assert_eq!(w.predicted_timeline, rec.predicted_timeline);
        assert_eq!(ops.state().unwrap(), before);
        assert!(matches!(ops.recommend("NOPE", &quick()), Err(OpsError::UnknownRequest(_))));
    }

    #[test]
    fn commit_moves_aircraft_and_bumps_revision() {
        let ops = mpw();
        ops.tick(&TickRequest { to: Some(600.0), by: None }).unwrap();
        let rec = ops.recommend("PATIENT-1", &quick()).unwrap();
        let r0 = ops.state().unwrap().revision;
        assert_eq!(ops.commit(rec.action.clone()).unwrap().revision, r0 + 1);
        let st = ops.state().unwrap();
        let pilot = rec.action.aircraft_id.as_deref().unwrap();
        assert_eq!(st.aircraft.iter().find(|a| a.id == pilot).unwrap().status, AircraftStatus::Enroute);
        assert!(matches!(ops.commit(rec.action), Err(OpsError::IllegalAction(_))));
        assert_eq!(ops.state().unwrap().revision, r0 + 1);
        let before = ops.state().unwrap();
        ops.commit(DispatchAction::hold(secs_to_ms(600.0))).unwrap();
        let after = ops.state().unwrap();
        assert_eq!(after.revision, before.revision + 1);
        assert_eq!(after.aircraft, before.aircraft);
    }

    #[test]
    fn submitted_requests_keep_their_timestamp() {
        let ops = mpw();
        ops.tick(&TickRequest { to: Some(900.0), by: None }).unwrap();
        let st = ops.state().unwrap();
        let mut req = st.pending_requests[0].clone();
        req.id = "PATIENT-2".into();
        req.time = 850.0;
        req.required_axp = None;
        req.precedence = Precedence::Priority;
        ops.submit_request(req.clone()).unwrap();
        let st2 = ops.state().unwrap();
        assert_eq!(st2.pending_requests.len(), st.pending_requests.len() + 1);
        assert_eq!(st2.pending_requests.iter().find(|r| r.id == "PATIENT-2").unwrap().time, 850.0);
        assert!(matches!(ops.submit_request(req), Err(OpsError::Validation(_))));
    }

    #[test]
    fn fixes_are_ordered_per_entity() {
        let ops = mpw();
        let p = GeoPoint::new(21.3, -157.9).unwrap();
        ops.ingest_position(&PositionRequest { id: "LSV-3".into(), t: 100.0, position: p }).unwrap();
        assert!(matches!(
            ops.ingest_position(&PositionRequest { id: "LSV-3".into(), t: 50.0, position: p }),
            Err(OpsError::StaleFix { .. })
        ));
        assert!(matches!(
            ops.ingest_position(&PositionRequest { id: "GHOST".into(), t: 50.0, position: p }),
            Err(OpsError::UnknownEntity(_))
        ));
        ops.tick(&TickRequest { to: Some(100.0), by: None }).unwrap();
        assert_eq!(ops.state().unwrap().watercraft[0].position, p);
    }

    #[test]
    fn every_mutation_is_broadcast_once_in_order() {
        let ops = OpsService::new();
        let mut rx = ops.subscribe();
        ops.start_session(scenario::load("mpw2023").unwrap()).unwrap();
        ops.tick(&TickRequest { to: Some(600.0), by: None }).unwrap();
        let _ = ops.tick(&TickRequest { to: Some(10.0), by: None }); // rejected: no broadcast
        ops.commit(DispatchAction::hold(secs_to_ms(600.0))).unwrap();
        let revs: Vec<u64> = std::iter::from_fn(|| rx.try_recv().ok()).map(|b| b.revision).collect();
        assert_eq!(revs, vec![0, 1, 2]);
    }
}
