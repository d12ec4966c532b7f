//! World snapshots and the event calendar that moves them forward.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    Aircraft, AircraftStatus, EvacRequest, FlightLeg, Millis, PrecedenceWeights,
    TreatmentFacility, Watercraft,
};
use crate::geo::{GeoPoint, LengthM};
use crate::simkit::{Event, EventKind};

/// Static parameters of the dispatch model shared by every snapshot of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub weights: PrecedenceWeights,
    /// Sample service durations instead of using their means.
    pub stochastic: bool,
    /// Half-width of the triangular service-time noise, as a fraction of the mean.
    pub noise_fraction: f64,
    /// Seconds to refuel at a base or refuel-capable watercraft.
    pub refuel_time: f64,
    /// Seconds between a drop-off at an exchange watercraft and the earliest pickup.
    pub axp_clearance: f64,
    /// Seconds of undelivered time charged per patient left unserved when an episode ends.
    pub abandon_penalty: f64,
    /// Launch times are rounded up to this grid, in seconds.
    pub launch_grid: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            weights: PrecedenceWeights::default(),
            stochastic: false,
            noise_fraction: 0.2,
            refuel_time: 600.0,
            axp_clearance: 60.0,
            abandon_penalty: 86_400.0,
            launch_grid: 10.0,
        }
    }
}

impl ModelParams {
    pub fn grid_ms(&self) -> Millis {
        super::secs_to_ms(self.launch_grid).max(1)
    }

    /// Smallest launch slot at or after `t`.
    pub fn launch_slot(&self, t: Millis) -> Millis {
        let g = self.grid_ms();
        t.div_euclid(g) * g + if t.rem_euclid(g) == 0 { 0 } else { g }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Custody {
    Ground,
    Aircraft(String),
    Watercraft(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitStage {
    AwaitingPickup,
    ToAxp,
    AtAxp,
    ToFacility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InTransit {
    pub request_id: String,
    pub carrier: Custody,
    pub stage: TransitStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub request_id: String,
    pub time: Millis,
}

/// New aircraft state written by an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftUpdate {
    pub status: AircraftStatus,
    pub position: GeoPoint,
    pub leg: Option<FlightLeg>,
    pub fuel: LengthM,
    /// Clears the tasking; the aircraft is free again.
    pub release: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CustodyUpdate {
    Transit { carrier: Custody, stage: TransitStage },
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub event: Event,
    pub aircraft: Option<AircraftUpdate>,
    pub custody: Option<CustodyUpdate>,
}

impl ScheduledEvent {
    pub fn bare(event: Event) -> Self {
        ScheduledEvent {
            event,
            aircraft: None,
            custody: None,
        }
    }
}

/// Full snapshot of the world. Snapshots are values; transitions build new ones.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub clock: Millis,
    pub aircraft: Vec<Aircraft>,
    pub watercraft: Vec<Watercraft>,
    pub facilities: Vec<TreatmentFacility>,
    /// Every request known to the world, arrived or not.
    pub requests: Vec<EvacRequest>,
    /// Scripted requests that have not arrived yet.
    pub scheduled: Vec<String>,
    pub pending_requests: Vec<String>,
    pub in_transit: Vec<InTransit>,
    pub delivered: Vec<Delivery>,
    /// Requests dropped when an episode ended with nothing left that could serve them.
    pub abandoned: Vec<Delivery>,
    /// Future events, sorted.
    pub calendar: Vec<ScheduledEvent>,
    pub params: Arc<ModelParams>,
}

impl WorldState {
    pub fn new(
        aircraft: Vec<Aircraft>,
        watercraft: Vec<Watercraft>,
        facilities: Vec<TreatmentFacility>,
        requests: Vec<EvacRequest>,
        params: ModelParams,
    ) -> Self {
        let mut state = WorldState {
            clock: 0,
            aircraft,
            watercraft,
            facilities,
            requests: Vec::new(),
            scheduled: Vec::new(),
            pending_requests: Vec::new(),
            in_transit: Vec::new(),
            delivered: Vec::new(),
            abandoned: Vec::new(),
            calendar: Vec::new(),
            params: Arc::new(params),
        };
        state.aircraft.sort_by(|a, b| a.id.cmp(&b.id));
        state.watercraft.sort_by(|a, b| a.id.cmp(&b.id));
        for r in requests {
            state.schedule_request(r);
        }
        state
    }

    /// Adds a request that arrives at its own timestamp (immediately if already past).
    pub fn schedule_request(&mut self, r: EvacRequest) {
        let t = r.time_ms().max(self.clock);
        self.scheduled.push(r.id.clone());
        self.insert_events(vec![ScheduledEvent::bare(
            Event::new(t, EventKind::RequestArrival).request(&r.id),
        )]);
        self.requests.push(r);
    }

    pub fn aircraft(&self, id: &str) -> Option<&Aircraft> {
        self.aircraft.iter().find(|a| a.id == id)
    }

    pub fn watercraft(&self, id: &str) -> Option<&Watercraft> {
        self.watercraft.iter().find(|w| w.id == id)
    }

    pub fn facility(&self, id: &str) -> Option<&TreatmentFacility> {
        self.facilities.iter().find(|f| f.id == id)
    }

    pub fn request(&self, id: &str) -> Option<&EvacRequest> {
        self.requests.iter().find(|r| r.id == id)
    }

    pub fn transit(&self, id: &str) -> Option<&InTransit> {
        self.in_transit.iter().find(|t| t.request_id == id)
    }

    pub fn delivery_time(&self, id: &str) -> Option<Millis> {
        self.delivered.iter().find(|d| d.request_id == id).map(|d| d.time)
    }

    /// Patients (weighted) not yet delivered, with each request's weight.
    pub fn outstanding(&self) -> impl Iterator<Item = &EvacRequest> {
        self.pending_requests
            .iter()
            .chain(self.in_transit.iter().map(|t| &t.request_id))
            .filter_map(|id| self.request(id))
    }

    pub fn insert_events(&mut self, events: Vec<ScheduledEvent>) {
        self.calendar.extend(events);
        self.calendar.sort_by(|a, b| a.event.cmp(&b.event));
    }

    /// Time of the next epoch-triggering event strictly after the clock.
    pub fn next_epoch_time(&self) -> Option<Millis> {
        self.calendar
            .iter()
            .filter(|e| e.event.t_ms > self.clock && e.event.kind.is_epoch())
            .map(|e| e.event.t_ms)
            .next()
    }

    /// Applies every calendar event up to and including `t` and moves the clock there.
    pub fn advance_to(&mut self, t: Millis) -> Vec<Event> {
        let due = self.calendar.partition_point(|e| e.event.t_ms <= t);
        let fired: Vec<ScheduledEvent> = self.calendar.drain(..due).collect();
        let mut log = Vec::with_capacity(fired.len());
        for se in fired {
            self.apply(&se);
            log.push(se.event);
        }
        self.clock = self.clock.max(t);
        log
    }

    /// Fires every remaining calendar event.
    pub fn drain_calendar(&mut self) -> Vec<Event> {
        match self.calendar.last() {
            Some(last) => {
                let t = last.event.t_ms;
                self.advance_to(t)
            }
            None => Vec::new(),
        }
    }

    fn apply(&mut self, se: &ScheduledEvent) {
        let ev = &se.event;
        if ev.kind == EventKind::RequestArrival {
            if let Some(id) = &ev.request {
                if let Some(pos) = self.scheduled.iter().position(|s| s == id) {
                    self.scheduled.remove(pos);
                    self.pending_requests.push(id.clone());
                }
            }
        }
        if let (Some(update), Some(id)) = (&se.aircraft, &ev.aircraft) {
            if let Some(ac) = self.aircraft.iter_mut().find(|a| &a.id == id) {
                ac.status = update.status;
                ac.position = update.position;
                ac.leg = update.leg;
                ac.fuel_range_remaining = update.fuel;
                if update.release {
                    ac.tasked = None;
                }
            }
        }
        if let (Some(update), Some(id)) = (&se.custody, &ev.request) {
            match update {
                CustodyUpdate::Transit { carrier, stage } => {
                    if let Some(t) = self.in_transit.iter_mut().find(|t| &t.request_id == id) {
                        t.carrier = carrier.clone();
                        t.stage = *stage;
                    }
                }
                CustodyUpdate::Delivered => {
                    if let Some(pos) = self.in_transit.iter().position(|t| &t.request_id == id) {
                        self.in_transit.remove(pos);
                        self.delivered.push(Delivery {
                            request_id: id.clone(),
                            time: ev.t_ms,
                        });
                    }
                }
            }
        }
    }

    /// Request ids across all partitions; each id appears exactly once.
    pub fn partition_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .scheduled
            .iter()
            .chain(&self.pending_requests)
            .cloned()
            .chain(self.in_transit.iter().map(|t| t.request_id.clone()))
            .chain(self.delivered.iter().map(|d| d.request_id.clone()))
            .chain(self.abandoned.iter().map(|d| d.request_id.clone()))
            .collect();
        ids.sort();
        ids
    }
}
