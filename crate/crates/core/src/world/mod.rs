//! Entity model and kinematics: aircraft, watercraft tracks, facilities, requests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, gc_distance, GeoPoint, LengthM};

mod state;

pub use state::{
    AircraftUpdate, Custody, CustodyUpdate, Delivery, InTransit, ModelParams, ScheduledEvent,
    TransitStage, WorldState,
};

/// Simulation time in integer milliseconds.
pub type Millis = i64;

pub fn secs_to_ms(s: f64) -> Millis {
    (s * 1000.0).round() as Millis
}

pub fn ms_to_secs(t: Millis) -> f64 {
    t as f64 / 1000.0
}

/// Slack allowed on leg-range comparisons so that exact-boundary legs stay feasible.
pub const LEG_TOLERANCE_M: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("{0}")]
    InvalidRoute(String),
    #[error("position fixes must be strictly increasing in time (fix {index})")]
    UnorderedFixes { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub waypoints: Vec<GeoPoint>,
    /// Meters per second, one per leg.
    pub leg_speeds: Vec<f64>,
    pub departure_time: f64,
    #[serde(rename = "loop")]
    pub loop_route: bool,
}

impl RoutePlan {
    pub fn stationary(at: GeoPoint) -> Self {
        RoutePlan {
            waypoints: vec![at],
            leg_speeds: vec![],
            departure_time: 0.0,
            loop_route: false,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.waypoints.is_empty() {
            return Err(WorldError::InvalidRoute("route needs at least one waypoint".into()));
        }
        if self.leg_speeds.len() + 1 != self.waypoints.len() {
            return Err(WorldError::InvalidRoute(format!(
                "{} waypoints need {} leg speeds, got {}",
                self.waypoints.len(),
                self.waypoints.len() - 1,
                self.leg_speeds.len()
            )));
        }
        if let Some(i) = self.leg_speeds.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(WorldError::InvalidRoute(format!("leg {i} speed must be positive")));
        }
        for (i, w) in self.waypoints.windows(2).enumerate() {
            if gc_distance(w[0], w[1]).meters() < 1.0 {
                return Err(WorldError::InvalidRoute(format!("waypoints {i} and {} coincide", i + 1)));
            }
        }
        if self.loop_route && self.waypoints.len() > 1 {
            let closing = gc_distance(self.waypoints[0], *self.waypoints.last().unwrap());
            if closing.meters() > 1.0 {
                return Err(WorldError::InvalidRoute(
                    "a looping route must end on its first waypoint".into(),
                ));
            }
        }
        Ok(())
    }

    fn leg_durations(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .zip(&self.leg_speeds)
            .map(|(w, v)| gc_distance(w[0], w[1]).meters() / v)
            .collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.leg_speeds.iter().copied().fold(0.0, f64::max)
    }

    pub fn position_at(&self, t: f64) -> GeoPoint {
        let first = self.waypoints[0];
        if self.waypoints.len() == 1 || t <= self.departure_time {
            return first;
        }
        let durations = self.leg_durations();
        let cycle: f64 = durations.iter().sum();
        let mut elapsed = t - self.departure_time;
        if elapsed >= cycle {
            if !self.loop_route {
                return *self.waypoints.last().unwrap();
            }
            elapsed %= cycle;
        }
        for (i, dur) in durations.iter().enumerate() {
            if elapsed <= *dur {
                return geo::interpolate(self.waypoints[i], self.waypoints[i + 1], elapsed / dur);
            }
            elapsed -= dur;
        }
        *self.waypoints.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedLevel {
    None,
    Medic,
    Role2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub time: f64,
    pub position: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Watercraft {
    pub id: String,
    pub route: RoutePlan,
    pub helipad: bool,
    pub refuel: bool,
    pub med_level: MedLevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub override_track: Vec<PositionFix>,
}

impl Watercraft {
    pub fn validate(&self) -> Result<(), WorldError> {
        self.route.validate()?;
        for (i, w) in self.override_track.windows(2).enumerate() {
            if w[1].time <= w[0].time {
                return Err(WorldError::UnorderedFixes { index: i + 1 });
            }
        }
        Ok(())
    }

    /// Upper bound on how fast the watercraft moves, declared route or fixes.
    pub fn max_speed(&self) -> f64 {
        let fix_speed = self
            .override_track
            .windows(2)
            .map(|w| gc_distance(w[0].position, w[1].position).meters() / (w[1].time - w[0].time))
            .fold(0.0, f64::max);
        self.route.max_speed().max(fix_speed)
    }
}

/// Position of a watercraft at time `t` (seconds).
///
/// Position fixes supersede the declared route: between fixes the track is interpolated
/// along the great circle, after the last fix it is dead-reckoned along the last fix
/// segment (or held at a lone fix). Before the first fix the route applies.
pub fn watercraft_position(w: &Watercraft, t: f64) -> GeoPoint {
    let fixes = &w.override_track;
    match fixes.first() {
        Some(first) if t >= first.time => {}
        _ => return w.route.position_at(t),
    }
    let idx = fixes.partition_point(|f| f.time <= t);
    if idx < fixes.len() {
        let (a, b) = (&fixes[idx - 1], &fixes[idx]);
        return geo::interpolate(a.position, b.position, (t - a.time) / (b.time - a.time));
    }
    let last = fixes[fixes.len() - 1];
    if fixes.len() < 2 || t == last.time {
        return last.position;
    }
    let prev = fixes[fixes.len() - 2];
    let dist = gc_distance(prev.position, last.position).meters();
    if dist < 1e-6 {
        return last.position;
    }
    let speed = dist / (last.time - prev.time);
    // continue on the great circle through prev and last
    let brg = geo::initial_bearing(prev.position, last.position).unwrap_or(0.0);
    let total = dist + speed * (t - last.time);
    geo::destination_point(prev.position, brg, LengthM(total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    Land,
    Hoist,
    /// Patient handed over on the ground at a point of injury or facility.
    Ground,
}

pub fn transfer_mode(w: &Watercraft) -> TransferMode {
    if w.helipad {
        TransferMode::Land
    } else {
        TransferMode::Hoist
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AircraftStatus {
    Idle,
    Enroute,
    OnStation,
    Returning,
}

/// A flight leg in progress, used to report positions between events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightLeg {
    pub from: GeoPoint,
    pub to: GeoPoint,
    pub depart: Millis,
    pub arrive: Millis,
}

impl FlightLeg {
    pub fn position_at(&self, t: Millis) -> GeoPoint {
        if self.arrive <= self.depart {
            return if t >= self.arrive { self.to } else { self.from };
        }
        let frac = (t - self.depart) as f64 / (self.arrive - self.depart) as f64;
        geo::interpolate(self.from, self.to, frac)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aircraft {
    pub id: String,
    pub home_base: GeoPoint,
    /// Set when the aircraft is stationed aboard a watercraft; its home then moves with it.
    pub home_watercraft: Option<String>,
    /// Meters per second.
    pub cruise_speed: f64,
    pub max_range: LengthM,
    pub status: AircraftStatus,
    pub fuel_range_remaining: LengthM,
    pub service_time_hoist: f64,
    pub service_time_land: f64,
    pub cabin_size: u32,
    /// Current position; meaningful while not on a leg.
    pub position: GeoPoint,
    pub leg: Option<FlightLeg>,
    /// Request this aircraft is committed to, including reservations that have not launched.
    pub tasked: Option<String>,
}

impl Aircraft {
    pub fn is_available(&self) -> bool {
        self.status == AircraftStatus::Idle && self.tasked.is_none()
    }

    pub fn position_at(&self, t: Millis) -> GeoPoint {
        match &self.leg {
            Some(leg) => leg.position_at(t),
            None => self.position,
        }
    }

    /// Range consumed by one hoist cycle, at cruise burn.
    pub fn hoist_burn(&self) -> LengthM {
        LengthM(self.service_time_hoist * self.cruise_speed)
    }

    pub fn service_time(&self, mode: TransferMode) -> f64 {
        match mode {
            TransferMode::Hoist => self.service_time_hoist,
            TransferMode::Land | TransferMode::Ground => self.service_time_land,
        }
    }

    /// Home position at time `t` (seconds): the base, or the host watercraft's position.
    pub fn home_at(&self, fleet: &[Watercraft], t: f64) -> GeoPoint {
        self.home_watercraft
            .as_ref()
            .and_then(|id| fleet.iter().find(|w| &w.id == id))
            .map(|w| watercraft_position(w, t))
            .unwrap_or(self.home_base)
    }
}

pub fn radius_of_action(max_range: LengthM) -> LengthM {
    max_range / 2.0
}

/// Whether `ac`, with its current fuel, may fly `from` -> `to`.
///
/// Without a refuel at `to` the aircraft must keep enough range to fly the same distance
/// back, so the leg may use only half of what remains.
pub fn leg_feasible(ac: &Aircraft, from: GeoPoint, to: GeoPoint, refuel_at_to: bool) -> bool {
    leg_feasible_with_fuel(ac.fuel_range_remaining, from, to, refuel_at_to)
}

pub fn leg_feasible_with_fuel(fuel: LengthM, from: GeoPoint, to: GeoPoint, refuel_at_to: bool) -> bool {
    let d = gc_distance(from, to).meters();
    let budget = if refuel_at_to { fuel.meters() } else { fuel.meters() / 2.0 };
    d <= budget + LEG_TOLERANCE_M
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacilityRole {
    #[serde(rename = "2")]
    Role2,
    #[serde(rename = "3")]
    Role3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentFacility {
    pub id: String,
    pub location: GeoPoint,
    pub role: FacilityRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precedence {
    Urgent,
    Priority,
    Routine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecedenceWeights {
    pub urgent: f64,
    pub priority: f64,
    pub routine: f64,
}

impl Default for PrecedenceWeights {
    fn default() -> Self {
        PrecedenceWeights {
            urgent: 4.0,
            priority: 2.0,
            routine: 1.0,
        }
    }
}

impl PrecedenceWeights {
    pub fn weight(&self, p: Precedence) -> f64 {
        match p {
            Precedence::Urgent => self.urgent,
            Precedence::Priority => self.priority,
            Precedence::Routine => self.routine,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        PrecedenceWeights {
            urgent: self.urgent * k,
            priority: self.priority * k,
            routine: self.routine * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacRequest {
    pub id: String,
    /// Seconds.
    pub time: f64,
    pub location: GeoPoint,
    pub precedence: Precedence,
    pub patient_count: u32,
    pub destination: String,
    /// How the patient is taken aboard at the point of injury.
    #[serde(default = "default_pickup_mode")]
    pub pickup_mode: TransferMode,
    /// Exercise constraint: the transfer must go through this watercraft.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_axp: Option<String>,
}

fn default_pickup_mode() -> TransferMode {
    TransferMode::Ground
}

impl EvacRequest {
    pub fn time_ms(&self) -> Millis {
        secs_to_ms(self.time)
    }
}
