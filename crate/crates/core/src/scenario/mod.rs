//! Scenario documents: parsing, unit normalization, validation and bundled scenarios.
//!
//! A scenario is one JSON document. Distances and speeds are given in the units the
//! document declares under `units`; everything is normalized to meters, meters per
//! second and seconds on load. See `docs/scenario-schema.md` for the full schema.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, LengthM, KNOT_MPS, NAUTICAL_MILE_M, STATUTE_MILE_M};
use crate::world::{
    Aircraft, AircraftStatus, EvacRequest, MedLevel, ModelParams, PositionFix, PrecedenceWeights,
    RoutePlan, TreatmentFacility, Watercraft, WorldState,
};

pub mod synth;

pub const SCHEMA_VERSION: u32 = 1;
pub const SCENARIO_DIR_ENV: &str = "MEDCHAIN_SCENARIO_DIR";

const BUNDLED: &[(&str, &str)] = &[
    ("mpw2023", include_str!("../../scenarios/mpw2023.json")),
    ("fig7_manila_guam", include_str!("../../scenarios/fig7_manila_guam.json")),
    ("oahu_kauai", include_str!("../../scenarios/oahu_kauai.json")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no scenario file or bundled scenario named {0:?}")]
    NotFound(String),
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario at {path}: {message}")]
    Validation { path: String, message: String },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceUnit {
    #[serde(rename = "mi_statute")]
    StatuteMile,
    #[serde(rename = "nmi")]
    NauticalMile,
    #[serde(rename = "m")]
    Meter,
}

impl DistanceUnit {
    pub fn to_meters(self, v: f64) -> f64 {
        match self {
            DistanceUnit::StatuteMile => v * STATUTE_MILE_M,
            DistanceUnit::NauticalMile => v * NAUTICAL_MILE_M,
            DistanceUnit::Meter => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "kn")]
    Knot,
    #[serde(rename = "mps")]
    MeterPerSecond,
}

impl SpeedUnit {
    pub fn to_mps(self, v: f64) -> f64 {
        match self {
            SpeedUnit::Knot => v * KNOT_MPS,
            SpeedUnit::MeterPerSecond => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub distance: DistanceUnit,
    pub speed: SpeedUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub service_time_hoist_s: f64,
    pub service_time_land_s: f64,
    pub refuel_time_s: f64,
    pub axp_clearance_s: f64,
    pub cabin_size: u32,
    pub stochastic: bool,
    pub noise_fraction: f64,
    pub abandon_penalty_s: f64,
    pub launch_grid_s: f64,
    pub weights: PrecedenceWeights,
    pub horizon_s: f64,
    pub zone_dt_s: f64,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let p = ModelParams::default();
        ConfigFile {
            service_time_hoist_s: 300.0,
            service_time_land_s: 180.0,
            refuel_time_s: p.refuel_time,
            axp_clearance_s: p.axp_clearance,
            cabin_size: 2,
            stochastic: p.stochastic,
            noise_fraction: p.noise_fraction,
            abandon_penalty_s: p.abandon_penalty,
            launch_grid_s: p.launch_grid,
            weights: p.weights,
            horizon_s: 86_400.0,
            zone_dt_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AircraftFile {
    id: String,
    home_base: GeoPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    home_watercraft: Option<String>,
    cruise_speed: f64,
    max_range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fuel_range_remaining: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    service_time_hoist_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    service_time_land_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cabin_size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteFile {
    waypoints: Vec<GeoPoint>,
    #[serde(default)]
    leg_speeds: Vec<f64>,
    #[serde(default)]
    departure_time_s: f64,
    #[serde(default, rename = "loop")]
    loop_route: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WatercraftFile {
    id: String,
    helipad: bool,
    refuel: bool,
    #[serde(default = "default_med_level")]
    med_level: MedLevel,
    route: RouteFile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    override_track: Vec<PositionFix>,
}

fn default_med_level() -> MedLevel {
    MedLevel::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestFile {
    id: String,
    time_s: f64,
    location: GeoPoint,
    precedence: crate::world::Precedence,
    patient_count: u32,
    destination: String,
    #[serde(default = "default_pickup")]
    pickup_mode: crate::world::TransferMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    required_axp: Option<String>,
}

fn default_pickup() -> crate::world::TransferMode {
    crate::world::TransferMode::Ground
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
    units: Units,
    #[serde(default)]
    config: ConfigFile,
    #[serde(default)]
    aircraft: Vec<AircraftFile>,
    #[serde(default)]
    watercraft: Vec<WatercraftFile>,
    #[serde(default)]
    facilities: Vec<TreatmentFacility>,
    #[serde(default)]
    requests: Vec<RequestFile>,
}

/// A loaded scenario, normalized to meters and seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub params: ModelParams,
    pub aircraft: Vec<Aircraft>,
    pub watercraft: Vec<Watercraft>,
    pub facilities: Vec<TreatmentFacility>,
    pub requests: Vec<EvacRequest>,
    /// Planning horizon for zone windows and placement, seconds.
    pub horizon: f64,
    /// Sampling step for zone windows and chain search, seconds.
    pub zone_dt: f64,
}

impl Scenario {
    pub fn empty(id: &str) -> Self {
        Scenario {
            id: id.into(),
            description: String::new(),
            params: ModelParams::default(),
            aircraft: vec![],
            watercraft: vec![],
            facilities: vec![],
            requests: vec![],
            horizon: 86_400.0,
            zone_dt: 300.0,
        }
    }

    /// World before anything has happened; arrivals at t = 0 are still on the calendar.
    pub fn world(&self) -> WorldState {
        WorldState::new(
            self.aircraft.clone(),
            self.watercraft.clone(),
            self.facilities.clone(),
            self.requests.clone(),
            self.params.clone(),
        )
    }

    /// World at time zero, with requests due at zero already pending.
    pub fn initial_state(&self) -> WorldState {
        let mut s = self.world();
        s.advance_to(0);
        s
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

    pub fn without_watercraft(&self, id: &str) -> Scenario {
        let mut s = self.clone();
        s.watercraft.retain(|w| w.id != id);
        s.requests.iter_mut().for_each(|r| {
            if r.required_axp.as_deref() == Some(id) {
                r.required_axp = None;
            }
        });
        s
    }

    /// JSON document in meters / meters-per-second; loads back to an equal scenario.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            description: self.description.clone(),
            units: Units {
                distance: DistanceUnit::Meter,
                speed: SpeedUnit::MeterPerSecond,
            },
            config: ConfigFile {
                service_time_hoist_s: 300.0,
                service_time_land_s: 180.0,
                refuel_time_s: self.params.refuel_time,
                axp_clearance_s: self.params.axp_clearance,
                cabin_size: 2,
                stochastic: self.params.stochastic,
                noise_fraction: self.params.noise_fraction,
                abandon_penalty_s: self.params.abandon_penalty,
                launch_grid_s: self.params.launch_grid,
                weights: self.params.weights,
                horizon_s: self.horizon,
                zone_dt_s: self.zone_dt,
            },
            aircraft: self
                .aircraft
                .iter()
                .map(|a| AircraftFile {
                    id: a.id.clone(),
                    home_base: a.home_base,
                    home_watercraft: a.home_watercraft.clone(),
                    cruise_speed: a.cruise_speed,
                    max_range: a.max_range.meters(),
                    fuel_range_remaining: Some(a.fuel_range_remaining.meters()),
                    service_time_hoist_s: Some(a.service_time_hoist),
                    service_time_land_s: Some(a.service_time_land),
                    cabin_size: Some(a.cabin_size),
                })
                .collect(),
            watercraft: self
                .watercraft
                .iter()
                .map(|w| WatercraftFile {
                    id: w.id.clone(),
                    helipad: w.helipad,
                    refuel: w.refuel,
                    med_level: w.med_level,
                    route: RouteFile {
                        waypoints: w.route.waypoints.clone(),
                        leg_speeds: w.route.leg_speeds.clone(),
                        departure_time_s: w.route.departure_time,
                        loop_route: w.route.loop_route,
                    },
                    override_track: w.override_track.clone(),
                })
                .collect(),
            facilities: self.facilities.clone(),
            requests: self
                .requests
                .iter()
                .map(|r| RequestFile {
                    id: r.id.clone(),
                    time_s: r.time,
                    location: r.location,
                    precedence: r.precedence,
                    patient_count: r.patient_count,
                    destination: r.destination.clone(),
                    pickup_mode: r.pickup_mode,
                    required_axp: r.required_axp.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

/// Parses and validates a scenario document.
pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let file: ScenarioFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        if let Some(field) = missing_field(&message) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        ScenarioError::invalid(path, message)
    })?;
    normalize(file)
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Loads a scenario from a file path, from `$MEDCHAIN_SCENARIO_DIR/<id>.json`, or from
/// the bundled set, in that order.
pub fn load(path_or_id: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let p = path_or_id.as_ref();
    if p.is_file() {
        let text = std::fs::read_to_string(p).map_err(|source| ScenarioError::Io {
            path: p.display().to_string(),
            source,
        })?;
        return parse(&text);
    }
    let id = p.to_string_lossy().to_string();
    if let Ok(dir) = std::env::var(SCENARIO_DIR_ENV) {
        let candidate = Path::new(&dir).join(format!("{id}.json"));
        if candidate.is_file() {
            return load(candidate);
        }
    }
    match BUNDLED.iter().find(|(name, _)| *name == id) {
        Some((_, text)) => parse(text),
        None => Err(ScenarioError::NotFound(id)),
    }
}

pub fn bundled_ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _)| *id)
}

fn positive(v: f64, path: String) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ScenarioError::invalid(path, format!("must be positive, got {v}")))
    }
}

fn non_negative(v: f64, path: String) -> Result<f64, ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(ScenarioError::invalid(path, format!("must be non-negative, got {v}")))
    }
}

fn unique<'a>(ids: impl Iterator<Item = &'a String>, what: &str) -> Result<BTreeSet<&'a String>, ScenarioError> {
    let mut seen = BTreeSet::new();
    for (i, id) in ids.enumerate() {
        if !seen.insert(id) {
            return Err(ScenarioError::invalid(format!("{what}[{i}].id"), format!("duplicate id {id:?}")));
        }
    }
    Ok(seen)
}

fn normalize(f: ScenarioFile) -> Result<Scenario, ScenarioError> {
    if f.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::invalid(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", f.schema_version),
        ));
    }
    let dist = |v: f64| f.units.distance.to_meters(v);
    let speed = |v: f64| f.units.speed.to_mps(v);
    let c = &f.config;
    non_negative(c.service_time_hoist_s, "config.service_time_hoist_s".into())?;
    non_negative(c.service_time_land_s, "config.service_time_land_s".into())?;
    non_negative(c.refuel_time_s, "config.refuel_time_s".into())?;
    non_negative(c.axp_clearance_s, "config.axp_clearance_s".into())?;
    positive(c.launch_grid_s, "config.launch_grid_s".into())?;
    positive(c.horizon_s, "config.horizon_s".into())?;
    positive(c.zone_dt_s, "config.zone_dt_s".into())?;
    if !(0.0..1.0).contains(&c.noise_fraction) {
        return Err(ScenarioError::invalid("config.noise_fraction", "must be in [0, 1)"));
    }
    if c.cabin_size == 0 {
        return Err(ScenarioError::invalid("config.cabin_size", "must be at least 1"));
    }

    let wc_ids = unique(f.watercraft.iter().map(|w| &w.id), "watercraft")?;
    unique(f.aircraft.iter().map(|a| &a.id), "aircraft")?;
    let fac_ids = unique(f.facilities.iter().map(|x| &x.id), "facilities")?;
    unique(f.requests.iter().map(|r| &r.id), "requests")?;

    let mut watercraft = Vec::new();
    for (i, w) in f.watercraft.iter().enumerate() {
        let speeds = w
            .route
            .leg_speeds
            .iter()
            .enumerate()
            .map(|(j, v)| positive(speed(*v), format!("watercraft[{i}].route.leg_speeds[{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let craft = Watercraft {
            id: w.id.clone(),
            route: RoutePlan {
                waypoints: w.route.waypoints.clone(),
                leg_speeds: speeds,
                departure_time: w.route.departure_time_s,
                loop_route: w.route.loop_route,
            },
            helipad: w.helipad,
            refuel: w.refuel,
            med_level: w.med_level,
            override_track: w.override_track.clone(),
        };
        craft
            .validate()
            .map_err(|e| ScenarioError::invalid(format!("watercraft[{i}].route"), e.to_string()))?;
        watercraft.push(craft);
    }

    let mut aircraft = Vec::new();
    for (i, a) in f.aircraft.iter().enumerate() {
        let at = |field: &str| format!("aircraft[{i}].{field}");
        let max_range = positive(dist(a.max_range), at("max_range"))?;
        let fuel = match a.fuel_range_remaining {
            Some(v) => non_negative(dist(v), at("fuel_range_remaining"))?,
            None => max_range,
        };
        if fuel > max_range * (1.0 + 1e-12) {
            return Err(ScenarioError::invalid(at("fuel_range_remaining"), "exceeds max_range"));
        }
        if let Some(home) = &a.home_watercraft {
            if !wc_ids.contains(home) {
                return Err(ScenarioError::invalid(at("home_watercraft"), format!("unknown watercraft {home:?}")));
            }
        }
        let cabin = a.cabin_size.unwrap_or(c.cabin_size);
        if cabin == 0 {
            return Err(ScenarioError::invalid(at("cabin_size"), "must be at least 1"));
        }
        aircraft.push(Aircraft {
            id: a.id.clone(),
            home_base: a.home_base,
            home_watercraft: a.home_watercraft.clone(),
            cruise_speed: positive(speed(a.cruise_speed), at("cruise_speed"))?,
            max_range: LengthM(max_range),
            status: AircraftStatus::Idle,
            fuel_range_remaining: LengthM(fuel.min(max_range)),
            service_time_hoist: non_negative(a.service_time_hoist_s.unwrap_or(c.service_time_hoist_s), at("service_time_hoist_s"))?,
            service_time_land: non_negative(a.service_time_land_s.unwrap_or(c.service_time_land_s), at("service_time_land_s"))?,
            cabin_size: cabin,
            position: a.home_base,
            leg: None,
            tasked: None,
        });
    }
    // aircraft stationed aboard a watercraft start wherever that watercraft is at t = 0
    for ac in &mut aircraft {
        if let Some(w) = ac.home_watercraft.as_ref().and_then(|id| watercraft.iter().find(|w| &w.id == id)) {
            ac.position = crate::world::watercraft_position(w, 0.0);
        }
    }

    let mut requests = Vec::new();
    for (i, r) in f.requests.iter().enumerate() {
        let at = |field: &str| format!("requests[{i}].{field}");
        if r.patient_count == 0 {
            return Err(ScenarioError::invalid(at("patient_count"), "must be at least 1"));
        }
        if !fac_ids.contains(&r.destination) {
            return Err(ScenarioError::invalid(at("destination"), format!("unknown facility {:?}", r.destination)));
        }
        if let Some(w) = &r.required_axp {
            if !wc_ids.contains(w) {
                return Err(ScenarioError::invalid(at("required_axp"), format!("unknown watercraft {w:?}")));
            }
        }
        non_negative(r.time_s, at("time_s"))?;
        requests.push(EvacRequest {
            id: r.id.clone(),
            time: r.time_s,
            location: r.location,
            precedence: r.precedence,
            patient_count: r.patient_count,
            destination: r.destination.clone(),
            pickup_mode: r.pickup_mode,
            required_axp: r.required_axp.clone(),
        });
    }

    Ok(Scenario {
        id: f.id,
        description: f.description,
        params: ModelParams {
            weights: c.weights,
            stochastic: c.stochastic,
            noise_fraction: c.noise_fraction,
            refuel_time: c.refuel_time_s,
            axp_clearance: c.axp_clearance_s,
            abandon_penalty: c.abandon_penalty_s,
            launch_grid: c.launch_grid_s,
        },
        aircraft,
        watercraft,
        facilities: f.facilities,
        requests,
        horizon: c.horizon_s,
        zone_dt: c.zone_dt_s,
    })
}
