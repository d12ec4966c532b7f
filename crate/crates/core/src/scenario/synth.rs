//! Randomized scenarios for benchmarking policies against each other.
//!
//! Every generated scenario keeps its requests within direct reach of every aircraft,
//! so any sensible policy delivers every patient and policies differ only in timing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scenario;
use crate::geo::{destination_point, GeoPoint, LengthM, KNOT_MPS, NAUTICAL_MILE_M};
use crate::world::{
    Aircraft, AircraftStatus, EvacRequest, FacilityRole, MedLevel, Precedence, RoutePlan,
    TransferMode, TreatmentFacility, Watercraft,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub center: (f64, f64),
    /// Radius of the operating area, nautical miles.
    pub radius_nmi: f64,
    pub aircraft: (usize, usize),
    pub watercraft: (usize, usize),
    pub facilities: (usize, usize),
    pub requests: (usize, usize),
    /// Requests arrive uniformly in [0, window], seconds.
    pub arrival_window_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            center: (21.3, -158.0),
            radius_nmi: 60.0,
            aircraft: (2, 4),
            watercraft: (1, 3),
            facilities: (1, 3),
            requests: (3, 7),
            arrival_window_s: 5400.0,
        }
    }
}

fn scatter(rng: &mut impl Rng, center: GeoPoint, radius_m: f64) -> GeoPoint {
    // uniform over the disc
    let r = radius_m * rng.random::<f64>().sqrt();
    destination_point(center, rng.random_range(0.0..360.0), LengthM(r))
}

pub fn generate(seed: u64, cfg: &SynthConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = GeoPoint::new(cfg.center.0, cfg.center.1).expect("valid synth center");
    let radius = cfg.radius_nmi * NAUTICAL_MILE_M;
    let mut s = Scenario::empty(&format!("synth-{seed}"));
    s.description = format!("randomized scenario, seed {seed}");

    let bases: Vec<GeoPoint> = (0..2).map(|_| scatter(&mut rng, center, radius * 0.5)).collect();
    let n_ac = rng.random_range(cfg.aircraft.0..=cfg.aircraft.1);
    for i in 0..n_ac {
        let base = bases[i % bases.len()];
        let range = LengthM(rng.random_range(260.0..320.0) * NAUTICAL_MILE_M);
        s.aircraft.push(Aircraft {
            id: format!("AC{}", i + 1),
            home_base: base,
            home_watercraft: None,
            cruise_speed: rng.random_range(120.0..150.0) * KNOT_MPS,
            max_range: range,
            status: AircraftStatus::Idle,
            fuel_range_remaining: range,
            service_time_hoist: 300.0,
            service_time_land: 180.0,
            cabin_size: 2,
            position: base,
            leg: None,
            tasked: None,
        });
    }

    let n_wc = rng.random_range(cfg.watercraft.0..=cfg.watercraft.1);
    for i in 0..n_wc {
        let a = scatter(&mut rng, center, radius);
        let b = scatter(&mut rng, center, radius);
        let speed = rng.random_range(4.0..14.0) * KNOT_MPS;
        s.watercraft.push(Watercraft {
            id: format!("WC{}", i + 1),
            route: RoutePlan {
                waypoints: vec![a, b],
                leg_speeds: vec![speed],
                departure_time: 0.0,
                loop_route: false,
            },
            helipad: rng.random_bool(0.6),
            refuel: rng.random_bool(0.3),
            med_level: if rng.random_bool(0.5) { MedLevel::Medic } else { MedLevel::None },
            override_track: vec![],
        });
    }

    let n_fac = rng.random_range(cfg.facilities.0..=cfg.facilities.1);
    for i in 0..n_fac {
        s.facilities.push(TreatmentFacility {
            id: format!("F{}", i + 1),
            location: scatter(&mut rng, center, radius * 0.5),
            role: if i == 0 { FacilityRole::Role3 } else { FacilityRole::Role2 },
        });
    }

    let n_req = rng.random_range(cfg.requests.0..=cfg.requests.1);
    let mut times: Vec<f64> = (0..n_req)
        .map(|_| (rng.random_range(0.0..cfg.arrival_window_s) / 10.0).round() * 10.0)
        .collect();
    times.sort_by(f64::total_cmp);
    for (i, t) in times.into_iter().enumerate() {
        let precedence = match rng.random_range(0..3) {
            0 => Precedence::Urgent,
            1 => Precedence::Priority,
            _ => Precedence::Routine,
        };
        let dest = rng.random_range(0..n_fac);
        s.requests.push(EvacRequest {
            id: format!("R{:02}", i + 1),
            time: t,
            location: scatter(&mut rng, center, radius),
            precedence,
            patient_count: rng.random_range(1..=2),
            destination: s.facilities[dest].id.clone(),
            pickup_mode: if rng.random_bool(0.3) { TransferMode::Hoist } else { TransferMode::Ground },
            required_axp: None,
        });
    }
    s.horizon = 6.0 * 3600.0;
    s
}

/// The benchmark suite: `n` scenarios from consecutive seeds starting at `first_seed`.
pub fn suite(first_seed: u64, n: usize) -> Vec<Scenario> {
    (0..n as u64)
        .map(|i| generate(first_seed + i, &SynthConfig::default()))
        .collect()
}
