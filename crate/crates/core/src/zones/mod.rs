//! Transfer opportunity zones, their time windows, multi-aircraft transfer chains and
//! placement of a dedicated exchange ship.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{gc_distance, GeoPoint, LengthM};
use crate::world::{watercraft_position, Watercraft};

mod chain;
pub mod geojson;
mod placement;

pub use chain::{chain_search, ChainContext, Place, PlanLeg, TransferPlan};
pub use placement::{place_dedicated_axp, Placement, PlacementQuery, DEDICATED_AXP_ID};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZoneError {
    #[error("no feasible transfer chain within the horizon")]
    NoFeasibleChain,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: GeoPoint,
    pub radius: LengthM,
}

impl Disk {
    pub fn contains(&self, p: GeoPoint) -> bool {
        gc_distance(self.center, p).meters() <= self.radius.meters()
    }
}

/// Intersection of disks on the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRegion {
    pub disks: Vec<Disk>,
    /// Some pair of disks is disjoint, so no point is inside.
    pub empty: bool,
}

impl ZoneRegion {
    pub fn new(disks: Vec<Disk>) -> Result<Self, ZoneError> {
        if disks.is_empty() {
            return Err(ZoneError::InvalidInput("a zone needs at least one disk".into()));
        }
        if let Some(d) = disks.iter().find(|d| !(d.radius.meters() > 0.0)) {
            return Err(ZoneError::InvalidInput(format!("radius must be positive, got {}", d.radius.meters())));
        }
        let empty = disks.iter().enumerate().any(|(i, a)| {
            disks[i + 1..]
                .iter()
                .any(|b| gc_distance(a.center, b.center).meters() > a.radius.meters() + b.radius.meters())
        });
        Ok(ZoneRegion { disks, empty })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.disks.iter().all(|d| d.contains(p))
    }
}

/// Where a watercraft could serve as an exchange point between an aircraft operating
/// from `origin_a` and one from `origin_b`.
pub fn opportunity_zone(origin_a: GeoPoint, roa_a: LengthM, origin_b: GeoPoint, roa_b: LengthM) -> Result<ZoneRegion, ZoneError> {
    ZoneRegion::new(vec![
        Disk {
            center: origin_a,
            radius: roa_a,
        },
        Disk {
            center: origin_b,
            radius: roa_b,
        },
    ])
}

/// A stretch of time during which at least one watercraft is inside a zone. Seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub watercraft_ids: Vec<String>,
}

/// Samples the fleet every `dt` over `[t0, t1)`. Each sample stands for the interval up
/// to the next sample; runs of covered samples merge into one window.
pub fn zone_windows(z: &ZoneRegion, fleet: &[Watercraft], horizon: (f64, f64), dt: f64) -> Result<Vec<TimeWindow>, ZoneError> {
    let (t0, t1) = horizon;
    if !(t1 > t0) || !(dt > 0.0) {
        return Err(ZoneError::InvalidInput("need t1 > t0 and dt > 0".into()));
    }
    let mut windows: Vec<TimeWindow> = Vec::new();
    let mut open = false;
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * dt;
        if t >= t1 {
            break;
        }
        let end = (t + dt).min(t1);
        let inside: Vec<&Watercraft> = if z.empty {
            Vec::new()
        } else {
            fleet.iter().filter(|w| z.contains(watercraft_position(w, t))).collect()
        };
        if inside.is_empty() {
            open = false;
        } else {
            if !open {
                windows.push(TimeWindow {
                    start: t,
                    end,
                    watercraft_ids: Vec::new(),
                });
                open = true;
            }
            let w = windows.last_mut().expect("window just opened");
            w.end = end;
            for craft in inside {
                if !w.watercraft_ids.contains(&craft.id) {
                    w.watercraft_ids.push(craft.id.clone());
                }
            }
        }
        k += 1;
    }
    for w in &mut windows {
        w.watercraft_ids.sort();
    }
    Ok(windows)
}

/// The parts of `[t0, t1]` not covered by `windows` (which must be sorted and disjoint).
pub fn blackouts(windows: &[TimeWindow], horizon: (f64, f64)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut cursor = horizon.0;
    for w in windows {
        if w.start > cursor {
            out.push((cursor, w.start));
        }
        cursor = cursor.max(w.end);
    }
    if cursor < horizon.1 {
        out.push((cursor, horizon.1));
    }
    out
}
