//! GeoJSON export for map display. Coordinates are [lon, lat].

use serde_json::{json, Value};

use super::{TimeWindow, TransferPlan, ZoneRegion};
use crate::geo::{destination_point, GeoPoint};

const RING_POINTS: usize = 128;

fn coord(p: GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

/// One polygon per disk of the zone, with the zone's windows attached to each.
pub fn zone_features(z: &ZoneRegion, windows: &[TimeWindow]) -> Vec<Value> {
    let windows: Vec<Value> = windows
        .iter()
        .map(|w| json!({"start": w.start, "end": w.end, "watercraft_ids": w.watercraft_ids}))
        .collect();
    z.disks
        .iter()
        .map(|d| {
            let mut ring: Vec<Value> = (0..RING_POINTS)
                .map(|i| coord(destination_point(d.center, 360.0 * i as f64 / RING_POINTS as f64, d.radius)))
                .collect();
            ring.push(ring[0].clone());
            json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "kind": "zone_disk",
                    "center": coord(d.center),
                    "radius_m": d.radius.meters(),
                    "empty": z.empty,
                    "windows": windows,
                },
            })
        })
        .collect()
}

/// One line per leg.
pub fn plan_features(plan: &TransferPlan) -> Vec<Value> {
    plan.legs
        .iter()
        .map(|l| {
            json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [coord(l.from_pos), coord(l.to_pos)]},
                "properties": {
                    "kind": "plan_leg",
                    "carrier": l.carrier,
                    "from": l.from,
                    "to": l.to,
                    "depart": l.depart,
                    "arrive": l.arrive,
                    "with_patient": l.with_patient,
                    "refuel": l.refuel,
                },
            })
        })
        .collect()
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}
