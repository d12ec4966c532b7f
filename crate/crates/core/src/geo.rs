//! Spherical-Earth geodesy.
//!
//! Everything here works on a sphere of fixed radius [`EARTH_RADIUS_M`]. Angles at the
//! API surface are degrees, lengths are meters.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const STATUTE_MILE_M: f64 = 1609.344;
pub const NAUTICAL_MILE_M: f64 = 1852.0;
/// One knot in meters per second.
pub const KNOT_MPS: f64 = NAUTICAL_MILE_M / 3600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("bearing is undefined between coincident points or from a pole")]
    UndefinedBearing,
}

/// A point on the sphere. Latitude in [-90, 90], longitude normalized into (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(GeoPoint {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    fn from_radians(lat: f64, lon: f64) -> Self {
        let lat = lat.to_degrees().clamp(-90.0, 90.0);
        GeoPoint {
            lat,
            lon: normalize_lon(lon.to_degrees()),
        }
    }

    fn is_pole(&self) -> bool {
        (self.lat.abs() - 90.0).abs() < 1e-12
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

/// Wraps a longitude in degrees into (-180, 180].
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = lon % 360.0;
    if l <= -180.0 {
        l += 360.0;
    } else if l > 180.0 {
        l -= 360.0;
    }
    l
}

/// A non-negative length in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LengthM(pub f64);

impl LengthM {
    pub const ZERO: LengthM = LengthM(0.0);

    pub fn meters(self) -> f64 {
        self.0
    }

    pub fn from_statute_miles(mi: f64) -> Self {
        LengthM(mi * STATUTE_MILE_M)
    }

    pub fn from_nautical_miles(nmi: f64) -> Self {
        LengthM(nmi * NAUTICAL_MILE_M)
    }

    pub fn statute_miles(self) -> f64 {
        self.0 / STATUTE_MILE_M
    }

    pub fn nautical_miles(self) -> f64 {
        self.0 / NAUTICAL_MILE_M
    }
}

impl Add for LengthM {
    type Output = LengthM;
    fn add(self, rhs: LengthM) -> LengthM {
        LengthM(self.0 + rhs.0)
    }
}

impl Sub for LengthM {
    type Output = LengthM;
    fn sub(self, rhs: LengthM) -> LengthM {
        LengthM(self.0 - rhs.0)
    }
}

impl Mul<f64> for LengthM {
    type Output = LengthM;
    fn mul(self, rhs: f64) -> LengthM {
        LengthM(self.0 * rhs)
    }
}

impl Div<f64> for LengthM {
    type Output = LengthM;
    fn div(self, rhs: f64) -> LengthM {
        LengthM(self.0 / rhs)
    }
}

/// Haversine great-circle distance.
pub fn gc_distance(a: GeoPoint, b: GeoPoint) -> LengthM {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = (dlat * 0.5).sin();
    let s_lon = (dlon * 0.5).sin();
    let h = (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).clamp(0.0, 1.0);
    LengthM(2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt()))
}

/// Forward azimuth in degrees [0, 360) of the great circle from `a` to `b`.
///
/// Near-antipodal pairs return whatever the formula yields; the direction is
/// numerically unstable there.
pub fn initial_bearing(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    if a.is_pole() || gc_distance(a, b).0 < 1e-9 {
        return Err(GeoError::UndefinedBearing);
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    let deg = y.atan2(x).to_degrees();
    Ok(((deg % 360.0) + 360.0) % 360.0)
}

/// Point reached after traveling `d` along the great circle leaving `a` at `bearing_deg`.
pub fn destination_point(a: GeoPoint, bearing_deg: f64, d: LengthM) -> GeoPoint {
    if d.0 == 0.0 {
        return a;
    }
    let delta = d.0 / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let lat1 = a.lat.to_radians();
    let lon1 = a.lon.to_radians();
    let sin_lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0);
    let lat2 = sin_lat2.asin();
    let lon2 = lon1
        + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * sin_lat2);
    GeoPoint::from_radians(lat2, lon2)
}

/// Great-circle interpolation; `frac` = 0 gives `a`, 1 gives `b`.
pub fn interpolate(a: GeoPoint, b: GeoPoint, frac: f64) -> GeoPoint {
    if frac <= 0.0 {
        return a;
    }
    if frac >= 1.0 {
        return b;
    }
    let delta = gc_distance(a, b).0 / EARTH_RADIUS_M;
    if delta < 1e-15 {
        return a;
    }
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let sd = delta.sin();
    if sd.abs() < 1e-12 {
        // antipodal: any great circle works, pick the initial bearing's
        let brg = initial_bearing(a, b).unwrap_or(0.0);
        return destination_point(a, brg, LengthM(delta * frac * EARTH_RADIUS_M));
    }
    let ka = ((1.0 - frac) * delta).sin() / sd;
    let kb = (frac * delta).sin() / sd;
    let x = ka * lat1.cos() * lon1.cos() + kb * lat2.cos() * lon2.cos();
    let y = ka * lat1.cos() * lon1.sin() + kb * lat2.cos() * lon2.sin();
    let z = ka * lat1.sin() + kb * lat2.sin();
    GeoPoint::from_radians(z.atan2((x * x + y * y).sqrt()), y.atan2(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Spherical law of cosines, kept apart from the haversine path.
    fn distance_law_of_cosines(a: GeoPoint, b: GeoPoint) -> f64 {
        let (la1, la2) = (a.lat().to_radians(), b.lat().to_radians());
        let dlon = (b.lon() - a.lon()).to_radians();
        let c = (la1.sin() * la2.sin() + la1.cos() * la2.cos() * dlon.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_M * c.acos()
    }

    /// Geodesic direct problem solved by rotating the ECEF unit vector.
    fn direct_by_rotation(a: GeoPoint, bearing_deg: f64, d: f64) -> GeoPoint {
        let (lat, lon) = (a.lat().to_radians(), a.lon().to_radians());
        let up = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
        let east = [-lon.sin(), lon.cos(), 0.0];
        let north = [-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos()];
        let th = bearing_deg.to_radians();
        let dir: Vec<f64> = (0..3).map(|i| north[i] * th.cos() + east[i] * th.sin()).collect();
        let ang = d / EARTH_RADIUS_M;
        let v: Vec<f64> = (0..3).map(|i| up[i] * ang.cos() + dir[i] * ang.sin()).collect();
        p(
            v[2].atan2((v[0] * v[0] + v[1] * v[1]).sqrt()).to_degrees(),
            v[1].atan2(v[0]).to_degrees(),
        )
    }

    #[test]
    fn lon_normalization() {
        assert_eq!(p(0.0, 180.0).lon(), 180.0);
        assert_eq!(p(0.0, -180.0).lon(), 180.0);
        assert!((p(0.0, 190.0).lon() + 170.0).abs() < 1e-12);
        assert!((p(0.0, -540.0).lon() - 180.0).abs() < 1e-12);
        assert!(GeoPoint::new(90.5, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let a = p(21.3, -157.8);
        assert_eq!(gc_distance(a, a).meters(), 0.0);
    }

    #[test]
    fn manila_to_guam() {
        let d = gc_distance(p(14.5995, 120.9842), p(13.4443, 144.7937));
        // 2,570,665.35 m from a 40-digit law-of-cosines evaluation
        assert!((d.meters() - 2_570_665.347).abs() < 0.5, "{}", d.meters());
        assert!((d.statute_miles() - 1600.0).abs() / 1600.0 < 0.01);
    }

    #[test]
    fn honolulu_to_lihue() {
        let (a, b) = (p(21.3069, -157.8583), p(21.9750, -159.3380));
        let d = gc_distance(a, b).meters();
        let oracle = distance_law_of_cosines(a, b);
        // frozen from a 40-digit evaluation of the law of cosines
        assert!((d - 170_024.2265).abs() < 1e-3, "{d}");
        assert!((d - oracle).abs() < 1e-3);
    }

    #[test]
    fn bearings() {
        let o = p(0.0, 0.0);
        assert!((initial_bearing(o, p(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-12);
        assert!(initial_bearing(o, p(1.0, 0.0)).unwrap().abs() < 1e-12);
        let b = initial_bearing(o, p(1.0, 1.0)).unwrap();
        assert!((b - 44.995_636_455_344_85).abs() < 1e-9, "{b}");
        assert_eq!(initial_bearing(o, o), Err(GeoError::UndefinedBearing));
        assert_eq!(
            initial_bearing(p(90.0, 0.0), p(10.0, 0.0)),
            Err(GeoError::UndefinedBearing)
        );
    }

    #[test]
    fn destination_zero_distance_is_identity() {
        let a = p(21.28, -157.9);
        assert_eq!(destination_point(a, 123.0, LengthM::ZERO), a);
    }

    #[test]
    fn five_knots_for_an_hour_due_east() {
        let a = p(21.28, -157.9);
        let b = destination_point(a, 90.0, LengthM(9260.0));
        let o = direct_by_rotation(a, 90.0, 9260.0);
        assert!((b.lon() - a.lon() - 0.089_370_64).abs() < 1e-6);
        assert!((b.lat() - a.lat()).abs() < 1e-4);
        assert!((b.lat() - o.lat()).abs() < 1e-9 && (b.lon() - o.lon()).abs() < 1e-9);
    }

    #[test]
    fn antipodal_pairs_stay_finite() {
        let a = p(10.0, 20.0);
        let b = p(-10.0, -160.0);
        let d = gc_distance(a, b).meters();
        // haversine loses about half the digits at the antipode
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1.0);
        assert!(initial_bearing(a, b).unwrap().is_finite());
        let m = interpolate(a, b, 0.5);
        assert!(m.lat().is_finite() && m.lon().is_finite());
    }

    #[test]
    fn interpolation_splits_distance() {
        let a = p(14.6, 121.0);
        let b = p(13.4, 144.8);
        let m = interpolate(a, b, 0.25);
        let total = gc_distance(a, b).meters();
        assert!((gc_distance(a, m).meters() - 0.25 * total).abs() < 1e-3);
        assert!((gc_distance(m, b).meters() - 0.75 * total).abs() < 1e-3);
    }

    fn any_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..180.0).prop_map(|(la, lo)| p(la, lo))
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in any_point(), b in any_point()) {
            prop_assert_eq!(gc_distance(a, b), gc_distance(b, a));
            prop_assert!(gc_distance(a, b).meters().is_finite());
        }

        #[test]
        fn triangle_inequality(a in any_point(), b in any_point(), c in any_point()) {
            let ac = gc_distance(a, c).meters();
            let abc = gc_distance(a, b).meters() + gc_distance(b, c).meters();
            prop_assert!(ac <= abc + 1e-6);
        }

        #[test]
        fn destination_round_trips(a in (-85.0f64..85.0, -180.0f64..180.0),
                                   brg in 0.0f64..360.0, d in 1.0f64..2.0e6) {
            let a = p(a.0, a.1);
            let b = destination_point(a, brg, LengthM(d));
            let back = gc_distance(a, b).meters();
            prop_assert!((back - d).abs() / d < 1e-6, "d={} back={}", d, back);
            prop_assert!(b.lat().is_finite() && b.lon().is_finite());
        }

        #[test]
        fn matches_law_of_cosines(a in any_point(), b in any_point()) {
            let d = gc_distance(a, b).meters();
            // the cosine law loses precision at short range; only compare beyond 10 km
            if d > 1.0e4 {
                prop_assert!((d - distance_law_of_cosines(a, b)).abs() < 1.0);
            }
        }
    }
}
