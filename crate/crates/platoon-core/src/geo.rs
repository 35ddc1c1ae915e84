//! WGS84 coordinates and small-scale planar geometry.

use crate::numf;

/// Mean Earth radius of the WGS84 ellipsoid, metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84 position in decimal degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in metres on the mean-radius sphere.
pub fn haversine_m(a: LonLat, b: LonLat) -> f64 {
    let lat1 = numf::to_radians(a.lat);
    let lat2 = numf::to_radians(b.lat);
    let dlat = lat2 - lat1;
    let dlon = numf::to_radians(b.lon - a.lon);
    let s1 = numf::sin(dlat / 2.0);
    let s2 = numf::sin(dlon / 2.0);
    let h = s1 * s1 + numf::cos(lat1) * numf::cos(lat2) * s2 * s2;
    2.0 * EARTH_RADIUS_M * numf::asin(numf::sqrt(h.min(1.0)))
}

/// Local equirectangular frame around a reference point. Adequate for the
/// sub-kilometre distances involved in snapping points to segments; the
/// error against the haversine metric is far below the 0.5 m contract.
#[derive(Clone, Copy, Debug)]
pub struct LocalFrame {
    origin: LonLat,
    m_per_deg_lon: f64,
    m_per_deg_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: LonLat) -> Self {
        let m_per_deg = EARTH_RADIUS_M * core::f64::consts::PI / 180.0;
        Self {
            origin,
            m_per_deg_lon: m_per_deg * numf::cos(numf::to_radians(origin.lat)),
            m_per_deg_lat: m_per_deg,
        }
    }

    /// Metres east/north of the origin.
    pub fn to_xy(&self, p: LonLat) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        )
    }
}

/// Projection of point `p` onto the great-circle-approximated chord `a`–`b`.
/// Returns `(t, dist_m)` where `t` in [0,1] is the clamped position along
/// the chord and `dist_m` the distance from `p` to that position.
pub fn project_onto_chord(p: LonLat, a: LonLat, b: LonLat) -> (f64, f64) {
    let frame = LocalFrame::new(a);
    let (px, py) = frame.to_xy(p);
    let (bx, by) = frame.to_xy(b);
    let len2 = bx * bx + by * by;
    let t = if len2 <= 0.0 {
        0.0
    } else {
        ((px * bx + py * by) / len2).clamp(0.0, 1.0)
    };
    let dx = px - t * bx;
    let dy = py - t * by;
    (t, numf::hypot(dx, dy))
}

/// Linear interpolation between two positions.
pub fn lerp(a: LonLat, b: LonLat, t: f64) -> LonLat {
    LonLat::new(a.lon + (b.lon - a.lon) * t, a.lat + (b.lat - a.lat) * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn haversine_identity() {
        let p = LonLat::new(122.4, 41.2);
        assert_eq!(haversine_m(p, p), 0.0);
    }

    #[test]
    fn haversine_one_degree_at_equator() {
        // Closed form: R * pi / 180.
        let expect = EARTH_RADIUS_M * core::f64::consts::PI / 180.0;
        let d = haversine_m(LonLat::new(0.0, 0.0), LonLat::new(1.0, 0.0));
        assert!((d - 111_195.0).abs() < 50.0, "d = {d}");
        assert_relative_eq!(d, expect, max_relative = 1e-12);
    }

    #[test]
    fn haversine_antipodal() {
        let d = haversine_m(LonLat::new(0.0, 0.0), LonLat::new(180.0, 0.0));
        assert_relative_eq!(
            d,
            core::f64::consts::PI * EARTH_RADIUS_M,
            max_relative = 1e-9
        );
    }

    #[test]
    fn chord_projection_midpoint() {
        let a = LonLat::new(122.0, 41.0);
        let b = LonLat::new(122.01, 41.0);
        let mid = lerp(a, b, 0.5);
        let (t, d) = project_onto_chord(mid, a, b);
        assert_relative_eq!(t, 0.5, epsilon = 1e-9);
        assert!(d < 1e-6);
    }

    #[test]
    fn chord_projection_clamps_to_ends() {
        let a = LonLat::new(122.0, 41.0);
        let b = LonLat::new(122.01, 41.0);
        let beyond = LonLat::new(122.02, 41.0);
        let (t, d) = project_onto_chord(beyond, a, b);
        assert_eq!(t, 1.0);
        assert!(d > 700.0 && d < 900.0, "d = {d}");
    }
}
