//! WGS-84 coordinate transforms, look angles, and the conical placement
//! region that constrains platform positions.
//!
//! All angles at the public surface are in degrees, all lengths in meters.
//! Altitudes are ellipsoidal.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Slack applied to every elevation-mask comparison so that points placed
/// exactly on a mask boundary count as visible/feasible.
pub const ELEVATION_TOLERANCE_DEG: f64 = 1e-9;

/// East, north, up offset in meters.
pub type Enu = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct GeodeticPosition {
    /// degrees
    pub lat: f64,
    /// degrees
    pub lon: f64,
    /// meters above the ellipsoid
    pub alt: f64,
}

impl From<[f64; 3]> for GeodeticPosition {
    fn from([lat, lon, alt]: [f64; 3]) -> Self {
        Self { lat, lon, alt }
    }
}

impl From<GeodeticPosition> for [f64; 3] {
    fn from(p: GeodeticPosition) -> Self {
        [p.lat, p.lon, p.alt]
    }
}

impl GeodeticPosition {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        let p = Self { lat, lon, alt };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidGeodetic { lat, lon, alt })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && self.alt.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn to_ecef(&self) -> EcefPosition {
        lla_to_ecef(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct EcefPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for EcefPosition {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<EcefPosition> for [f64; 3] {
    fn from(p: EcefPosition) -> Self {
        [p.x, p.y, p.z]
    }
}

impl From<Vector3<f64>> for EcefPosition {
    fn from(v: Vector3<f64>) -> Self {
        Self {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

impl EcefPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(&self, other: &EcefPosition) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn to_geodetic(&self) -> GeodeticPosition {
        ecef_to_lla(self)
    }
}

pub fn lla_to_ecef(p: &GeodeticPosition) -> EcefPosition {
    let (sin_lat, cos_lat) = p.lat.to_radians().sin_cos();
    let (sin_lon, cos_lon) = p.lon.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    EcefPosition {
        x: (n + p.alt) * cos_lat * cos_lon,
        y: (n + p.alt) * cos_lat * sin_lon,
        z: (n * (1.0 - WGS84_E2) + p.alt) * sin_lat,
    }
}

/// Fixed-point iteration on geodetic latitude; the height formula used is
/// stable at the poles.
pub fn ecef_to_lla(p: &EcefPosition) -> GeodeticPosition {
    let lon = p.y.atan2(p.x);
    let rho = p.x.hypot(p.y);
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..16 {
        let s = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
        let next = (p.z + WGS84_E2 * n * s).atan2(rho);
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    let (s, c) = lat.sin_cos();
    let alt = rho * c + p.z * s - WGS84_A * (1.0 - WGS84_E2 * s * s).sqrt();
    GeodeticPosition {
        lat: lat.to_degrees(),
        lon: lon.to_degrees(),
        alt,
    }
}

/// Local east-north-up tangent frame anchored at a geodetic origin.
#[derive(Clone, Copy, Debug)]
pub struct LocalFrame {
    origin: GeodeticPosition,
    origin_ecef: Vector3<f64>,
    // rows: east, north, up
    rotation: Matrix3<f64>,
}

impl LocalFrame {
    pub fn new(origin: GeodeticPosition) -> Self {
        let (sl, cl) = origin.lat.to_radians().sin_cos();
        let (so, co) = origin.lon.to_radians().sin_cos();
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            -so,       co,       0.0,
            -sl * co, -sl * so,  cl,
             cl * co,  cl * so,  sl,
        );
        Self {
            origin,
            origin_ecef: lla_to_ecef(&origin).to_vector(),
            rotation,
        }
    }

    pub fn origin(&self) -> &GeodeticPosition {
        &self.origin
    }

    pub fn to_enu(&self, p: &EcefPosition) -> Enu {
        self.rotation * (p.to_vector() - self.origin_ecef)
    }

    pub fn to_ecef(&self, enu: &Enu) -> EcefPosition {
        (self.origin_ecef + self.rotation.transpose() * enu).into()
    }

    /// Rotates an ENU direction into ECEF axes without translating it.
    pub fn rotate_to_ecef(&self, v: &Enu) -> Vector3<f64> {
        self.rotation.transpose() * v
    }

    pub fn geodetic_to_enu(&self, p: &GeodeticPosition) -> Enu {
        self.to_enu(&lla_to_ecef(p))
    }

    pub fn enu_to_geodetic(&self, enu: &Enu) -> GeodeticPosition {
        ecef_to_lla(&self.to_ecef(enu))
    }
}

pub fn ecef_to_enu(point: &EcefPosition, origin: &GeodeticPosition) -> Enu {
    LocalFrame::new(*origin).to_enu(point)
}

pub fn enu_to_ecef(enu: &Enu, origin: &GeodeticPosition) -> EcefPosition {
    LocalFrame::new(*origin).to_ecef(enu)
}

/// Elevation and azimuth (degrees) of an ENU offset. Azimuth is clockwise
/// from north in `[0, 360)`.
pub fn enu_look_angles(enu: &Enu) -> Result<(f64, f64)> {
    let range = enu.norm();
    if !(range > 0.0) {
        return Err(Error::ZeroRange);
    }
    let elevation = (enu.z / range).clamp(-1.0, 1.0).asin().to_degrees();
    let mut azimuth = enu.x.atan2(enu.y).to_degrees();
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    if azimuth >= 360.0 {
        azimuth -= 360.0;
    }
    Ok((elevation, azimuth))
}

pub fn elevation_azimuth(origin: &GeodeticPosition, target: &EcefPosition) -> Result<(f64, f64)> {
    enu_look_angles(&ecef_to_enu(target, origin))
}

/// Truncated cone above a region center: elevation at least
/// `min_elevation` seen from the center, altitude within
/// `[min_alt, max_alt]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicalRegion {
    pub center: GeodeticPosition,
    /// degrees
    pub min_elevation: f64,
    pub min_alt: f64,
    pub max_alt: f64,
}

impl ConicalRegion {
    pub const DEFAULT_MIN_ELEVATION: f64 = 10.0;
    pub const DEFAULT_MIN_ALT: f64 = 18_000.0;
    pub const DEFAULT_MAX_ALT: f64 = 22_000.0;

    pub fn new(center: GeodeticPosition, min_elevation: f64, min_alt: f64, max_alt: f64) -> Result<Self> {
        let region = Self {
            center,
            min_elevation,
            min_alt,
            max_alt,
        };
        region.validate()?;
        Ok(region)
    }

    pub fn with_defaults(center: GeodeticPosition) -> Result<Self> {
        Self::new(
            center,
            Self::DEFAULT_MIN_ELEVATION,
            Self::DEFAULT_MIN_ALT,
            Self::DEFAULT_MAX_ALT,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_valid() {
            return Err(Error::InvalidRegion(format!("center {:?} is not a valid position", self.center)));
        }
        if !(self.min_elevation > 0.0 && self.min_elevation < 90.0) {
            return Err(Error::InvalidRegion(format!(
                "minimum elevation {} deg must lie in (0, 90)",
                self.min_elevation
            )));
        }
        if !(self.min_alt.is_finite() && self.max_alt.is_finite() && self.min_alt <= self.max_alt) {
            return Err(Error::InvalidRegion(format!(
                "altitude band [{}, {}] m is empty",
                self.min_alt, self.max_alt
            )));
        }
        if self.min_alt <= self.center.alt {
            return Err(Error::InvalidRegion(format!(
                "minimum altitude {} m must exceed the center altitude {} m",
                self.min_alt, self.center.alt
            )));
        }
        if self.center.lat.abs() > 85.0 {
            return Err(Error::InvalidRegion("region centers beyond 85 deg latitude are not supported".into()));
        }
        Ok(())
    }

    pub fn altitude_ok(&self, p: &GeodeticPosition) -> bool {
        p.alt >= self.min_alt && p.alt <= self.max_alt
    }

    pub fn elevation_of(&self, p: &GeodeticPosition) -> Option<f64> {
        elevation_azimuth(&self.center, &p.to_ecef()).ok().map(|(el, _)| el)
    }

    pub fn elevation_ok(&self, p: &GeodeticPosition) -> bool {
        self.elevation_of(p)
            .is_some_and(|el| el >= self.min_elevation - ELEVATION_TOLERANCE_DEG)
    }

    pub fn contains(&self, p: &GeodeticPosition) -> bool {
        p.is_valid() && self.altitude_ok(p) && self.elevation_ok(p)
    }

    pub fn geometry(&self) -> ConeGeometry {
        ConeGeometry::new(*self)
    }
}

pub fn contains(region: &ConicalRegion, p: &GeodeticPosition) -> bool {
    region.contains(p)
}

pub fn project_to_cone(p: &GeodeticPosition, region: &ConicalRegion) -> GeodeticPosition {
    if region.contains(p) {
        return *p;
    }
    region.geometry().project(p)
}

pub fn sample_in_cone<R: Rng + ?Sized>(region: &ConicalRegion, rng: &mut R) -> GeodeticPosition {
    region.geometry().sample(rng)
}

/// Latitude/longitude/altitude box enclosing a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub alt_min: f64,
    pub alt_max: f64,
}

/// Precomputed geometry of a [`ConicalRegion`] in the ENU frame at its
/// center. Work is done in the `(rho, up)` half-plane at fixed azimuth:
/// the feasible set is (to well below a meter) rotationally symmetric about
/// the local vertical, so the nearest feasible point shares the azimuth of
/// the query.
#[derive(Clone, Debug)]
pub struct ConeGeometry {
    region: ConicalRegion,
    frame: LocalFrame,
    tan_el: f64,
    rho_outer: f64,
    u_floor: f64,
    u_ceiling: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

impl ConeGeometry {
    pub fn new(region: ConicalRegion) -> Self {
        let frame = LocalFrame::new(region.center);
        let tan_el = region.min_elevation.to_radians().tan();
        let mut geom = Self {
            region,
            frame,
            tan_el,
            rho_outer: 0.0,
            u_floor: 0.0,
            u_ceiling: 0.0,
        };
        let mut rho_outer: f64 = 0.0;
        let mut rho_inner = f64::INFINITY;
        for k in 0..16 {
            let az = (k as f64) * std::f64::consts::TAU / 16.0;
            rho_outer = rho_outer.max(geom.cone_rho_for_alt(az, region.max_alt));
            rho_inner = rho_inner.min(geom.cone_rho_for_alt(az, region.min_alt));
        }
        geom.rho_outer = rho_outer * 1.001 + 1.0;
        geom.u_floor = rho_inner * tan_el * 0.999 - 1.0;
        geom.u_ceiling = region.max_alt - region.center.alt + 1.0;
        geom
    }

    pub fn region(&self) -> &ConicalRegion {
        &self.region
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    /// Horizontal radius (meters, ENU at the center) enclosing the region.
    pub fn horizontal_extent(&self) -> f64 {
        self.rho_outer
    }

    fn enu(rho: f64, u: f64, az: f64) -> Enu {
        let (s, c) = az.sin_cos();
        Vector3::new(rho * s, rho * c, u)
    }

    fn point(&self, rho: f64, u: f64, az: f64) -> GeodeticPosition {
        self.frame.enu_to_geodetic(&Self::enu(rho, u, az))
    }

    fn alt_at(&self, rho: f64, u: f64, az: f64) -> f64 {
        self.point(rho, u, az).alt
    }

    /// Up coordinate at which the ellipsoidal altitude equals `alt`.
    fn u_for_alt(&self, rho: f64, az: f64, alt: f64) -> f64 {
        let mut u = alt - self.region.center.alt;
        for _ in 0..8 {
            let err = self.alt_at(rho, u, az) - alt;
            if err.abs() < 1e-9 {
                break;
            }
            u -= err;
        }
        u
    }

    /// Horizontal radius where the cone surface reaches altitude `alt`.
    fn cone_rho_for_alt(&self, az: f64, alt: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, (alt - self.region.center.alt) / self.tan_el * 1.5 + 10.0);
        while self.alt_at(hi, hi * self.tan_el, az) < alt {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.alt_at(mid, mid * self.tan_el, az) < alt {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-7 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Nearest point (in the `(rho, u)` plane) on the constant-altitude cap
    /// for `rho` in `[0, rho_max]`.
    fn nearest_on_cap(&self, rho0: f64, u0: f64, az: f64, alt: f64, rho_max: f64) -> (f64, f64, f64) {
        let dist2 = |rho: f64| {
            let u = self.u_for_alt(rho, az, alt);
            ((rho - rho0).powi(2) + (u - u0).powi(2), u)
        };
        const COARSE: usize = 24;
        let step = rho_max / COARSE as f64;
        let mut best_k = 0;
        let mut best = f64::INFINITY;
        for k in 0..=COARSE {
            let d = dist2(k as f64 * step).0;
            if d < best {
                best = d;
                best_k = k;
            }
        }
        let mut a = (best_k as f64 - 1.0).max(0.0) * step;
        let mut b = ((best_k as f64 + 1.0) * step).min(rho_max);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = dist2(x1).0;
        let mut f2 = dist2(x2).0;
        for _ in 0..48 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = dist2(x1).0;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = dist2(x2).0;
            }
        }
        let mut rho = 0.5 * (a + b);
        let (mut d, mut u) = dist2(rho);
        // endpoints can win when the minimum sits on the bracket edge
        for cand in [best_k as f64 * step, 0.0, rho_max] {
            let (dc, uc) = dist2(cand);
            if dc < d {
                d = dc;
                u = uc;
                rho = cand;
            }
        }
        (rho, u, d)
    }

    /// Nearest feasible point under the ENU Euclidean metric.
    pub fn project(&self, p: &GeodeticPosition) -> GeodeticPosition {
        if self.region.contains(p) {
            return *p;
        }
        let enu = self.frame.geodetic_to_enu(p);
        let rho0 = enu.x.hypot(enu.y);
        let az = if rho0 > 1e-9 { enu.x.atan2(enu.y) } else { 0.0 };
        let u0 = enu.z;
        let (min_alt, max_alt) = (self.region.min_alt, self.region.max_alt);

        let rho_a = self.cone_rho_for_alt(az, min_alt);
        let rho_b = self.cone_rho_for_alt(az, max_alt);

        // cone surface segment, parameterized by slant length
        let (s, c) = self.region.min_elevation.to_radians().sin_cos();
        let t = (rho0 * c + u0 * s).clamp(rho_a / c, rho_b / c);
        let cone = (t * c, t * s);
        let cone_d = (cone.0 - rho0).powi(2) + (cone.1 - u0).powi(2);

        let (lo_rho, lo_u, lo_d) = self.nearest_on_cap(rho0, u0, az, min_alt, rho_a);
        let (hi_rho, hi_u, hi_d) = self.nearest_on_cap(rho0, u0, az, max_alt, rho_b);

        let candidate = if cone_d <= lo_d && cone_d <= hi_d {
            let mut q = self.point(cone.0, cone.1, az);
            q.alt = q.alt.clamp(min_alt, max_alt);
            q
        } else if lo_d <= hi_d {
            GeodeticPosition {
                alt: min_alt,
                ..self.point(lo_rho, lo_u, az)
            }
        } else {
            GeodeticPosition {
                alt: max_alt,
                ..self.point(hi_rho, hi_u, az)
            }
        };
        if self.region.contains(&candidate) {
            candidate
        } else {
            self.pull_inside(&candidate)
        }
    }

    /// Moves an almost-feasible point toward the region axis until it is
    /// feasible; only needed to absorb rounding at the boundary.
    pub fn pull_inside(&self, p: &GeodeticPosition) -> GeodeticPosition {
        if self.region.contains(p) {
            return *p;
        }
        let mid_alt = 0.5 * (self.region.min_alt + self.region.max_alt);
        let anchor_u = self.u_for_alt(0.0, 0.0, mid_alt);
        let anchor = Vector3::new(0.0, 0.0, anchor_u);
        let from = self.frame.geodetic_to_enu(p);
        let at = |s: f64| {
            let mut q = self.frame.enu_to_geodetic(&(from + (anchor - from) * s));
            q.alt = q.alt.clamp(self.region.min_alt, self.region.max_alt);
            q
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.region.contains(&at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let q = at(hi);
        if self.region.contains(&q) {
            q
        } else {
            GeodeticPosition {
                alt: mid_alt,
                ..self.region.center
            }
        }
    }

    /// Uniform draw over the region volume (ENU metric) by rejection from
    /// the bounding cylinder. A zero-thickness altitude band degenerates to
    /// a uniform draw over the disk on that altitude surface.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GeodeticPosition {
        let r = self.rho_outer;
        let degenerate = self.region.max_alt <= self.region.min_alt;
        loop {
            let e = rng.random_range(-r..=r);
            let n = rng.random_range(-r..=r);
            if e * e + n * n > r * r {
                continue;
            }
            let p = if degenerate {
                let rho = e.hypot(n);
                let az = e.atan2(n);
                let u = self.u_for_alt(rho, az, self.region.min_alt);
                GeodeticPosition {
                    alt: self.region.min_alt,
                    ..self.point(rho, u, az)
                }
            } else {
                let u = rng.random_range(self.u_floor..=self.u_ceiling);
                self.frame.enu_to_geodetic(&Vector3::new(e, n, u))
            };
            if self.region.contains(&p) {
                return p;
            }
        }
    }

    pub fn bounding_box(&self) -> GeoBox {
        let mut lat_min = f64::INFINITY;
        let mut lat_max = f64::NEG_INFINITY;
        let mut lon_min = f64::INFINITY;
        let mut lon_max = f64::NEG_INFINITY;
        for k in 0..72 {
            let az = (k as f64) * std::f64::consts::TAU / 72.0;
            for u in [self.u_floor, self.u_ceiling] {
                let p = self.point(self.rho_outer, u, az);
                lat_min = lat_min.min(p.lat);
                lat_max = lat_max.max(p.lat);
                lon_min = lon_min.min(p.lon);
                lon_max = lon_max.max(p.lon);
            }
        }
        let lat_pad = 0.02 * (lat_max - lat_min);
        let lon_pad = 0.02 * (lon_max - lon_min);
        GeoBox {
            lat_min: (lat_min - lat_pad).max(-90.0),
            lat_max: (lat_max + lat_pad).min(90.0),
            lon_min: (lon_min - lon_pad).max(-180.0),
            lon_max: (lon_max + lon_pad).min(180.0),
            alt_min: self.region.min_alt,
            alt_max: self.region.max_alt,
        }
    }
}
