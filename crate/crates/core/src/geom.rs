//! Planar and Earth-frame geometry.
//!
//! Vehicles live in a local east/north plane (meters) tangent to the Earth
//! at the scene origin; satellites live in an ECEF-like frame with the
//! origin at the Earth's center and the scene origin on the +X axis
//! (latitude 0, longitude 0). The road scene is at most a few hundred
//! meters across, so the tangent-plane mapping is the flat one.

use crate::scalar::Real;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Mean Earth radius (m) used for elevation geometry.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Planar position or velocity: `x` east, `y` north (meters, m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self { x: T::zero(), y: T::zero() }
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector from `self` towards `to`. `None` for coincident points.
    pub fn direction_to(self, to: Self) -> Option<Self> {
        let d = to - self;
        let n = d.norm();
        if n.is_zero() {
            None
        } else {
            Some(Self { x: d.x / n, y: d.y / n })
        }
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { x: self.x + rhs.x, y: self.y + rhs.y }
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { x: self.x - rhs.x, y: self.y - rhs.y }
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { x: -self.x, y: -self.y }
    }
}

/// 3-D position in the ECEF-like frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn distance(self, other: Self) -> T {
        Self {
            x: self.x - other.x,
            y: self.y - other.y,
            z: self.z - other.z,
        }
        .norm()
    }

    pub fn cross(self, other: Self) -> Self {
        Self {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }
}

/// ECEF position of a ground point at local planar coordinates `p`
/// (altitude 0). The scene origin maps to `(R_E, 0, 0)`; local east is
/// ECEF +Y and local north is ECEF +Z.
pub fn ground_to_ecef<T: Real>(p: Vec2<T>) -> Vec3<T> {
    Vec3::new(T::of(EARTH_RADIUS_M), p.x, p.y)
}

/// Slant range (m) from a ground point to a satellite.
pub fn ground_range<T: Real>(p: Vec2<T>, sat: Vec3<T>) -> T {
    ground_to_ecef(p).distance(sat)
}

/// Satellite look geometry from a ground point.
#[derive(Debug, Clone, Copy)]
pub struct LookAngles<T> {
    /// Elevation above the local horizon (rad).
    pub elevation: T,
    /// Unit direction of the satellite's horizontal component in the
    /// local plane; `None` exactly at zenith.
    pub horizontal_dir: Option<Vec2<T>>,
}

/// Elevation and horizontal direction of `sat` as seen from the ground
/// point `p`, using the exact local vertical at `p`.
pub fn look_angles<T: Real>(p: Vec2<T>, sat: Vec3<T>) -> LookAngles<T> {
    let obs = ground_to_ecef(p);
    let obs_norm = obs.norm();
    let up = Vec3::new(obs.x / obs_norm, obs.y / obs_norm, obs.z / obs_norm);
    let d = Vec3::new(sat.x - obs.x, sat.y - obs.y, sat.z - obs.z);
    let range = d.norm();
    let vertical = d.dot(up);
    let sin_el = (vertical / range).clamp(-T::one(), T::one());
    let elevation = sin_el.asin();

    // Horizontal basis at `p`: east stays the scene east axis (the scene
    // spans a few hundred meters), north completes the right-handed set.
    let east = Vec3::new(T::zero(), T::one(), T::zero());
    let north = up.cross(east);
    let h_east = d.dot(east);
    let h_north = d.dot(north);
    let h_norm = h_east.hypot(h_north);
    let horizontal_dir = if h_norm.is_zero() {
        None
    } else {
        Some(Vec2::new(h_east / h_norm, h_north / h_norm))
    };
    LookAngles { elevation, horizontal_dir }
}

/// Signed wrap of `dx` onto `(-period/2, period/2]`.
#[inline]
pub fn wrap_delta<T: Real>(dx: T, period: T) -> T {
    let half = period / T::of(2.0);
    let mut d = dx % period;
    if d > half {
        d -= period;
    } else if d < -half {
        d += period;
    }
    d
}

/// Wrap a coordinate onto `[0, period)`.
#[inline]
pub fn wrap_coord<T: Real>(x: T, period: T) -> T {
    let mut v = x % period;
    if v < T::zero() {
        v += period;
    }
    v
}

/// Metric for the vehicle plane: plain Euclidean, a torus in `x` (the
/// road wraps so the population stays constant), or a square torus in
/// both axes (used by the scaling-law deployment fields).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneMetric<T> {
    Euclidean,
    WrapX { period: T },
    WrapBoth { period: T },
}

impl<T: Real> PlaneMetric<T> {
    /// Shortest displacement from `a` to `b` under the metric.
    pub fn displacement(&self, a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
        match *self {
            PlaneMetric::Euclidean => b - a,
            PlaneMetric::WrapX { period } => Vec2::new(wrap_delta(b.x - a.x, period), b.y - a.y),
            PlaneMetric::WrapBoth { period } => {
                Vec2::new(wrap_delta(b.x - a.x, period), wrap_delta(b.y - a.y, period))
            }
        }
    }

    pub fn distance(&self, a: Vec2<T>, b: Vec2<T>) -> T {
        self.displacement(a, b).norm()
    }

    /// Canonical representative of a position under the metric.
    pub fn canonical(&self, p: Vec2<T>) -> Vec2<T> {
        match *self {
            PlaneMetric::Euclidean => p,
            PlaneMetric::WrapX { period } => Vec2::new(wrap_coord(p.x, period), p.y),
            PlaneMetric::WrapBoth { period } => {
                Vec2::new(wrap_coord(p.x, period), wrap_coord(p.y, period))
            }
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, PlaneMetric::Euclidean)
    }
}
