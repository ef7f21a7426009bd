//! Snapshot least-squares position fix from satellite ranges: the
//! baseline a conventional receiver would produce, with the altitude
//! fixed at ground level and no clock bias.

use super::FilterError;
use crate::geom::{ground_range, ground_to_ecef, Vec2, Vec3};
use crate::scalar::Real;

const MAX_ITERATIONS: usize = 50;
const STEP_TOL_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct LsFix<T> {
    pub position: Vec2<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Root of the final sum of squared range residuals.
    pub residual_norm: T,
}

/// Gauss-Newton on the squared range residuals over the 2-D ground
/// position. Needs at least two satellites; with exactly two, the
/// iteration settles on the solution nearer the initial guess. A
/// non-converged run returns its best iterate with the flag cleared.
pub fn least_squares_fix<T: Real>(
    ranges: &[(Vec3<T>, T)],
    initial: Vec2<T>,
) -> Result<LsFix<T>, FilterError> {
    if ranges.len() < 2 {
        return Err(FilterError::InsufficientSatellites { got: ranges.len(), need: 2 });
    }
    let mut pos = initial;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        // Normal equations J^T J delta = J^T r for r = theta - range(pos).
        let obs = ground_to_ecef(pos);
        let mut a11 = T::zero();
        let mut a12 = T::zero();
        let mut a22 = T::zero();
        let mut b1 = T::zero();
        let mut b2 = T::zero();
        for &(sat, theta) in ranges {
            let range = obs.distance(sat);
            let jx = (obs.y - sat.y) / range;
            let jy = (obs.z - sat.z) / range;
            let r = theta - range;
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            // residual derivative is -J, so the RHS picks up a sign.
            b1 -= jx * r;
            b2 -= jy * r;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < T::of(1e-18) {
            break;
        }
        let dx = (-b1 * a22 + b2 * a12) / det;
        let dy = (-b2 * a11 + b1 * a12) / det;
        pos = Vec2::new(pos.x + dx, pos.y + dy);
        if dx.hypot(dy) < T::of(STEP_TOL_M) {
            converged = true;
            break;
        }
    }
    let residual_norm = ranges
        .iter()
        .map(|&(sat, theta)| {
            let d = ground_range(pos, sat) - theta;
            d * d
        })
        .sum::<T>()
        .sqrt();
    Ok(LsFix { position: pos, iterations, converged, residual_norm })
}
