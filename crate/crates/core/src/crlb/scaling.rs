//! Information scaling laws: closed-form predictions for the bound after
//! densifying a network with extra anchors or extra cooperating agents,
//! plus the empirical (brute-force) counterparts and the law-of-large-
//! numbers angle statistics their derivations rest on.

use super::linalg::{self, sym_inverse, SymInverse};
use super::{geometry_fisher, schur_complement, CrlbError, StaticNetwork};
use crate::geom::{wrap_delta, PlaneMetric, Vec2};
use crate::scalar::Real;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Inputs of the closed-form scaling predictions.
#[derive(Debug, Clone)]
pub struct ScalingInputs<T> {
    /// Eigenvalues of the base geometry factor `F_G` (unit noise).
    pub eigenvalues: Vec<T>,
    /// Connectivity density `pi R^2 / A`, in `(0, 1]`.
    pub rho: T,
    /// Number of nodes being added (anchors or agents).
    pub added: usize,
    /// Existing agent count.
    pub n_agents: usize,
    /// Existing anchor count.
    pub n_anchors: usize,
    /// Noise information of the ranging links.
    pub g: T,
}

impl<T: Real> ScalingInputs<T> {
    fn validate(&self) -> Result<(), CrlbError> {
        if !(self.rho > T::zero() && self.rho <= T::one()) {
            return Err(CrlbError::InvalidInput(format!(
                "density rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.g > T::zero()) {
            return Err(CrlbError::InvalidInput("g must be positive".into()));
        }
        let max_eig = self.eigenvalues.iter().fold(T::zero(), |a, &l| a.max(l.abs()));
        if self.eigenvalues.iter().any(|l| *l < -T::of(1e-8) * max_eig) {
            return Err(CrlbError::InvalidInput(
                "geometry eigenvalues must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Eigenvalues with roundoff negatives clamped to zero.
    fn clamped_eigenvalues(&self) -> impl Iterator<Item = T> + '_ {
        self.eigenvalues.iter().map(|&l| l.max(T::zero()))
    }
}

/// Large-deployment trace prediction after adding `added` anchors:
/// `(1/g) * sum_i 1 / (lambda_i + rho*M/2)`.
pub fn anchor_scaling_prediction<T: Real>(inputs: &ScalingInputs<T>) -> Result<T, CrlbError> {
    inputs.validate()?;
    let shift = inputs.rho * T::from_count(inputs.added) / T::of(2.0);
    let mut acc = T::zero();
    for l in inputs.clamped_eigenvalues() {
        let denom = l + shift;
        if denom <= T::zero() {
            return Err(CrlbError::InvalidInput(format!(
                "nonpositive shifted eigenvalue {denom}"
            )));
        }
        acc += denom.recip();
    }
    Ok(acc / inputs.g)
}

/// Closed-form densified geometry factor after adding `added` agents
/// that measure only to the existing nodes:
/// `F_G + (rho*N'/2) * ((1 - beta) I - beta * blockdiag(11^T, 11^T))`
/// with `beta = 1 / (rho (N + M))`. Returns the matrix together with the
/// virtual-anchor trace approximation `(1/g) sum 1/(lambda_i + rho*N'/2)`.
pub fn agent_scaling_prediction<T: Real>(
    f_g: &DMatrix<T>,
    inputs: &ScalingInputs<T>,
) -> Result<(DMatrix<T>, T), CrlbError> {
    inputs.validate()?;
    let n = inputs.n_agents;
    if f_g.nrows() != 2 * n || f_g.ncols() != 2 * n {
        return Err(CrlbError::InvalidInput(format!(
            "geometry factor is {}x{}, expected {}x{}",
            f_g.nrows(),
            f_g.ncols(),
            2 * n,
            2 * n
        )));
    }
    let half_added = inputs.rho * T::from_count(inputs.added) / T::of(2.0);
    let beta = (inputs.rho * T::from_count(inputs.n_agents + inputs.n_anchors)).recip();
    let mut densified = f_g.clone();
    for i in 0..2 * n {
        densified[(i, i)] += half_added * (T::one() - beta);
    }
    // -beta * [[1 1^T, 0], [0, 1 1^T]]
    for block in 0..2 {
        for i in 0..n {
            for j in 0..n {
                densified[(block * n + i, block * n + j)] -= half_added * beta;
            }
        }
    }
    let virtual_anchor_trace = anchor_scaling_prediction(inputs)?;
    Ok((densified, virtual_anchor_trace))
}

/// Uniform random point on the `[0, side)^2` torus.
fn torus_point<T: Real, R: Rng + ?Sized>(side: T, rng: &mut R) -> Vec2<T> {
    Vec2::new(T::uniform_01(rng) * side, T::uniform_01(rng) * side)
}

fn torus_direction<T: Real>(from: Vec2<T>, to: Vec2<T>, side: T) -> (Vec2<T>, T) {
    let d = Vec2::new(wrap_delta(to.x - from.x, side), wrap_delta(to.y - from.y, side));
    let len = d.norm();
    (Vec2::new(d.x / len, d.y / len), len)
}

/// Empirical side of the anchor scaling law: deploy `added` anchors
/// uniformly on the torus field, connect them to agents within `radius`,
/// assemble the densified Fisher directly, and average the trace of its
/// inverse over `deployments`. Returns `(mean empirical trace, rho)`.
pub fn anchor_scaling_empirical<T: Real>(
    net: &StaticNetwork<T>,
    side: T,
    radius: T,
    added: usize,
    deployments: usize,
    g: T,
    seed: u64,
) -> Result<(T, T), CrlbError> {
    if radius * T::of(2.0) > side {
        return Err(CrlbError::InvalidInput(
            "torus field needs radius < side/2 for an unambiguous metric".into(),
        ));
    }
    let base = geometry_fisher(net)?;
    let n = net.n_agents();
    let rho = T::of(std::f64::consts::PI) * radius * radius / (side * side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = T::zero();
    let mut used = 0usize;
    for _ in 0..deployments {
        let mut f = base.clone();
        for _ in 0..added {
            let anchor = torus_point(side, &mut rng);
            for (k, &agent) in net.agents.iter().enumerate() {
                let (dir, dist) = torus_direction(agent, anchor, side);
                if dist <= radius && dist > T::zero() {
                    super::accumulate_edge(&mut f, n, k, None, dir, T::one());
                }
            }
        }
        match sym_inverse(&f) {
            SymInverse::Invertible { inverse, .. } => {
                acc += inverse.trace() / g;
                used += 1;
            }
            SymInverse::Singular { .. } => {}
        }
    }
    if used == 0 {
        return Err(CrlbError::InvalidInput(
            "every deployment produced a singular Fisher matrix".into(),
        ));
    }
    Ok((acc / T::from_count(used), rho))
}

/// Empirical side of the agent scaling law under its stated premise:
/// the new agents measure only to the existing nodes. Builds the full
/// `2(N + added)`-dimensional geometry Fisher with the new agents placed
/// uniformly on the torus, Schur-complements the new agents out, and
/// returns the mean trace of the inverse restricted to the original
/// agents (scaled by `1/g`).
pub fn agent_scaling_empirical<T: Real>(
    net: &StaticNetwork<T>,
    side: T,
    radius: T,
    added: usize,
    deployments: usize,
    g: T,
    seed: u64,
) -> Result<T, CrlbError> {
    let n = net.n_agents();
    let base = geometry_fisher(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = T::zero();
    let mut used = 0usize;
    let dim = 2 * (n + added);
    for _ in 0..deployments {
        // Ordering: [x_old; y_old; x_new; y_new] so the trailing block is
        // exactly the new agents.
        let mut f: DMatrix<T> = DMatrix::zeros(dim, dim);
        f.view_mut((0, 0), (n, n)).copy_from(&base.view((0, 0), (n, n)));
        f.view_mut((0, n + added), (n, n)).copy_from(&base.view((0, n), (n, n)));
        f.view_mut((n + added, 0), (n, n)).copy_from(&base.view((n, 0), (n, n)));
        f.view_mut((n + added, n + added), (n, n)).copy_from(&base.view((n, n), (n, n)));
        for j in 0..added {
            let new_agent = torus_point(side, &mut rng);
            let jx = n + j;
            let jy = n + added + n + j;
            // Links to existing agents couple old and new unknowns.
            for (k, &agent) in net.agents.iter().enumerate() {
                let (dir, dist) = torus_direction(new_agent, agent, side);
                if dist > radius || dist.is_zero() {
                    continue;
                }
                let (kx, ky) = (k, n + added + k);
                let cc = dir.x * dir.x;
                let ss = dir.y * dir.y;
                let cs = dir.x * dir.y;
                for (p, q, v) in [
                    (jx, jx, cc),
                    (jy, jy, ss),
                    (jx, jy, cs),
                    (kx, kx, cc),
                    (ky, ky, ss),
                    (kx, ky, cs),
                ] {
                    f[(p, q)] += v;
                    if p != q {
                        f[(q, p)] += v;
                    }
                }
                for (p, q, v) in [(jx, kx, cc), (jy, ky, ss), (jx, ky, cs), (jy, kx, cs)] {
                    f[(p, q)] -= v;
                    f[(q, p)] -= v;
                }
            }
            // Links to anchors only add information to the new agent.
            for &anchor in &net.anchors {
                let (dir, dist) = torus_direction(new_agent, anchor, side);
                if dist > radius || dist.is_zero() {
                    continue;
                }
                let cc = dir.x * dir.x;
                let ss = dir.y * dir.y;
                let cs = dir.x * dir.y;
                f[(jx, jx)] += cc;
                f[(jy, jy)] += ss;
                f[(jx, jy)] += cs;
                f[(jy, jx)] += cs;
            }
        }
        // Reorder the trailing coordinates so new agents occupy the last
        // 2*added rows/cols: current order is [x_old, x_new, y_old, y_new].
        let mut perm: Vec<usize> = Vec::with_capacity(dim);
        perm.extend(0..n); // x_old
        perm.extend(n + added..n + added + n); // y_old
        perm.extend(n..n + added); // x_new
        perm.extend(n + added + n..dim); // y_new
        let mut reordered = DMatrix::zeros(dim, dim);
        for (i_new, &i_old) in perm.iter().enumerate() {
            for (j_new, &j_old) in perm.iter().enumerate() {
                reordered[(i_new, j_new)] = f[(i_old, j_old)];
            }
        }
        let Ok(reduced) = schur_complement(&reordered, 2 * added) else {
            continue;
        };
        match sym_inverse(&reduced) {
            SymInverse::Invertible { inverse, .. } => {
                acc += inverse.trace() / g;
                used += 1;
            }
            SymInverse::Singular { .. } => {}
        }
    }
    if used == 0 {
        return Err(CrlbError::InvalidInput(
            "every deployment produced a singular reduced Fisher matrix".into(),
        ));
    }
    Ok(acc / T::from_count(used))
}

/// Sample statistics of i.i.d. uniform angles against their limits.
#[derive(Debug, Clone)]
pub struct LlnReport<T> {
    pub samples: usize,
    /// `mean cos^2`, limit 1/2.
    pub cos2: T,
    /// `mean sin^2`, limit 1/2.
    pub sin2: T,
    /// `mean cos*sin`, limit 0.
    pub cross: T,
    /// `mean cos^4` (same-index fourth moment), limit 3/8.
    pub fourth_same: T,
    /// `mean cos^2(a) cos^2(b)` for independent angles, limit 1/4.
    pub fourth_diff: T,
}

impl<T: Real> LlnReport<T> {
    pub const LIMITS: [f64; 5] = [0.5, 0.5, 0.0, 3.0 / 8.0, 0.25];

    /// Analytic standard errors of the five statistics at this sample
    /// count: variances 1/8, 1/8, 1/8, 17/128, 5/64.
    pub fn analytic_se(&self) -> [T; 5] {
        let n = T::from_count(self.samples);
        [
            (T::of(1.0 / 8.0) / n).sqrt(),
            (T::of(1.0 / 8.0) / n).sqrt(),
            (T::of(1.0 / 8.0) / n).sqrt(),
            (T::of(17.0 / 128.0) / n).sqrt(),
            (T::of(5.0 / 64.0) / n).sqrt(),
        ]
    }

    pub fn statistics(&self) -> [T; 5] {
        [self.cos2, self.sin2, self.cross, self.fourth_same, self.fourth_diff]
    }

    /// Deviation of each statistic from its limit, in units of the
    /// analytic standard error.
    pub fn deviations_in_se(&self) -> [T; 5] {
        let se = self.analytic_se();
        let stats = self.statistics();
        let mut out = [T::zero(); 5];
        for i in 0..5 {
            out[i] = (stats[i] - T::of(Self::LIMITS[i])) / se[i];
        }
        out
    }
}

/// Draw `samples` i.i.d. `U(0, 2pi)` angle pairs per trial and report the
/// worst-deviating trial for each statistic. With `trials = 1` this is a
/// single law-of-large-numbers experiment.
pub fn lln_angle_check<T: Real>(samples: usize, trials: usize, seed: u64) -> Vec<LlnReport<T>> {
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let two_pi = T::of(2.0 * std::f64::consts::PI);
        let mut cos2 = T::zero();
        let mut sin2 = T::zero();
        let mut cross = T::zero();
        let mut fourth_same = T::zero();
        let mut fourth_diff = T::zero();
        for _ in 0..samples {
            let a = T::uniform_01(&mut rng) * two_pi;
            let b = T::uniform_01(&mut rng) * two_pi;
            let (ca, sa) = (a.cos(), a.sin());
            let cb = b.cos();
            cos2 += ca * ca;
            sin2 += sa * sa;
            cross += ca * sa;
            fourth_same += ca * ca * ca * ca;
            fourth_diff += ca * ca * cb * cb;
        }
        let n = T::from_count(samples);
        out.push(LlnReport {
            samples,
            cos2: cos2 / n,
            sin2: sin2 / n,
            cross: cross / n,
            fourth_same: fourth_same / n,
            fourth_diff: fourth_diff / n,
        });
    }
    out
}

/// Random fully-specified network on the torus for scaling studies:
/// agents and anchors uniform, edges by radius under the torus metric.
pub fn random_torus_network<T: Real>(
    n_agents: usize,
    n_anchors: usize,
    side: T,
    radius: T,
    seed: u64,
) -> StaticNetwork<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents: Vec<Vec2<T>> = (0..n_agents).map(|_| torus_point(side, &mut rng)).collect();
    let anchors: Vec<Vec2<T>> = (0..n_anchors).map(|_| torus_point(side, &mut rng)).collect();
    let mut agent_edges = Vec::new();
    for k in 0..n_agents {
        for m in (k + 1)..n_agents {
            if torus_direction(agents[k], agents[m], side).1 <= radius {
                agent_edges.push((k, m));
            }
        }
    }
    let mut anchor_edges = Vec::new();
    for k in 0..n_agents {
        for a in 0..n_anchors {
            if torus_direction(agents[k], anchors[a], side).1 <= radius {
                anchor_edges.push((k, a));
            }
        }
    }
    StaticNetwork { agents, anchors, agent_edges, anchor_edges, metric: PlaneMetric::WrapBoth { period: side } }
}

/// Eigenvalues of a network's geometry factor, for [`ScalingInputs`].
pub fn geometry_eigenvalues<T: Real>(net: &StaticNetwork<T>) -> Result<Vec<T>, CrlbError> {
    let f = geometry_fisher(net)?;
    let eig = linalg::sym_eigen(&f);
    Ok(eig.eigenvalues.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_prediction_plug_in() {
        // All eigenvalues 1, rho*M = 2, g = 1: each term is 1/2.
        for n in [1usize, 4, 9] {
            let inputs = ScalingInputs {
                eigenvalues: vec![1.0_f64; 2 * n],
                rho: 0.5,
                added: 4,
                n_agents: n,
                n_anchors: 0,
                g: 1.0,
            };
            let t = anchor_scaling_prediction(&inputs).unwrap();
            assert!((t - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_prediction_reduces_to_base_trace_without_anchors() {
        let eigenvalues = vec![0.5_f64, 2.0, 4.0];
        let inputs = ScalingInputs {
            eigenvalues: eigenvalues.clone(),
            rho: 1.0,
            added: 0,
            n_agents: 2,
            n_anchors: 1,
            g: 2.0,
        };
        let t = anchor_scaling_prediction(&inputs).unwrap();
        let want: f64 = eigenvalues.iter().map(|l| 1.0 / l).sum::<f64>() / 2.0;
        assert!((t - want).abs() < 1e-12);
    }

    #[test]
    fn agent_prediction_identity_on_translation_vector() {
        // Apply the closed form to [1_N; 0] and verify the two rank
        // structures act as stated.
        let n = 4usize;
        let net = random_torus_network::<f64>(n, 2, 100.0, 200.0, 9);
        let f_g = geometry_fisher(&net).unwrap();
        let inputs = ScalingInputs {
            eigenvalues: geometry_eigenvalues(&net).unwrap(),
            rho: 1.0,
            added: 50,
            n_agents: n,
            n_anchors: 2,
            g: 1.0,
        };
        let (densified, _) = agent_scaling_prediction(&f_g, &inputs).unwrap();
        let mut tx = nalgebra::DVector::<f64>::zeros(2 * n);
        for k in 0..n {
            tx[k] = 1.0;
        }
        let got = &densified * &tx;
        let shift = 0.5 * 50.0;
        let beta = 1.0 / (1.0 * (n + 2) as f64);
        // Identity: F [1;0] + shift (1 - beta) [1;0] - shift beta N [1;0].
        let want = &f_g * &tx + &tx * (shift * (1.0 - beta)) - &tx * (shift * beta * n as f64);
        assert!((got - want).amax() < 1e-10);
    }

    #[test]
    fn agent_prediction_with_zero_added_is_identity() {
        let net = random_torus_network::<f64>(3, 2, 100.0, 200.0, 10);
        let f_g = geometry_fisher(&net).unwrap();
        let inputs = ScalingInputs {
            eigenvalues: geometry_eigenvalues(&net).unwrap(),
            rho: 1.0,
            added: 0,
            n_agents: 3,
            n_anchors: 2,
            g: 1.0,
        };
        let (densified, _) = agent_scaling_prediction(&f_g, &inputs).unwrap();
        assert!(linalg::max_abs(&(&densified - &f_g)) < 1e-15);
    }

    #[test]
    fn lln_statistics_near_limits() {
        let reports = lln_angle_check::<f64>(1_000_000, 1, 31);
        let r = &reports[0];
        for (i, dev) in r.deviations_in_se().iter().enumerate() {
            assert!(dev.abs() < 3.0, "statistic {i} deviates {dev} SEs");
        }
    }

    #[test]
    fn rho_validation() {
        let inputs = ScalingInputs {
            eigenvalues: vec![1.0_f64],
            rho: 1.5,
            added: 1,
            n_agents: 1,
            n_anchors: 0,
            g: 1.0,
        };
        assert!(anchor_scaling_prediction(&inputs).is_err());
    }
}
