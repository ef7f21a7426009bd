//! Fisher information and Cramer-Rao bounds for range-based cooperative
//! localization.
//!
//! The central structure is the separation `F = g * F_G`: a scalar
//! information functional of the noise distribution (see
//! [`crate::noise::compute_g`]) times a matrix that depends only on node
//! geometry and connectivity. Static Fisher matrices are assembled twice
//! (entrywise trigonometric form and incidence-matrix form) and
//! cross-checked before being returned.
//!
//! Parameter ordering is documented per structure: static matrices use
//! `[x(0..N); y(0..N)]`; space-time matrices stack one such block per
//! epoch, epoch-major.

mod incidence;
pub mod linalg;
mod mc;
mod mobile;
mod scaling;

pub use incidence::{build_incidence, IncidenceSystem};
pub use linalg::{is_psd, schur_complement, sym_inverse, BlockTridiag, SymInverse};
pub use mc::{monte_carlo_fisher_mobile, monte_carlo_fisher_static, EmpiricalFisher};
pub use mobile::{causal_crlb, causal_crlb_sweep, fisher_mobile, smoothing_crlb_per_epoch, EpochGeometry};
pub use scaling::{
    agent_scaling_empirical, agent_scaling_prediction, anchor_scaling_empirical,
    anchor_scaling_prediction, geometry_eigenvalues, lln_angle_check, random_torus_network,
    LlnReport, ScalingInputs,
};

use crate::geom::{PlaneMetric, Vec2};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrlbError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("coincident nodes on edge ({0}, {1}): bearing undefined")]
    CoincidentNodes(usize, usize),
    #[error("trailing block singular (condition number {condition:.3e})")]
    SingularBlock { condition: f64 },
    #[error("the two Fisher constructions disagree (relative error {0:.3e})")]
    ConstructionMismatch(f64),
    #[error("Fisher assembly supports the distance modality only, got {0}")]
    UnsupportedModality(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Agents (unknown positions) and anchors (known positions) with the
/// measurement edges between them. Edges are undirected; agent-agent
/// edges are stored once. Edge bearings follow the metric's minimal
/// displacement, so wrapped road geometry keeps correct directions.
#[derive(Debug, Clone)]
pub struct StaticNetwork<T> {
    pub agents: Vec<Vec2<T>>,
    pub anchors: Vec<Vec2<T>>,
    /// Agent-agent measurement pairs `(k, m)` with `k < m`.
    pub agent_edges: Vec<(usize, usize)>,
    /// Agent-anchor measurement pairs `(agent, anchor)`.
    pub anchor_edges: Vec<(usize, usize)>,
    pub metric: PlaneMetric<T>,
}

impl<T: Real> StaticNetwork<T> {
    /// Euclidean-plane network.
    pub fn of(
        agents: Vec<Vec2<T>>,
        anchors: Vec<Vec2<T>>,
        agent_edges: Vec<(usize, usize)>,
        anchor_edges: Vec<(usize, usize)>,
    ) -> Self {
        Self { agents, anchors, agent_edges, anchor_edges, metric: PlaneMetric::Euclidean }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_edges(&self) -> usize {
        self.agent_edges.len() + self.anchor_edges.len()
    }

    /// Connect every pair within `radius` under the given metric.
    pub fn connect_by_radius(
        agents: Vec<Vec2<T>>,
        anchors: Vec<Vec2<T>>,
        radius: T,
        metric: PlaneMetric<T>,
    ) -> Self {
        let mut agent_edges = Vec::new();
        for k in 0..agents.len() {
            for m in (k + 1)..agents.len() {
                if metric.distance(agents[k], agents[m]) <= radius {
                    agent_edges.push((k, m));
                }
            }
        }
        let mut anchor_edges = Vec::new();
        for k in 0..agents.len() {
            for a in 0..anchors.len() {
                if metric.distance(agents[k], anchors[a]) <= radius {
                    anchor_edges.push((k, a));
                }
            }
        }
        Self { agents, anchors, agent_edges, anchor_edges, metric }
    }

    pub fn validate(&self) -> Result<(), CrlbError> {
        for &(k, m) in &self.agent_edges {
            if k >= self.agents.len() || m >= self.agents.len() || k == m {
                return Err(CrlbError::InvalidInput(format!(
                    "agent edge ({k}, {m}) out of range for {} agents",
                    self.agents.len()
                )));
            }
        }
        for &(k, a) in &self.anchor_edges {
            if k >= self.agents.len() || a >= self.anchors.len() {
                return Err(CrlbError::InvalidInput(format!(
                    "anchor edge ({k}, {a}) out of range"
                )));
            }
        }
        Ok(())
    }

    /// Unit direction and length of an agent-agent edge (minimal
    /// displacement under the metric, pointing from `m` towards `k`).
    fn agent_edge_dir(&self, k: usize, m: usize) -> Result<(Vec2<T>, T), CrlbError> {
        let d = self.metric.displacement(self.agents[m], self.agents[k]);
        let len = d.norm();
        if len.is_zero() {
            return Err(CrlbError::CoincidentNodes(k, m));
        }
        Ok((Vec2::new(d.x / len, d.y / len), len))
    }

    fn anchor_edge_dir(&self, k: usize, a: usize) -> Result<(Vec2<T>, T), CrlbError> {
        let d = self.metric.displacement(self.anchors[a], self.agents[k]);
        let len = d.norm();
        if len.is_zero() {
            return Err(CrlbError::CoincidentNodes(k, self.agents.len() + a));
        }
        Ok((Vec2::new(d.x / len, d.y / len), len))
    }
}

/// A range measurement from an agent to a satellite, projected onto the
/// plane: the horizontal unit direction towards the satellite and its
/// elevation. The 2-D information contribution is the rank-one outer
/// product of `cos(el) * horizontal_dir`, the horizontal sensitivity of
/// the 3-D range.
#[derive(Debug, Clone, Copy)]
pub struct SatLink<T> {
    pub agent: usize,
    pub horizontal_dir: Vec2<T>,
    pub elevation: T,
}

/// Fisher information matrix over stacked planar coordinates.
///
/// Static ordering: `[x(0..N); y(0..N)]`. Mobile ordering: one static
/// block per epoch, epoch-major, `2 * n_agents * epochs` total.
#[derive(Debug, Clone)]
pub struct FisherMatrix<T> {
    pub matrix: DMatrix<T>,
    pub n_agents: usize,
    pub epochs: usize,
}

impl<T: Real> FisherMatrix<T> {
    pub fn dim(&self) -> usize {
        2 * self.n_agents * self.epochs
    }

    pub fn psd(&self) -> bool {
        is_psd(&self.matrix)
    }
}

/// Result of inverting a Fisher matrix.
#[derive(Debug, Clone)]
pub enum CrlbOutcome<T> {
    Bounded {
        /// Trace of the inverse (m^2), summed over all coordinates.
        trace: T,
        /// Per-node bound: `x`-diag + `y`-diag of the inverse, epoch-major.
        per_node: Vec<T>,
        min_eig: T,
    },
    /// The network is unlocalizable; the basis spans the unobservable
    /// motions (e.g. the two translations of an anchor-free network).
    Unlocalizable { null_basis: Vec<DVector<T>>, min_eig: T },
}

impl<T: Real> CrlbOutcome<T> {
    pub fn trace(&self) -> Option<T> {
        match self {
            CrlbOutcome::Bounded { trace, .. } => Some(*trace),
            CrlbOutcome::Unlocalizable { .. } => None,
        }
    }
}

/// Accumulate one edge's rank-one information into a static block.
/// `k` always participates; `m_opt` is the other endpoint when that
/// endpoint is also an unknown.
pub(crate) fn accumulate_edge<T: Real>(
    f: &mut DMatrix<T>,
    n: usize,
    k: usize,
    m_opt: Option<usize>,
    dir: Vec2<T>,
    weight: T,
) {
    let cc = weight * dir.x * dir.x;
    let ss = weight * dir.y * dir.y;
    let cs = weight * dir.x * dir.y;
    f[(k, k)] += cc;
    f[(n + k, n + k)] += ss;
    f[(k, n + k)] += cs;
    f[(n + k, k)] += cs;
    if let Some(m) = m_opt {
        f[(m, m)] += cc;
        f[(n + m, n + m)] += ss;
        f[(m, n + m)] += cs;
        f[(n + m, m)] += cs;
        f[(k, m)] -= cc;
        f[(m, k)] -= cc;
        f[(n + k, n + m)] -= ss;
        f[(n + m, n + k)] -= ss;
        f[(k, n + m)] -= cs;
        f[(n + m, k)] -= cs;
        f[(m, n + k)] -= cs;
        f[(n + k, m)] -= cs;
    }
}

/// Geometry factor `F_G` assembled entrywise from the per-edge bearing
/// formulas (unit noise information).
pub fn geometry_fisher<T: Real>(net: &StaticNetwork<T>) -> Result<DMatrix<T>, CrlbError> {
    net.validate()?;
    let n = net.n_agents();
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    for &(k, m) in &net.agent_edges {
        let (dir, _) = net.agent_edge_dir(k, m)?;
        accumulate_edge(&mut f, n, k, Some(m), dir, T::one());
    }
    for &(k, a) in &net.anchor_edges {
        let (dir, _) = net.anchor_edge_dir(k, a)?;
        accumulate_edge(&mut f, n, k, None, dir, T::one());
    }
    Ok(f)
}

/// Static Fisher matrix `F = g * F_G` for the distance modality.
///
/// Assembles the matrix both entrywise and through the incidence-matrix
/// compact form and requires the two to agree to 1e-10 relative before
/// returning.
pub fn fisher_static<T: Real>(
    net: &StaticNetwork<T>,
    g: T,
) -> Result<FisherMatrix<T>, CrlbError> {
    if !(g > T::zero()) || !g.is_finite() {
        return Err(CrlbError::InvalidInput(format!(
            "noise information g must be positive and finite, got {g}"
        )));
    }
    let entrywise = geometry_fisher(net)?;
    let incidence = build_incidence(net)?;
    let compact = incidence.geometry_fisher();
    let scale = linalg::max_abs(&entrywise).max(T::of(1e-300));
    let diff = linalg::max_abs(&(&entrywise - &compact)) / scale;
    if diff > T::of(1e-10) {
        return Err(CrlbError::ConstructionMismatch(diff.as_f64()));
    }
    Ok(FisherMatrix { matrix: entrywise * g, n_agents: net.n_agents(), epochs: 1 })
}

/// Heterogeneous-link Fisher: inter-vehicle information plus satellite
/// information, each with its own noise functional:
/// `F = g_veh * F_G_veh + g_sat * F_G_sat`.
pub fn fisher_heterogeneous<T: Real>(
    net: &StaticNetwork<T>,
    sat_links: &[SatLink<T>],
    g_veh: T,
    g_sat: T,
) -> Result<FisherMatrix<T>, CrlbError> {
    if !(g_veh >= T::zero() && g_sat >= T::zero()) {
        return Err(CrlbError::InvalidInput(
            "noise information values must be nonnegative".into(),
        ));
    }
    let n = net.n_agents();
    let mut f = geometry_fisher(net)? * g_veh;
    for link in sat_links {
        if link.agent >= n {
            return Err(CrlbError::InvalidInput(format!(
                "satellite link references agent {} of {n}",
                link.agent
            )));
        }
        let w = link.elevation.cos();
        // Squared horizontal sensitivity of the slant range.
        accumulate_edge(&mut f, n, link.agent, None, link.horizontal_dir, g_sat * w * w);
    }
    Ok(FisherMatrix { matrix: f, n_agents: n, epochs: 1 })
}

/// Trace bound and per-node diagonal of `F^{-1}`, or the null-space
/// basis when the matrix is singular at the relative eigenvalue floor.
pub fn crlb_trace<T: Real>(f: &FisherMatrix<T>) -> Result<CrlbOutcome<T>, CrlbError> {
    linalg::check_symmetric(&f.matrix, "crlb_trace")?;
    match sym_inverse(&f.matrix) {
        SymInverse::Invertible { inverse, min_eig, .. } => {
            let blocks = f.n_agents * f.epochs;
            let mut per_node = Vec::with_capacity(blocks);
            let n = f.n_agents;
            for e in 0..f.epochs {
                let base = 2 * n * e;
                for k in 0..n {
                    per_node.push(inverse[(base + k, base + k)] + inverse[(base + n + k, base + n + k)]);
                }
            }
            Ok(CrlbOutcome::Bounded { trace: inverse.trace(), per_node, min_eig })
        }
        SymInverse::Singular { null_basis, min_eig, .. } => {
            Ok(CrlbOutcome::Unlocalizable { null_basis, min_eig })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_anchor_symmetric() -> StaticNetwork<f64> {
        // One agent at the origin, three anchors at bearings 0, 120, 240 deg.
        let r = 10.0;
        let anchors = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        StaticNetwork {
            agents: vec![Vec2::new(0.0, 0.0)],
            anchors,
            agent_edges: vec![],
            anchor_edges: vec![(0, 0), (0, 1), (0, 2)],
            metric: crate::geom::PlaneMetric::Euclidean,
        }
    }

    #[test]
    fn symmetric_three_anchor_fisher() {
        let f = fisher_static(&three_anchor_symmetric(), 1.0).unwrap();
        assert!((f.matrix[(0, 0)] - 1.5).abs() < 1e-12);
        assert!((f.matrix[(1, 1)] - 1.5).abs() < 1e-12);
        assert!(f.matrix[(0, 1)].abs() < 1e-12);
        match crlb_trace(&f).unwrap() {
            CrlbOutcome::Bounded { trace, per_node, .. } => {
                assert!((trace - 4.0 / 3.0).abs() < 1e-12);
                assert!((per_node[0] - 4.0 / 3.0).abs() < 1e-12);
            }
            CrlbOutcome::Unlocalizable { .. } => panic!("localizable by construction"),
        }
    }

    #[test]
    fn collinear_anchors_are_singular() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![Vec2::new(5.0, 0.0), Vec2::new(9.0, 0.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0), (0, 1)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let f = fisher_static(&net, 1.0).unwrap();
        assert!((f.matrix[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(f.matrix[(1, 1)].abs() < 1e-12);
        match crlb_trace(&f).unwrap() {
            CrlbOutcome::Unlocalizable { null_basis, .. } => {
                assert_eq!(null_basis.len(), 1);
                // Null direction is the y translation of the lone agent.
                assert!(null_basis[0][1].abs() > 0.99);
            }
            CrlbOutcome::Bounded { .. } => panic!("degenerate geometry must be singular"),
        }
    }

    #[test]
    fn anchor_free_network_nullspace_contains_translations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agents: Vec<Vec2<f64>> =
            (0..5).map(|_| Vec2::new(rng.gen::<f64>() * 20.0, rng.gen::<f64>() * 20.0)).collect();
        let mut agent_edges = Vec::new();
        for k in 0..5 {
            for m in (k + 1)..5 {
                agent_edges.push((k, m));
            }
        }
        let net = StaticNetwork::of(agents, vec![], agent_edges, vec![]);
        let fg = geometry_fisher(&net).unwrap();
        let n = 5;
        // F_G annihilates [1_N; 0] and [0; 1_N] exactly by row-sum structure.
        let mut tx = DVector::zeros(2 * n);
        let mut ty = DVector::zeros(2 * n);
        for k in 0..n {
            tx[k] = 1.0;
            ty[n + k] = 1.0;
        }
        assert!((&fg * &tx).amax() < 1e-12);
        assert!((&fg * &ty).amax() < 1e-12);
        let f = FisherMatrix { matrix: fg, n_agents: n, epochs: 1 };
        assert!(matches!(crlb_trace(&f).unwrap(), CrlbOutcome::Unlocalizable { .. }));
    }

    #[test]
    fn dual_construction_agrees_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..100 {
            let n = rng.gen_range(2..=10);
            let m = rng.gen_range(0..=5);
            let agents: Vec<Vec2<f64>> =
                (0..n).map(|_| Vec2::new(rng.gen::<f64>() * 100.0, rng.gen::<f64>() * 100.0)).collect();
            let anchors: Vec<Vec2<f64>> =
                (0..m).map(|_| Vec2::new(rng.gen::<f64>() * 100.0, rng.gen::<f64>() * 100.0)).collect();
            let mut agent_edges = Vec::new();
            for k in 0..n {
                for l in (k + 1)..n {
                    if rng.gen::<f64>() < 0.5 {
                        agent_edges.push((k, l));
                    }
                }
            }
            let mut anchor_edges = Vec::new();
            for k in 0..n {
                for a in 0..m {
                    if rng.gen::<f64>() < 0.5 {
                        anchor_edges.push((k, a));
                    }
                }
            }
            let net = StaticNetwork::of(agents, anchors, agent_edges, anchor_edges);
            // fisher_static internally asserts the dual-construction match.
            let f = fisher_static(&net, 2.5).unwrap();
            assert!(f.psd(), "trial {trial}: assembled Fisher not PSD");
        }
    }

    #[test]
    fn separation_scales_linearly_in_g() {
        let net = three_anchor_symmetric();
        let f1 = fisher_static(&net, 1.0).unwrap();
        let fg = fisher_static(&net, 7.25).unwrap();
        let scaled = &f1.matrix * 7.25;
        assert!(linalg::max_abs(&(&fg.matrix - &scaled)) <= 1e-12 * linalg::max_abs(&scaled));
    }

    #[test]
    fn heterogeneous_merges_and_respects_zero_weight() {
        let net = three_anchor_symmetric();
        // Same geometry expressed as satellite links at elevation 0.
        let sat_links: Vec<SatLink<f64>> = (0..3)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                SatLink { agent: 0, horizontal_dir: Vec2::new(a.cos(), a.sin()), elevation: 0.0 }
            })
            .collect();
        let same_g = fisher_heterogeneous(&net, &sat_links, 1.0, 1.0).unwrap();
        // Anchors and the elevation-0 satellite links double every entry
        // relative to the anchor-only matrix.
        let anchor_only = fisher_static(&net, 1.0).unwrap();
        assert!(
            linalg::max_abs(&(&same_g.matrix - &(&anchor_only.matrix * 2.0)))
                < 1e-12 * linalg::max_abs(&same_g.matrix)
        );

        let sat_zero = fisher_heterogeneous(&net, &sat_links, 1.0, 0.0).unwrap();
        assert!(
            linalg::max_abs(&(&sat_zero.matrix - &anchor_only.matrix))
                < 1e-14 * linalg::max_abs(&anchor_only.matrix)
        );
    }

    #[test]
    fn zenith_satellite_contributes_nothing() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![],
            agent_edges: vec![],
            anchor_edges: vec![],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let link = SatLink {
            agent: 0,
            horizontal_dir: Vec2::new(1.0, 0.0),
            elevation: std::f64::consts::FRAC_PI_2,
        };
        let f = fisher_heterogeneous(&net, &[link], 1.0, 1.0).unwrap();
        assert!(linalg::max_abs(&f.matrix) < 1e-30);

        // Cross-check the cos^2(el) weight against a finite difference of
        // the 3-D range in the horizontal direction.
        use crate::geom::{ground_range, Vec3, EARTH_RADIUS_M};
        let el: f64 = 0.7;
        let range = 2.0e7;
        let sat = Vec3::new(
            EARTH_RADIUS_M + range * el.sin(),
            range * el.cos(),
            0.0,
        );
        let h = 1e-3;
        let d0 = ground_range(Vec2::new(-h, 0.0), sat);
        let d1 = ground_range(Vec2::new(h, 0.0), sat);
        let sens = (d1 - d0) / (2.0 * h);
        assert!(
            (sens.powi(2) - el.cos().powi(2)).abs() < 1e-4,
            "horizontal range sensitivity {} vs cos^2 el {}",
            sens.powi(2),
            el.cos().powi(2)
        );
    }

    #[test]
    fn coincident_nodes_rejected() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(1.0_f64, 1.0), Vec2::new(1.0, 1.0)],
            anchors: vec![],
            agent_edges: vec![(0, 1)],
            anchor_edges: vec![],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        assert!(matches!(
            fisher_static(&net, 1.0),
            Err(CrlbError::CoincidentNodes(0, 1))
        ));
    }

    #[test]
    fn trace_by_eigenvalues_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let agents: Vec<Vec2<f64>> =
            (0..6).map(|_| Vec2::new(rng.gen::<f64>() * 50.0, rng.gen::<f64>() * 50.0)).collect();
        let anchors =
            vec![Vec2::new(-10.0, -10.0), Vec2::new(60.0, -10.0), Vec2::new(25.0, 60.0)];
        let net = StaticNetwork::connect_by_radius(agents, anchors, 1000.0, PlaneMetric::Euclidean);
        let f = fisher_static(&net, 1.0).unwrap();
        let direct = f.matrix.clone().try_inverse().unwrap().trace();
        match crlb_trace(&f).unwrap() {
            CrlbOutcome::Bounded { trace, .. } => {
                assert!((trace - direct).abs() < 1e-8 * direct.abs());
            }
            CrlbOutcome::Unlocalizable { .. } => panic!("full connectivity is localizable"),
        }
    }
}
