//! Incidence-matrix form of the geometry Fisher factor.
//!
//! Each measurement edge contributes a row of `E` with `+1` at its first
//! endpoint and `-1` at its second, so that `E x = y` holds for the
//! stacked complex node locations, with `y` the vector of location
//! differences. The diagonal matrices `D_R`, `D_I` hold the per-edge
//! direction cosines `Re{y_l/|y_l|}`, `Im{y_l/|y_l|}`.

use super::{CrlbError, StaticNetwork};
use crate::geom::Vec2;
use crate::scalar::Real;
use nalgebra::DMatrix;

/// Incidence representation of a static network's measurement edges.
///
/// Columns of `e` are ordered `[agents(0..N) | anchors(0..M)]`; `e1` is
/// the agent-column slice actually entering the Fisher factor.
#[derive(Debug, Clone)]
pub struct IncidenceSystem<T> {
    pub e: DMatrix<T>,
    pub n_agents: usize,
    pub n_anchors: usize,
    /// Complex location difference per edge (first minus second endpoint).
    pub y: Vec<Vec2<T>>,
    /// Per-edge direction cosine (diagonal of `D_R`).
    pub d_r: Vec<T>,
    /// Per-edge direction sine (diagonal of `D_I`).
    pub d_i: Vec<T>,
    /// Stacked node locations, agents then anchors.
    nodes: Vec<Vec2<T>>,
}

impl<T: Real> IncidenceSystem<T> {
    pub fn n_edges(&self) -> usize {
        self.y.len()
    }

    /// Max residual of the defining identity `E x = y`, over both
    /// coordinates of every edge.
    pub fn construction_residual(&self) -> T {
        let mut worst = T::zero();
        for (l, y) in self.y.iter().enumerate() {
            let mut acc = Vec2::zero();
            for (j, node) in self.nodes.iter().enumerate() {
                let w = self.e[(l, j)];
                if !w.is_zero() {
                    acc += *node * w;
                }
            }
            worst = worst.max((acc.x - y.x).abs()).max((acc.y - y.y).abs());
        }
        worst
    }

    /// Geometry Fisher factor in compact form:
    /// `[[E1^T D_R^2 E1, E1^T D_R D_I E1], [sym, E1^T D_I^2 E1]]`.
    pub fn geometry_fisher(&self) -> DMatrix<T> {
        let n = self.n_agents;
        let l = self.n_edges();
        let e1 = self.e.view((0, 0), (l, n));
        let mut drr = DMatrix::zeros(l, l);
        let mut dii = DMatrix::zeros(l, l);
        let mut dri = DMatrix::zeros(l, l);
        for i in 0..l {
            drr[(i, i)] = self.d_r[i] * self.d_r[i];
            dii[(i, i)] = self.d_i[i] * self.d_i[i];
            dri[(i, i)] = self.d_r[i] * self.d_i[i];
        }
        let e1t = e1.transpose();
        let rr = &e1t * &drr * e1;
        let ii = &e1t * &dii * e1;
        let ri = &e1t * &dri * e1;
        let mut f = DMatrix::zeros(2 * n, 2 * n);
        f.view_mut((0, 0), (n, n)).copy_from(&rr);
        f.view_mut((n, n), (n, n)).copy_from(&ii);
        f.view_mut((0, n), (n, n)).copy_from(&ri);
        f.view_mut((n, 0), (n, n)).copy_from(&ri.transpose());
        f
    }
}

/// Build the incidence system of a network's measurement edges. Agent
/// edges come first (in stored order), anchor edges after.
pub fn build_incidence<T: Real>(net: &StaticNetwork<T>) -> Result<IncidenceSystem<T>, CrlbError> {
    net.validate()?;
    if !net.metric.is_euclidean() {
        return Err(CrlbError::InvalidInput(
            "the incidence identity E x = y needs a Euclidean embedding; wrapped \
             metrics use the entrywise assembly"
                .into(),
        ));
    }
    let n = net.n_agents();
    let m = net.anchors.len();
    let l = net.n_edges();
    let mut e = DMatrix::zeros(l, n + m);
    let mut y = Vec::with_capacity(l);
    let mut d_r = Vec::with_capacity(l);
    let mut d_i = Vec::with_capacity(l);
    let mut push_edge = |row: usize,
                         e: &mut DMatrix<T>,
                         i: usize,
                         j: usize,
                         diff: Vec2<T>|
     -> Result<(), CrlbError> {
        let len = diff.norm();
        if len.is_zero() {
            return Err(CrlbError::CoincidentNodes(i, j));
        }
        e[(row, i)] = T::one();
        e[(row, j)] = -T::one();
        y.push(diff);
        d_r.push(diff.x / len);
        d_i.push(diff.y / len);
        Ok(())
    };
    let mut row = 0;
    for &(k, mm) in &net.agent_edges {
        push_edge(row, &mut e, k, mm, net.agents[k] - net.agents[mm])?;
        row += 1;
    }
    for &(k, a) in &net.anchor_edges {
        push_edge(row, &mut e, k, n + a, net.agents[k] - net.anchors[a])?;
        row += 1;
    }
    let mut nodes = net.agents.clone();
    nodes.extend_from_slice(&net.anchors);
    Ok(IncidenceSystem { e, n_agents: n, n_anchors: m, y, d_r, d_i, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_edge_has_unit_cosine() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0), Vec2::new(4.0, 0.0)],
            anchors: vec![],
            agent_edges: vec![(0, 1)],
            anchor_edges: vec![],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let sys = build_incidence(&net).unwrap();
        assert!((sys.d_r[0].abs() - 1.0).abs() < 1e-15);
        assert!(sys.d_i[0].abs() < 1e-15);
    }

    #[test]
    fn diagonal_edge_splits_evenly() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![Vec2::new(-3.0, -3.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let sys = build_incidence(&net).unwrap();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert!((sys.d_r[0] - inv_sqrt2).abs() < 1e-15);
        assert!((sys.d_i[0] - inv_sqrt2).abs() < 1e-15);
        // Unit direction invariant.
        assert!((sys.d_r[0].powi(2) + sys.d_i[0].powi(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn construction_identity_holds_on_random_graph() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let agents: Vec<Vec2<f64>> =
            (0..6).map(|_| Vec2::new(rng.gen::<f64>() * 40.0, rng.gen::<f64>() * 40.0)).collect();
        let anchors: Vec<Vec2<f64>> =
            (0..2).map(|_| Vec2::new(rng.gen::<f64>() * 40.0, rng.gen::<f64>() * 40.0)).collect();
        let mut agent_edges = Vec::new();
        for k in 0..6 {
            for m in (k + 1)..6 {
                if rng.gen::<f64>() < 0.6 {
                    agent_edges.push((k, m));
                }
            }
        }
        let net = StaticNetwork {
            agents,
            anchors,
            agent_edges,
            anchor_edges: vec![(0, 0), (3, 1)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let sys = build_incidence(&net).unwrap();
        assert!(sys.construction_residual() < 1e-12);
        // Every row has exactly one +1 and one -1.
        for l in 0..sys.n_edges() {
            let mut plus = 0;
            let mut minus = 0;
            for j in 0..sys.e.ncols() {
                if sys.e[(l, j)] == 1.0 {
                    plus += 1;
                } else if sys.e[(l, j)] == -1.0 {
                    minus += 1;
                } else {
                    assert_eq!(sys.e[(l, j)], 0.0);
                }
            }
            assert_eq!((plus, minus), (1, 1));
        }
    }

    #[test]
    fn coincident_endpoints_error() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(2.0_f64, 2.0)],
            anchors: vec![Vec2::new(2.0, 2.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        assert!(matches!(build_incidence(&net), Err(CrlbError::CoincidentNodes(_, _))));
    }
}
