//! Monte-Carlo empirical Fisher matrices: sample measurement sets from
//! the true geometry, numerically differentiate the log-likelihood, and
//! average the score outer products. Serves as the model-independent
//! oracle for the analytic Fisher assemblies.

use super::{CrlbError, EpochGeometry, StaticNetwork};
use crate::geom::Vec2;
use crate::noise::MixtureNoiseModel;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Relative finite-difference step for the numeric score.
const FD_STEP_REL: f64 = 1e-4;

/// Sample-averaged score outer product with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct EmpiricalFisher<T> {
    pub mean: DMatrix<T>,
    pub se: DMatrix<T>,
    /// Mean numeric score (should be ~0 by the score identity).
    pub score_mean: DVector<T>,
    pub score_se: DVector<T>,
    pub samples: usize,
}

impl<T: Real> EmpiricalFisher<T> {
    /// Largest entrywise deviation from `reference`, in SE units.
    pub fn max_deviation_se(&self, reference: &DMatrix<T>) -> T {
        let mut worst = T::zero();
        for i in 0..self.mean.nrows() {
            for j in 0..self.mean.ncols() {
                let se = self.se[(i, j)].max(T::of(1e-300));
                let dev = (self.mean[(i, j)] - reference[(i, j)]).abs() / se;
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }

    pub fn max_score_deviation_se(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.score_mean.len() {
            let se = self.score_se[i].max(T::of(1e-300));
            worst = worst.max(self.score_mean[i].abs() / se);
        }
        worst
    }
}

struct Accumulator<T> {
    sum: DMatrix<T>,
    sum_sq: DMatrix<T>,
    score_sum: DVector<T>,
    score_sum_sq: DVector<T>,
    count: usize,
    bad: bool,
}

impl<T: Real> Accumulator<T> {
    fn new(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            sum_sq: DMatrix::zeros(dim, dim),
            score_sum: DVector::zeros(dim),
            score_sum_sq: DVector::zeros(dim),
            count: 0,
            bad: false,
        }
    }

    fn push(&mut self, score: &DVector<T>) {
        if score.iter().any(|v| !v.is_finite()) {
            self.bad = true;
            return;
        }
        let dim = score.len();
        for i in 0..dim {
            self.score_sum[i] += score[i];
            self.score_sum_sq[i] += score[i] * score[i];
            for j in 0..dim {
                let v = score[i] * score[j];
                self.sum[(i, j)] += v;
                self.sum_sq[(i, j)] += v * v;
            }
        }
        self.count += 1;
    }

    fn merge(mut self, other: Self) -> Self {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.score_sum += other.score_sum;
        self.score_sum_sq += other.score_sum_sq;
        self.count += other.count;
        self.bad |= other.bad;
        self
    }

    fn finish(self) -> Result<EmpiricalFisher<T>, CrlbError> {
        if self.bad {
            return Err(CrlbError::NonFinite("log-likelihood score".into()));
        }
        let n = T::from_count(self.count);
        let dim = self.score_sum.len();
        let mean = &self.sum / n;
        let mut se = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let var = (self.sum_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)]).max(T::zero());
                se[(i, j)] = (var / n).sqrt();
            }
        }
        let score_mean = &self.score_sum / n;
        let mut score_se = DVector::zeros(dim);
        for i in 0..dim {
            let var = (self.score_sum_sq[i] / n - score_mean[i] * score_mean[i]).max(T::zero());
            score_se[i] = (var / n).sqrt();
        }
        Ok(EmpiricalFisher { mean, se, score_mean, score_se, samples: self.count })
    }
}

/// Generic driver: `sample` draws one measurement realization, `loglik`
/// evaluates its log-likelihood at perturbed agent positions.
fn run_chunks<T, S, F>(
    dim: usize,
    samples: usize,
    seed: u64,
    sample: S,
    loglik: F,
    fd_steps: &[T],
) -> Result<EmpiricalFisher<T>, CrlbError>
where
    T: Real,
    S: Fn(&mut ChaCha8Rng) -> Vec<T> + Sync,
    F: Fn(&[T], &DVector<T>) -> T + Sync,
{
    const CHUNK: usize = 2048;
    let chunks = samples.div_ceil(CHUNK);
    let acc = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let in_chunk = CHUNK.min(samples - c * CHUNK);
            let mut acc = Accumulator::<T>::new(dim);
            let mut score = DVector::zeros(dim);
            let mut shift = DVector::zeros(dim);
            for _ in 0..in_chunk {
                let obs = sample(&mut rng);
                for p in 0..dim {
                    let h = fd_steps[p];
                    shift[p] = h;
                    let up = loglik(&obs, &shift);
                    shift[p] = -h;
                    let down = loglik(&obs, &shift);
                    shift[p] = T::zero();
                    score[p] = (up - down) / (T::of(2.0) * h);
                }
                acc.push(&score);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Accumulator::new(dim), Accumulator::merge);
    acc.finish()
}

fn fd_step<T: Real>(coord: T) -> T {
    T::of(FD_STEP_REL) * coord.abs().max(T::one())
}

/// Empirical Fisher of the static ranging likelihood (distance modality,
/// one shared mixture model across edges). Parameters are the stacked
/// agent coordinates `[x(0..N); y(0..N)]`.
pub fn monte_carlo_fisher_static<T: Real>(
    net: &StaticNetwork<T>,
    model: &MixtureNoiseModel<T>,
    samples: usize,
    seed: u64,
) -> Result<EmpiricalFisher<T>, CrlbError> {
    net.validate()?;
    let n = net.n_agents();
    let dim = 2 * n;
    // Flattened edge list: (agent a, Some(agent b) | anchor position).
    enum Edge<T> {
        Agents(usize, usize),
        Anchor(usize, Vec2<T>),
    }
    let edges: Vec<Edge<T>> = net
        .agent_edges
        .iter()
        .map(|&(k, m)| Edge::Agents(k, m))
        .chain(net.anchor_edges.iter().map(|&(k, a)| Edge::Anchor(k, net.anchors[a])))
        .collect();
    let agents = net.agents.clone();
    let true_dist = |e: &Edge<T>| -> T {
        match *e {
            Edge::Agents(k, m) => agents[k].distance(agents[m]),
            Edge::Anchor(k, p) => agents[k].distance(p),
        }
    };
    let mut fd_steps = Vec::with_capacity(dim);
    for k in 0..n {
        fd_steps.push(fd_step(agents[k].x));
    }
    for k in 0..n {
        fd_steps.push(fd_step(agents[k].y));
    }

    let sample = |rng: &mut ChaCha8Rng| -> Vec<T> {
        edges.iter().map(|e| true_dist(e) + model.sample_marginal(rng).1).collect()
    };
    let loglik = |obs: &[T], shift: &DVector<T>| -> T {
        let pos = |k: usize| Vec2::new(agents[k].x + shift[k], agents[k].y + shift[n + k]);
        let mut acc = T::zero();
        for (e, &theta) in edges.iter().zip(obs.iter()) {
            let d = match *e {
                Edge::Agents(k, m) => pos(k).distance(pos(m)),
                Edge::Anchor(k, p) => pos(k).distance(p),
            };
            acc += model.log_pdf(theta - d, None);
        }
        acc
    };
    run_chunks(dim, samples, seed, sample, loglik, &fd_steps)
}

/// Empirical Fisher of the space-time likelihood: per-epoch ranging plus
/// the displacement measurements between consecutive epochs. Parameters
/// are epoch-major `[x; y]` blocks, matching
/// [`super::fisher_mobile`]'s ordering. Satellite links are not sampled
/// here; the oracle covers the planar geometry.
pub fn monte_carlo_fisher_mobile<T: Real>(
    epochs: &[EpochGeometry<T>],
    model: &MixtureNoiseModel<T>,
    sigma_step: T,
    samples: usize,
    seed: u64,
) -> Result<EmpiricalFisher<T>, CrlbError> {
    let t = epochs.len();
    if t == 0 {
        return Err(CrlbError::InvalidInput("need at least one epoch".into()));
    }
    let n = epochs[0].net.n_agents();
    let dim = 2 * n * t;
    for e in epochs {
        e.net.validate()?;
        if e.net.n_agents() != n {
            return Err(CrlbError::InvalidInput("agent count changed across epochs".into()));
        }
        if !e.sat_links.is_empty() {
            return Err(CrlbError::InvalidInput(
                "the mobile Monte-Carlo oracle covers planar links only".into(),
            ));
        }
    }
    let nets: Vec<StaticNetwork<T>> = epochs.iter().map(|e| e.net.clone()).collect();
    let mut fd_steps = Vec::with_capacity(dim);
    for net in &nets {
        for k in 0..n {
            fd_steps.push(fd_step(net.agents[k].x));
        }
        for k in 0..n {
            fd_steps.push(fd_step(net.agents[k].y));
        }
    }
    let inv_sigma = sigma_step.recip();

    // Observation layout: all ranging residual draws epoch by epoch, then
    // the (T-1) * N * 2 displacement noise draws.
    let sample = {
        let nets = nets.clone();
        move |rng: &mut ChaCha8Rng| -> Vec<T> {
            let mut obs = Vec::new();
            for net in &nets {
                for &(k, m) in &net.agent_edges {
                    obs.push(net.agents[k].distance(net.agents[m]) + model.sample_marginal(rng).1);
                }
                for &(k, a) in &net.anchor_edges {
                    obs.push(net.agents[k].distance(net.anchors[a]) + model.sample_marginal(rng).1);
                }
            }
            for _ in 0..(t - 1) * n * 2 {
                obs.push(sigma_step * T::standard_normal(rng));
            }
            obs
        }
    };
    let loglik = {
        let nets = nets.clone();
        move |obs: &[T], shift: &DVector<T>| -> T {
            let pos = |e: usize, k: usize| -> Vec2<T> {
                let base = 2 * n * e;
                Vec2::new(
                    nets[e].agents[k].x + shift[base + k],
                    nets[e].agents[k].y + shift[base + n + k],
                )
            };
            let mut acc = T::zero();
            let mut idx = 0;
            for (e, net) in nets.iter().enumerate() {
                for &(k, m) in &net.agent_edges {
                    let d = pos(e, k).distance(pos(e, m));
                    acc += model.log_pdf(obs[idx] - d, None);
                    idx += 1;
                }
                for &(k, a) in &net.anchor_edges {
                    let d = pos(e, k).distance(net.anchors[a]);
                    acc += model.log_pdf(obs[idx] - d, None);
                    idx += 1;
                }
            }
            // Displacement terms: s_t(k) = u_t(k) - u_{t-1}(k) + w.
            for e in 1..t {
                for k in 0..n {
                    let true_step = nets[e].agents[k] - nets[e - 1].agents[k];
                    let s = true_step + Vec2::new(obs[idx], obs[idx + 1]);
                    idx += 2;
                    let step = pos(e, k) - pos(e - 1, k);
                    let rx = (s.x - step.x) * inv_sigma;
                    let ry = (s.y - step.y) * inv_sigma;
                    acc -= (rx * rx + ry * ry) / T::of(2.0);
                }
            }
            acc
        }
    };
    run_chunks(dim, samples, seed, sample, loglik, &fd_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crlb::{fisher_mobile, fisher_static, geometry_fisher};
    use crate::noise::ComponentDistribution;

    fn gaussian_model(sigma: f64) -> MixtureNoiseModel<f64> {
        MixtureNoiseModel::new(
            1.0,
            ComponentDistribution::gaussian(0.0, sigma),
            ComponentDistribution::gaussian(5.0, 5.0),
        )
        .unwrap()
    }

    #[test]
    fn single_link_matches_analytic_outer_product() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![Vec2::new(6.0, 8.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let sigma = 2.0;
        let emp = monte_carlo_fisher_static(&net, &gaussian_model(sigma), 200_000, 42).unwrap();
        // Analytic: (1/sigma^2) * outer([cos, sin]) with bearing (0.6, 0.8)
        // from anchor to agent (sign cancels in the outer product).
        let mut want = DMatrix::zeros(2, 2);
        let (c, s) = (0.6, 0.8);
        want[(0, 0)] = c * c / (sigma * sigma);
        want[(1, 1)] = s * s / (sigma * sigma);
        want[(0, 1)] = c * s / (sigma * sigma);
        want[(1, 0)] = want[(0, 1)];
        assert!(emp.max_deviation_se(&want) < 3.0, "dev {}", emp.max_deviation_se(&want));
        assert!(emp.max_score_deviation_se() < 3.0);
    }

    #[test]
    fn mixture_single_link_recovers_information_functional() {
        let model = MixtureNoiseModel::new(
            0.5,
            ComponentDistribution::gaussian(0.0, 1.0),
            ComponentDistribution::gaussian(5.0, 5.0),
        )
        .unwrap();
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![Vec2::new(10.0, 0.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let emp = monte_carlo_fisher_static(&net, &model, 400_000, 7).unwrap();
        // Horizontal link: the (x, x) entry is exactly g(model).
        let g = crate::noise::compute_g(&model).unwrap();
        let dev = (emp.mean[(0, 0)] - g).abs() / emp.se[(0, 0)];
        assert!(dev < 3.0, "info {} vs g {g}, dev {dev}", emp.mean[(0, 0)]);
    }

    #[test]
    fn static_assembly_matches_empirical_on_small_network() {
        let net = StaticNetwork {
            agents: vec![
                Vec2::new(0.0_f64, 0.0),
                Vec2::new(12.0, 3.0),
                Vec2::new(5.0, 11.0),
            ],
            anchors: vec![Vec2::new(-4.0, 9.0), Vec2::new(15.0, -5.0)],
            agent_edges: vec![(0, 1), (0, 2), (1, 2)],
            anchor_edges: vec![(0, 0), (1, 1), (2, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let model = gaussian_model(1.5);
        let g = crate::noise::compute_g(&model).unwrap();
        let analytic = fisher_static(&net, g).unwrap();
        let emp = monte_carlo_fisher_static(&net, &model, 300_000, 11).unwrap();
        let dev = emp.max_deviation_se(&analytic.matrix);
        assert!(dev < 3.0, "max deviation {dev} SE");
    }

    #[test]
    fn mobile_assembly_matches_empirical() {
        let mk_net = |dx: f64| StaticNetwork {
            agents: vec![Vec2::new(dx, 0.0_f64), Vec2::new(dx + 8.0, 5.0)],
            anchors: vec![Vec2::new(3.0, 12.0)],
            agent_edges: vec![(0, 1)],
            anchor_edges: vec![(0, 0), (1, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let epochs: Vec<EpochGeometry<f64>> = (0..3)
            .map(|t| EpochGeometry { net: mk_net(1.3 * t as f64), sat_links: vec![] })
            .collect();
        let model = gaussian_model(1.0);
        let g = crate::noise::compute_g(&model).unwrap();
        let sigma_step = 0.4;
        let analytic = fisher_mobile(&epochs, g, g, sigma_step).unwrap();
        let emp =
            monte_carlo_fisher_mobile(&epochs, &model, sigma_step, 300_000, 13).unwrap();
        let dev = emp.max_deviation_se(&analytic.matrix);
        assert!(dev < 3.0, "max deviation {dev} SE");
        assert!(emp.max_score_deviation_se() < 3.0);
    }

    #[test]
    fn deterministic_across_runs() {
        let net = StaticNetwork {
            agents: vec![Vec2::new(0.0_f64, 0.0)],
            anchors: vec![Vec2::new(6.0, 8.0)],
            agent_edges: vec![],
            anchor_edges: vec![(0, 0)],
            metric: crate::geom::PlaneMetric::Euclidean,
        };
        let m = gaussian_model(1.0);
        let a = monte_carlo_fisher_static(&net, &m, 10_000, 5).unwrap();
        let b = monte_carlo_fisher_static(&net, &m, 10_000, 5).unwrap();
        assert_eq!(a.mean, b.mean);
        let fg = geometry_fisher(&net).unwrap();
        assert!(fg.nrows() == 2);
    }
}
