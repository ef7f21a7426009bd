//! One trial end to end: run the synchronous filter schedule over a
//! generated scenario, produce the least-squares baseline, and evaluate
//! the information bounds on the same realization's geometry.

use super::{FilterParams, HarnessError};
use crate::crlb::{
    causal_crlb_sweep, smoothing_crlb_per_epoch, CrlbOutcome, EpochGeometry, SatLink,
    StaticNetwork,
};
use crate::filter::{
    effective_sample_size, estimate, init_filter, least_squares_fix, predict, resample, update,
    FilterConfig, LinkKey, LinkObs, NeighborBelief,
};
use crate::geom::look_angles;
use crate::noise::compute_g;
use crate::rng::{stream, Purpose};
use crate::scenario::{Endpoint, ScenarioTruth};
use crate::{Position, Scalar};
use std::collections::HashMap;

/// Per-epoch, per-vehicle outcome of one filter run.
#[derive(Debug, Clone)]
pub struct TrialRun {
    /// Position error (m): `[epoch][vehicle]`.
    pub errors: Vec<Vec<Scalar>>,
    /// Effective sample size after each update, before resampling.
    pub ess: Vec<Vec<Scalar>>,
    pub resampled: Vec<Vec<bool>>,
    /// Distinct survivors of each resampling (particle count if none).
    pub distinct: Vec<Vec<usize>>,
    pub estimates: Vec<Vec<Position>>,
    pub variances: Vec<Vec<Scalar>>,
    /// Snapshot least-squares fix error where >= 2 satellites were seen.
    pub ls_errors: Vec<Vec<Option<Scalar>>>,
}

impl TrialRun {
    pub fn epochs(&self) -> usize {
        self.errors.len()
    }

    /// Mean error per epoch across vehicles.
    pub fn epoch_mean_errors(&self) -> Vec<Scalar> {
        self.errors
            .iter()
            .map(|row| row.iter().sum::<Scalar>() / row.len() as Scalar)
            .collect()
    }

    /// Mean squared error per epoch across vehicles.
    pub fn epoch_mean_sq_errors(&self) -> Vec<Scalar> {
        self.errors
            .iter()
            .map(|row| row.iter().map(|e| e * e).sum::<Scalar>() / row.len() as Scalar)
            .collect()
    }
}

/// Run the synchronous per-epoch schedule: snapshot all beliefs, predict
/// every vehicle with its INS reading, update every vehicle against the
/// snapshot, then resample where degenerate. No within-epoch iteration.
pub fn run_filter_schedule(
    truth: &ScenarioTruth,
    params: &FilterParams,
) -> Result<TrialRun, HarnessError> {
    let cfg = &truth.config;
    let n = truth.n_vehicles();
    let epochs = cfg.epochs;
    let seed = cfg.seed;
    let fcfg = FilterConfig {
        particles: params.particles,
        ess_threshold: params.ess_threshold,
        distinct_floor: params.distinct_floor,
        reseed_spread_factor: 2.0,
        reseed_spread_min: 1.0,
        sigma_ins: cfg.sigma_ins_mps,
        epoch_period: cfg.epoch_period_s,
        vehicle_noise: truth.vehicle_noise()?,
        sat_noise: truth.satellite_noise()?,
        chain: truth.los_chain()?,
        metric: truth.metric,
    };
    fcfg.validate()?;

    let mut clouds = Vec::with_capacity(n);
    for v in 0..n {
        let mut rng = stream(seed, Purpose::Prior, v as u64, 0);
        let prior_mean = truth.metric.canonical(
            truth.vehicle_position(v, 0)
                + Position::new(
                    cfg.prior_spread_m * rand_normal(&mut rng),
                    cfg.prior_spread_m * rand_normal(&mut rng),
                ),
        );
        let mut init_rng = stream(seed, Purpose::FilterInit, v as u64, 0);
        clouds.push(init_filter(v, prior_mean, cfg.prior_spread_m, &fcfg, &mut init_rng)?);
    }

    let scene_center = Position::new(
        cfg.lane_length_m / 2.0,
        cfg.lane_count as f64 * cfg.lane_width_m / 2.0,
    );
    let mut last_fix: Vec<Position> = vec![scene_center; n];

    let mut run = TrialRun {
        errors: Vec::with_capacity(epochs),
        ess: Vec::with_capacity(epochs),
        resampled: Vec::with_capacity(epochs),
        distinct: Vec::with_capacity(epochs),
        estimates: Vec::with_capacity(epochs),
        variances: Vec::with_capacity(epochs),
        ls_errors: Vec::with_capacity(epochs),
    };

    for t in 0..epochs {
        // Beliefs are snapshot at epoch start (from epoch t-1 estimates;
        // at t = 0 they are the priors themselves).
        let beliefs: HashMap<usize, NeighborBelief<Scalar>> = clouds
            .iter()
            .map(|c| (c.vehicle, estimate(c, &fcfg).to_belief(c.vehicle, c.epoch)))
            .collect();

        if t > 0 {
            for (v, cloud) in clouds.iter_mut().enumerate() {
                let mut rng = stream(seed, Purpose::FilterPredict, v as u64, t as u64);
                predict(cloud, truth.tracks[v].ins_readings[t], &fcfg, &mut rng);
            }
        }

        // Gather per-vehicle observations; pairwise ranges are seen by
        // both endpoints.
        let mut obs: Vec<Vec<LinkObs<Scalar>>> = vec![Vec::new(); n];
        for m in &truth.measurements.per_epoch[t] {
            match m.to {
                Endpoint::Vehicle(other) => {
                    obs[m.from].push(LinkObs { link: LinkKey::Vehicle(other), value: m.value });
                    obs[other].push(LinkObs { link: LinkKey::Vehicle(m.from), value: m.value });
                }
                Endpoint::Satellite(s) => {
                    obs[m.from].push(LinkObs { link: LinkKey::Satellite(s), value: m.value });
                }
            }
        }

        let mut err_row = Vec::with_capacity(n);
        let mut ess_row = Vec::with_capacity(n);
        let mut res_row = Vec::with_capacity(n);
        let mut dis_row = Vec::with_capacity(n);
        let mut est_row = Vec::with_capacity(n);
        let mut var_row = Vec::with_capacity(n);
        let mut ls_row = Vec::with_capacity(n);
        for (v, cloud) in clouds.iter_mut().enumerate() {
            let mut rng = stream(seed, Purpose::FilterResample, v as u64, t as u64);
            update(cloud, &obs[v], &beliefs, &truth.sats[t], &fcfg, &mut rng)?;
            ess_row.push(effective_sample_size(cloud));
            let outcome = resample(cloud, &fcfg, &mut rng);
            res_row.push(outcome.resampled);
            dis_row.push(if outcome.resampled { outcome.distinct } else { params.particles });
            let est = estimate(cloud, &fcfg);
            est_row.push(est.position);
            var_row.push(est.variance);
            err_row.push(truth.metric.distance(est.position, truth.vehicle_position(v, t)));

            // Snapshot least-squares baseline from this epoch's
            // satellite ranges alone.
            let ranges: Vec<_> = obs[v]
                .iter()
                .filter_map(|o| match o.link {
                    LinkKey::Satellite(s) => Some((truth.sats[t][s], o.value)),
                    LinkKey::Vehicle(_) => None,
                })
                .collect();
            if ranges.len() >= 2 {
                match least_squares_fix(&ranges, last_fix[v]) {
                    Ok(fix) => {
                        last_fix[v] = fix.position;
                        ls_row.push(Some(
                            truth
                                .metric
                                .distance(truth.metric.canonical(fix.position), truth.vehicle_position(v, t)),
                        ));
                    }
                    Err(_) => ls_row.push(None),
                }
            } else {
                ls_row.push(None);
            }
        }
        run.errors.push(err_row);
        run.ess.push(ess_row);
        run.resampled.push(res_row);
        run.distinct.push(dis_row);
        run.estimates.push(est_row);
        run.variances.push(var_row);
        run.ls_errors.push(ls_row);
    }
    Ok(run)
}

fn rand_normal(rng: &mut impl rand::Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Information bounds evaluated on one realization's geometry.
#[derive(Debug, Clone)]
pub struct BoundsRun {
    /// Smoothing bound: per-epoch trace of the all-measurement inverse.
    pub full: Vec<Option<Scalar>>,
    /// Causal bound: trace using measurements up to each epoch.
    pub causal: Vec<Option<Scalar>>,
    pub n_vehicles: usize,
}

impl BoundsRun {
    /// Causal bound per vehicle (trace / N) at one epoch.
    pub fn causal_per_vehicle(&self, epoch: usize) -> Option<Scalar> {
        self.causal[epoch].map(|t| t / self.n_vehicles as Scalar)
    }
}

/// Epoch geometries of a realization, for the bound computations.
pub fn epoch_geometries(truth: &ScenarioTruth) -> Vec<EpochGeometry<Scalar>> {
    (0..truth.config.epochs)
        .map(|t| {
            let agents: Vec<Position> =
                truth.tracks.iter().map(|tr| tr.positions[t]).collect();
            let graph = &truth.graphs[t];
            let mut sat_links = Vec::with_capacity(graph.satellite_edges.len());
            for &(v, s) in &graph.satellite_edges {
                let la = look_angles(agents[v], truth.sats[t][s]);
                sat_links.push(SatLink {
                    agent: v,
                    horizontal_dir: la
                        .horizontal_dir
                        .unwrap_or(crate::geom::Vec2::new(1.0, 0.0)),
                    elevation: la.elevation,
                });
            }
            EpochGeometry {
                net: StaticNetwork {
                    agents,
                    anchors: vec![],
                    agent_edges: graph.vehicle_edges.clone(),
                    anchor_edges: vec![],
                    metric: truth.metric,
                },
                sat_links,
            }
        })
        .collect()
}

/// Full and causal bounds for the realization. The modality must be
/// `distance`; the Fisher derivations cover nothing else.
pub fn compute_bounds(truth: &ScenarioTruth) -> Result<BoundsRun, HarnessError> {
    if truth.config.modality != crate::scenario::Modality::Distance {
        return Err(HarnessError::Crlb(crate::crlb::CrlbError::UnsupportedModality(
            truth.config.modality.name().to_string(),
        )));
    }
    let g_veh = compute_g(&truth.vehicle_noise()?)?;
    let g_sat = compute_g(&truth.satellite_noise()?)?;
    let sigma_step = truth.config.sigma_ins_mps * truth.config.epoch_period_s;
    let epochs = epoch_geometries(truth);
    let causal = causal_crlb_sweep(&epochs, g_veh, g_sat, sigma_step)?;
    let full = smoothing_crlb_per_epoch(&epochs, g_veh, g_sat, sigma_step)?;
    Ok(BoundsRun {
        full: full.iter().map(CrlbOutcome::trace).collect(),
        causal: causal.iter().map(CrlbOutcome::trace).collect(),
        n_vehicles: truth.n_vehicles(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn small_scenario() -> ScenarioTruth {
        let cfg = ScenarioConfig {
            lane_count: 2,
            vehicles_per_lane: 3,
            epochs: 12,
            seed: 5,
            ..ScenarioConfig::default()
        };
        ScenarioTruth::generate(&cfg).unwrap()
    }

    fn small_params() -> FilterParams {
        FilterParams { particles: 300, ess_threshold: 30.0, distinct_floor: 10 }
    }

    #[test]
    fn schedule_produces_full_traces() {
        let truth = small_scenario();
        let run = run_filter_schedule(&truth, &small_params()).unwrap();
        assert_eq!(run.epochs(), 12);
        assert!(run.errors.iter().all(|row| row.len() == 6));
        for (ess_row, _) in run.ess.iter().zip(run.errors.iter()) {
            for &e in ess_row {
                assert!((1.0..=300.0 + 1e-9).contains(&e), "ESS out of range: {e}");
            }
        }
        // Filter errors stay bounded on a healthy scenario.
        let final_mean = run.epoch_mean_errors()[11];
        assert!(final_mean < 20.0, "final mean error {final_mean}");
    }

    #[test]
    fn schedule_is_deterministic() {
        let truth = small_scenario();
        let a = run_filter_schedule(&truth, &small_params()).unwrap();
        let b = run_filter_schedule(&truth, &small_params()).unwrap();
        assert_eq!(a.errors, b.errors);
        assert_eq!(a.ess, b.ess);
    }

    #[test]
    fn bounds_cover_all_epochs_and_do_not_explode() {
        let truth = small_scenario();
        let bounds = compute_bounds(&truth).unwrap();
        assert_eq!(bounds.full.len(), 12);
        assert_eq!(bounds.causal.len(), 12);
        // Once information accumulates, the causal bound exists and the
        // smoothing bound can only be tighter.
        for t in 2..12 {
            if let (Some(c), Some(f)) = (bounds.causal[t], bounds.full[t]) {
                assert!(f <= c * (1.0 + 1e-8), "epoch {t}: full {f} > causal {c}");
                assert!(c.is_finite() && c > 0.0);
            }
        }
        assert!(bounds.causal[11].is_some(), "late epochs must be localizable");
    }

    #[test]
    fn rss_modality_is_rejected_for_bounds() {
        let cfg = ScenarioConfig {
            lane_count: 1,
            vehicles_per_lane: 2,
            epochs: 2,
            modality: crate::scenario::Modality::Rss,
            ..ScenarioConfig::default()
        };
        let truth = ScenarioTruth::generate(&cfg).unwrap();
        assert!(matches!(
            compute_bounds(&truth),
            Err(HarnessError::Crlb(crate::crlb::CrlbError::UnsupportedModality(_)))
        ));
    }
}
