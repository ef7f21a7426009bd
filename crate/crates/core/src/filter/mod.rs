//! Per-vehicle particle filter with per-link hidden-flag tracking.
//!
//! Each vehicle runs its own filter over its own position. Neighbors
//! enter only through their broadcast beliefs (position estimate,
//! scalar variance, velocity), never through their true state. Every
//! link (neighbor or satellite) carries a per-particle posterior over
//! the hidden LOS flag; the link evidence obtained by summing that
//! posterior against the component likelihoods is the particle's weight
//! increment. All weight arithmetic is in log domain.

mod grid;
mod lsq;

pub use grid::{grid_oracle_filter, GridPosterior, GridSpec, ToyScenario};
pub use lsq::{least_squares_fix, LsFix};

use crate::geom::{ground_range, PlaneMetric, Vec2, Vec3};
use crate::noise::{LosMarkov, MixtureNoiseModel, LOS, NLOS};
use crate::scalar::{logsumexp, Real};
use rand::Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no broadcast belief available for neighbor {0}")]
    MissingNeighborBelief(usize),
    #[error("satellite index {0} out of range")]
    UnknownSatellite(usize),
    #[error("grid oracle cap exceeded: {0}")]
    GridTooLarge(String),
    #[error("need at least {need} satellites for a fix, got {got}")]
    InsufficientSatellites { got: usize, need: usize },
}

/// Identifies the far end of a measurement link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkKey {
    Vehicle(usize),
    Satellite(usize),
}

/// One measurement handed to the filter: link plus observed value. The
/// hidden LOS flag never crosses this interface.
#[derive(Debug, Clone, Copy)]
pub struct LinkObs<T> {
    pub link: LinkKey,
    pub value: T,
}

/// What a vehicle broadcasts each epoch.
#[derive(Debug, Clone, Copy)]
pub struct NeighborBelief<T> {
    pub sender: usize,
    pub epoch: usize,
    pub position: Vec2<T>,
    /// Per-axis position variance (trace of the 2x2 covariance over 2).
    pub variance: T,
    pub velocity: Vec2<T>,
}

/// Filter tuning; noise models and the flag chain mirror the scenario's.
#[derive(Debug, Clone)]
pub struct FilterConfig<T> {
    pub particles: usize,
    pub ess_threshold: T,
    /// Resampling falls back to a reseed below this many distinct survivors.
    pub distinct_floor: usize,
    pub reseed_spread_factor: T,
    pub reseed_spread_min: T,
    pub sigma_ins: T,
    pub epoch_period: T,
    pub vehicle_noise: MixtureNoiseModel<T>,
    pub sat_noise: MixtureNoiseModel<T>,
    pub chain: LosMarkov<T>,
    pub metric: PlaneMetric<T>,
}

impl<T: Real> FilterConfig<T> {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.particles == 0 {
            return Err(FilterError::InvalidInput("need at least one particle".into()));
        }
        if !(self.ess_threshold > T::zero())
            || self.ess_threshold > T::from_count(self.particles)
        {
            return Err(FilterError::InvalidInput(format!(
                "ESS threshold must lie in (0, K], got {}",
                self.ess_threshold
            )));
        }
        Ok(())
    }

    fn step_sigma(&self) -> T {
        self.sigma_ins * self.epoch_period
    }
}

/// Per-link, per-particle posterior over the hidden flag.
#[derive(Debug, Clone)]
struct ZTable<T> {
    last_epoch: usize,
    /// `rows[i] = [p_nlos, p_los]`, each summing to one.
    rows: Vec<[T; 2]>,
}

/// The particle representation of one vehicle's position posterior.
#[derive(Debug, Clone)]
pub struct ParticleCloud<T> {
    pub vehicle: usize,
    /// Last processed epoch.
    pub epoch: usize,
    pub positions: Vec<Vec2<T>>,
    /// Normalized: `logsumexp(log_weights) = 0`.
    pub log_weights: Vec<T>,
    /// INS reading consumed by the latest predict.
    pub last_ins: Vec2<T>,
    tables: HashMap<LinkKey, ZTable<T>>,
}

/// Point summary of a cloud.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub position: Vec2<T>,
    /// Per-axis variance (trace of the weighted covariance over 2).
    pub variance: T,
    /// Latest INS reading; what the vehicle broadcasts as its velocity.
    pub velocity: Vec2<T>,
}

impl<T: Real> Estimate<T> {
    pub fn to_belief(&self, sender: usize, epoch: usize) -> NeighborBelief<T> {
        NeighborBelief {
            sender,
            epoch,
            position: self.position,
            variance: self.variance,
            velocity: self.velocity,
        }
    }
}

/// Draw the initial cloud from a Gaussian prior around `prior_mean`.
/// A zero spread degenerates to a point prior; negative spread is an error.
pub fn init_filter<T: Real, R: Rng + ?Sized>(
    vehicle: usize,
    prior_mean: Vec2<T>,
    prior_spread: T,
    config: &FilterConfig<T>,
    rng: &mut R,
) -> Result<ParticleCloud<T>, FilterError> {
    config.validate()?;
    if !(prior_spread >= T::zero()) || !prior_spread.is_finite() {
        return Err(FilterError::InvalidInput(format!(
            "prior spread must be nonnegative, got {prior_spread}"
        )));
    }
    let k = config.particles;
    let positions = (0..k)
        .map(|_| {
            config.metric.canonical(
                prior_mean
                    + Vec2::new(
                        prior_spread * T::standard_normal(rng),
                        prior_spread * T::standard_normal(rng),
                    ),
            )
        })
        .collect();
    let log_uniform = -T::from_count(k).ln();
    Ok(ParticleCloud {
        vehicle,
        epoch: 0,
        positions,
        log_weights: vec![log_uniform; k],
        last_ins: Vec2::zero(),
        tables: HashMap::new(),
    })
}

/// Move every particle by the INS reading plus dead-reckoning diffusion;
/// weights are untouched (the proposal is the motion prior, so the
/// incremental weight carries only the likelihood). Advances the epoch.
pub fn predict<T: Real, R: Rng + ?Sized>(
    cloud: &mut ParticleCloud<T>,
    ins_reading: Vec2<T>,
    config: &FilterConfig<T>,
    rng: &mut R,
) {
    let step = ins_reading * config.epoch_period;
    let sigma = config.step_sigma();
    for p in &mut cloud.positions {
        let diffused = *p
            + step
            + Vec2::new(sigma * T::standard_normal(rng), sigma * T::standard_normal(rng));
        *p = config.metric.canonical(diffused);
    }
    cloud.last_ins = ins_reading;
    cloud.epoch += 1;
}

/// Anchor data resolved for one link at the current epoch.
enum LinkAnchor<T> {
    /// Extrapolated neighbor position and its reported variance.
    Peer(Vec2<T>, T),
    Sat(Vec3<T>),
}

/// What happened during an update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateOutcome {
    pub links_used: usize,
    /// Total evidence underflowed and the cloud was reseeded once.
    pub recovered_from_underflow: bool,
    /// Evidence still underflowed after recovery; weights were reset.
    pub abandoned_epoch: bool,
}

/// Apply one epoch's measurements. For each link the per-particle flag
/// posterior is advanced through the transition chain, multiplied by the
/// component likelihoods, renormalized, and its evidence accumulates
/// onto the particle's log-weight. Links absent for one or more epochs
/// restart from the stationary distribution.
pub fn update<T: Real, R: Rng + ?Sized>(
    cloud: &mut ParticleCloud<T>,
    observations: &[LinkObs<T>],
    beliefs: &HashMap<usize, NeighborBelief<T>>,
    sats: &[Vec3<T>],
    config: &FilterConfig<T>,
    rng: &mut R,
) -> Result<UpdateOutcome, FilterError> {
    let mut outcome = UpdateOutcome::default();
    if observations.is_empty() {
        cloud.prune_tables_except(&[]);
        return Ok(outcome);
    }
    let epoch = cloud.epoch;
    let anchors = resolve_anchors(observations, beliefs, sats, config, epoch)?;
    outcome.links_used = observations.len();

    let dead = apply_measurements(cloud, observations, &anchors, config);
    if dead {
        // Total numerical underflow: every particle is incompatible with
        // the evidence. Reseed around the previous estimate and retry.
        outcome.recovered_from_underflow = true;
        let est = estimate_with(cloud, &config.metric);
        let spread = reseed_spread_from_variance(est.variance, config);
        reseed(cloud, est.position, spread, config, rng);
        let still_dead = apply_measurements(cloud, observations, &anchors, config);
        if still_dead {
            outcome.abandoned_epoch = true;
            let k = cloud.positions.len();
            cloud.log_weights.fill(-T::from_count(k).ln());
        }
    }
    let keys: Vec<LinkKey> = observations.iter().map(|o| o.link).collect();
    cloud.prune_tables_except(&keys);
    Ok(outcome)
}

fn resolve_anchors<T: Real>(
    observations: &[LinkObs<T>],
    beliefs: &HashMap<usize, NeighborBelief<T>>,
    sats: &[Vec3<T>],
    config: &FilterConfig<T>,
    epoch: usize,
) -> Result<Vec<LinkAnchor<T>>, FilterError> {
    observations
        .iter()
        .map(|obs| match obs.link {
            LinkKey::Vehicle(m) => {
                let b = beliefs.get(&m).ok_or(FilterError::MissingNeighborBelief(m))?;
                if b.epoch != epoch && b.epoch + 1 != epoch {
                    return Err(FilterError::InvalidInput(format!(
                        "belief from vehicle {m} is from epoch {}, expected {} or {}",
                        b.epoch,
                        epoch.saturating_sub(1),
                        epoch
                    )));
                }
                // Receiver-side extrapolation of a last-epoch belief by
                // the sender's broadcast velocity.
                let pos = if b.epoch == epoch {
                    b.position
                } else {
                    config.metric.canonical(b.position + b.velocity * config.epoch_period)
                };
                Ok(LinkAnchor::Peer(pos, b.variance.max(T::zero())))
            }
            LinkKey::Satellite(s) => {
                let sat = sats.get(s).ok_or(FilterError::UnknownSatellite(s))?;
                Ok(LinkAnchor::Sat(*sat))
            }
        })
        .collect()
}

/// One likelihood pass. Returns true when every particle underflowed.
fn apply_measurements<T: Real>(
    cloud: &mut ParticleCloud<T>,
    observations: &[LinkObs<T>],
    anchors: &[LinkAnchor<T>],
    config: &FilterConfig<T>,
) -> bool {
    let k = cloud.positions.len();
    let epoch = cloud.epoch;
    let stationary = config.chain.stationary();
    let mut increments = vec![T::zero(); k];
    let mut new_rows: Vec<Vec<[T; 2]>> = Vec::with_capacity(observations.len());

    for (obs, anchor) in observations.iter().zip(anchors.iter()) {
        let model = match anchor {
            LinkAnchor::Peer(_, extra_var) => {
                if *extra_var > T::zero() {
                    config.vehicle_noise.with_extra_variance(*extra_var)
                } else {
                    config.vehicle_noise
                }
            }
            LinkAnchor::Sat(_) => config.sat_noise,
        };
        let los_pdf = model.los.prepared();
        let nlos_pdf = model.nlos.prepared();
        let prior_rows = cloud.tables.get(&obs.link).and_then(|t| {
            (t.last_epoch + 1 == epoch).then_some(&t.rows)
        });
        let mut rows = vec![[T::zero(); 2]; k];
        for i in 0..k {
            let q = match prior_rows {
                Some(rows_prev) => config.chain.predict(rows_prev[i]),
                None => stationary,
            };
            let dist = match anchor {
                LinkAnchor::Peer(p, _) => config.metric.distance(cloud.positions[i], *p),
                LinkAnchor::Sat(s) => ground_range(cloud.positions[i], *s),
            };
            let residual = obs.value - dist;
            let lp_nlos = nlos_pdf.log_pdf(residual);
            let lp_los = los_pdf.log_pdf(residual);
            // Evidence via a max-shift into linear space: one ln instead
            // of two plus a log1p per particle.
            let shift = lp_nlos.max(lp_los);
            if shift.is_finite() {
                let e_nlos = q[NLOS] * (lp_nlos - shift).exp();
                let e_los = q[LOS] * (lp_los - shift).exp();
                let total = e_nlos + e_los;
                if total > T::zero() {
                    rows[i] = [e_nlos / total, e_los / total];
                    increments[i] += shift + total.ln();
                } else {
                    rows[i] = q;
                    increments[i] += T::of(f64::NEG_INFINITY);
                }
            } else {
                rows[i] = q;
                increments[i] += T::of(f64::NEG_INFINITY);
            }
        }
        new_rows.push(rows);
    }

    let mut weights = cloud.log_weights.clone();
    for i in 0..k {
        weights[i] += increments[i];
    }
    let norm = logsumexp(&weights);
    if !norm.is_finite() {
        return true;
    }
    for w in &mut weights {
        *w -= norm;
    }
    cloud.log_weights = weights;
    for (obs, rows) in observations.iter().zip(new_rows.into_iter()) {
        cloud.tables.insert(obs.link, ZTable { last_epoch: epoch, rows });
    }
    false
}

impl<T: Real> ParticleCloud<T> {
    /// Drop flag tables for links not present this epoch; a lapsed link
    /// restarts from the stationary distribution on reappearance.
    fn prune_tables_except(&mut self, live: &[LinkKey]) {
        let epoch = self.epoch;
        self.tables.retain(|key, table| table.last_epoch == epoch || live.contains(key));
    }

    /// Flag posterior rows for one link (diagnostics).
    pub fn link_flag_posterior(&self, link: LinkKey) -> Option<&[[T; 2]]> {
        self.tables.get(&link).map(|t| t.rows.as_slice())
    }

    pub fn tracked_links(&self) -> usize {
        self.tables.len()
    }
}

/// `1 / sum w_i^2` over the normalized weights.
pub fn effective_sample_size<T: Real>(cloud: &ParticleCloud<T>) -> T {
    let sum_sq: T = cloud.log_weights.iter().map(|&lw| (lw * T::of(2.0)).exp()).sum();
    sum_sq.recip()
}

/// Weighted posterior mean and per-axis variance under the configured
/// metric. On the wrapped road the x mean is circular, so a cloud
/// straddling the seam stays put.
pub fn estimate<T: Real>(cloud: &ParticleCloud<T>, config: &FilterConfig<T>) -> Estimate<T> {
    estimate_with(cloud, &config.metric)
}

/// Run the particle filter over a capped toy scenario, treating its
/// fixed anchors as zero-variance neighbor beliefs. Shares the exact
/// epoch semantics of [`grid_oracle_filter`]: the first measurement set
/// applies to the prior, each later epoch is predict-then-update.
pub fn run_toy_filter<T: Real, R: Rng + ?Sized>(
    scenario: &ToyScenario<T>,
    particles: usize,
    ess_threshold: T,
    rng: &mut R,
) -> Result<Vec<Estimate<T>>, FilterError> {
    let config = FilterConfig {
        particles,
        ess_threshold,
        distinct_floor: 10,
        reseed_spread_factor: T::of(2.0),
        reseed_spread_min: T::one(),
        sigma_ins: scenario.sigma_ins,
        epoch_period: scenario.epoch_period,
        vehicle_noise: scenario.noise,
        sat_noise: scenario.noise,
        chain: scenario.chain,
        metric: PlaneMetric::Euclidean,
    };
    let mut cloud = init_filter(0, scenario.prior_mean, scenario.prior_spread, &config, rng)?;
    let mut estimates = Vec::with_capacity(scenario.epochs());
    for t in 0..scenario.epochs() {
        if t > 0 {
            predict(&mut cloud, scenario.ins_readings[t], &config, rng);
        }
        let beliefs: HashMap<usize, NeighborBelief<T>> = scenario
            .anchors
            .iter()
            .enumerate()
            .map(|(a, &p)| {
                (a, NeighborBelief {
                    sender: a,
                    epoch: cloud.epoch,
                    position: p,
                    variance: T::zero(),
                    velocity: Vec2::zero(),
                })
            })
            .collect();
        let obs: Vec<LinkObs<T>> = scenario.measurements[t]
            .iter()
            .enumerate()
            .filter_map(|(a, v)| v.map(|value| LinkObs { link: LinkKey::Vehicle(a), value }))
            .collect();
        update(&mut cloud, &obs, &beliefs, &[], &config, rng)?;
        resample(&mut cloud, &config, rng);
        estimates.push(estimate(&cloud, &config));
    }
    Ok(estimates)
}


/// Resampling decision and bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct ResampleOutcome<T> {
    pub ess_before: T,
    pub resampled: bool,
    /// Distinct particles surviving the draw (when resampled).
    pub distinct: usize,
    pub reseeded: bool,
}

/// Multinomial resampling, guarded by the ESS threshold. Copies particle
/// positions together with their per-link flag rows. If the number of
/// distinct survivors falls below the configured floor, the cloud is
/// reseeded around its own estimate and all flag rows reset.
pub fn resample<T: Real, R: Rng + ?Sized>(
    cloud: &mut ParticleCloud<T>,
    config: &FilterConfig<T>,
    rng: &mut R,
) -> ResampleOutcome<T> {
    let ess = effective_sample_size(cloud);
    if ess >= config.ess_threshold {
        return ResampleOutcome { ess_before: ess, resampled: false, distinct: 0, reseeded: false };
    }
    let k = cloud.positions.len();
    // Cumulative weights for inverse-CDF draws.
    let mut cdf = Vec::with_capacity(k);
    let mut acc = T::zero();
    for &lw in &cloud.log_weights {
        acc += lw.exp();
        cdf.push(acc);
    }
    let total = acc;
    let mut indices = Vec::with_capacity(k);
    for _ in 0..k {
        let u = T::uniform_01(rng) * total;
        let idx = cdf.partition_point(|&c| c < u).min(k - 1);
        indices.push(idx);
    }
    let mut seen = indices.clone();
    seen.sort_unstable();
    seen.dedup();
    let distinct = seen.len();

    cloud.positions = indices.iter().map(|&i| cloud.positions[i]).collect();
    for table in cloud.tables.values_mut() {
        table.rows = indices.iter().map(|&i| table.rows[i]).collect();
    }
    let log_uniform = -T::from_count(k).ln();
    cloud.log_weights.fill(log_uniform);

    let mut reseeded = false;
    if distinct < config.distinct_floor {
        let est = estimate_with(cloud, &config.metric);
        let spread = reseed_spread_from_variance(est.variance, config);
        reseed(cloud, est.position, spread, config, rng);
        reseeded = true;
    }
    ResampleOutcome { ess_before: ess, resampled: true, distinct, reseeded }
}

fn reseed_spread_from_variance<T: Real>(variance: T, config: &FilterConfig<T>) -> T {
    (config.reseed_spread_factor * variance.max(T::zero()).sqrt()).max(config.reseed_spread_min)
}

/// Scatter all particles around `center` and reset every flag row to the
/// stationary distribution.
fn reseed<T: Real, R: Rng + ?Sized>(
    cloud: &mut ParticleCloud<T>,
    center: Vec2<T>,
    spread: T,
    config: &FilterConfig<T>,
    rng: &mut R,
) {
    let k = cloud.positions.len();
    for p in &mut cloud.positions {
        *p = config.metric.canonical(
            center + Vec2::new(spread * T::standard_normal(rng), spread * T::standard_normal(rng)),
        );
    }
    let stationary = config.chain.stationary();
    for table in cloud.tables.values_mut() {
        table.rows.fill(stationary);
    }
    let log_uniform = -T::from_count(k).ln();
    cloud.log_weights.fill(log_uniform);
}

/// Weighted posterior summary under the given metric.
pub fn estimate_with<T: Real>(cloud: &ParticleCloud<T>, metric: &PlaneMetric<T>) -> Estimate<T> {
    let position = match *metric {
        PlaneMetric::Euclidean => {
            let mut acc = Vec2::zero();
            for (p, &lw) in cloud.positions.iter().zip(cloud.log_weights.iter()) {
                acc += *p * lw.exp();
            }
            acc
        }
        PlaneMetric::WrapX { period } => {
            // Circular mean in x, linear mean in y.
            let two_pi = T::of(2.0 * std::f64::consts::PI);
            let mut sin_acc = T::zero();
            let mut cos_acc = T::zero();
            let mut y_acc = T::zero();
            for (p, &lw) in cloud.positions.iter().zip(cloud.log_weights.iter()) {
                let w = lw.exp();
                let angle = p.x / period * two_pi;
                sin_acc += w * angle.sin();
                cos_acc += w * angle.cos();
                y_acc += w * p.y;
            }
            let x = crate::geom::wrap_coord(sin_acc.atan2(cos_acc) / two_pi * period, period);
            Vec2::new(x, y_acc)
        }
        PlaneMetric::WrapBoth { period } => {
            let two_pi = T::of(2.0 * std::f64::consts::PI);
            let mut acc = [T::zero(); 4];
            for (p, &lw) in cloud.positions.iter().zip(cloud.log_weights.iter()) {
                let w = lw.exp();
                let ax = p.x / period * two_pi;
                let ay = p.y / period * two_pi;
                acc[0] += w * ax.sin();
                acc[1] += w * ax.cos();
                acc[2] += w * ay.sin();
                acc[3] += w * ay.cos();
            }
            Vec2::new(
                crate::geom::wrap_coord(acc[0].atan2(acc[1]) / two_pi * period, period),
                crate::geom::wrap_coord(acc[2].atan2(acc[3]) / two_pi * period, period),
            )
        }
    };
    let mut var_acc = T::zero();
    for (p, &lw) in cloud.positions.iter().zip(cloud.log_weights.iter()) {
        let d = metric.displacement(position, *p);
        var_acc += lw.exp() * (d.x * d.x + d.y * d.y);
    }
    Estimate { position, variance: var_acc / T::of(2.0), velocity: cloud.last_ins }
}
