//! Exact discrete Bayes filter on a dense position grid, jointly over
//! all hidden-flag combinations. Brute force and memory hungry: it
//! exists as the ground-truth oracle for the particle filter on capped
//! toy scenarios (one unknown vehicle, a few fixed anchors).

use super::FilterError;
use crate::geom::Vec2;
use crate::noise::{LosMarkov, MixtureNoiseModel, LOS, NLOS};
use crate::scalar::Real;
use rand::Rng;

const MAX_ANCHORS: usize = 5;
const MAX_EPOCHS: usize = 10;
const MAX_CELLS: usize = 400_000;

/// A capped single-vehicle scenario against fixed known anchors.
#[derive(Debug, Clone)]
pub struct ToyScenario<T> {
    pub anchors: Vec<Vec2<T>>,
    /// `measurements[t][a]`: range observed from anchor `a` at epoch `t`.
    pub measurements: Vec<Vec<Option<T>>>,
    /// INS reading covering the step into epoch `t`; index 0 is unused.
    pub ins_readings: Vec<Vec2<T>>,
    pub epoch_period: T,
    pub sigma_ins: T,
    pub noise: MixtureNoiseModel<T>,
    pub chain: LosMarkov<T>,
    pub prior_mean: Vec2<T>,
    pub prior_spread: T,
}

impl<T: Real> ToyScenario<T> {
    pub fn epochs(&self) -> usize {
        self.measurements.len()
    }

    /// Sample a toy realization along a constant-velocity truth track,
    /// with persistent per-anchor flag chains. Returns the scenario and
    /// the true track.
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        anchors: Vec<Vec2<T>>,
        start: Vec2<T>,
        velocity: Vec2<T>,
        epochs: usize,
        epoch_period: T,
        sigma_ins: T,
        noise: MixtureNoiseModel<T>,
        chain: LosMarkov<T>,
        prior_mean: Vec2<T>,
        prior_spread: T,
        rng: &mut R,
    ) -> (Self, Vec<Vec2<T>>) {
        let mut truth = Vec::with_capacity(epochs);
        let mut pos = start;
        let mut flags: Vec<bool> = anchors.iter().map(|_| chain.sample_stationary(rng)).collect();
        let mut measurements = Vec::with_capacity(epochs);
        let mut ins_readings = Vec::with_capacity(epochs);
        for t in 0..epochs {
            if t > 0 {
                pos += velocity * epoch_period;
                for f in &mut flags {
                    *f = chain.step(*f, rng);
                }
            }
            truth.push(pos);
            ins_readings.push(
                velocity
                    + Vec2::new(sigma_ins * T::standard_normal(rng), sigma_ins * T::standard_normal(rng)),
            );
            let row = anchors
                .iter()
                .zip(flags.iter())
                .map(|(a, &z)| Some(a.distance(pos) + noise.sample(z, rng)))
                .collect();
            measurements.push(row);
        }
        (
            Self {
                anchors,
                measurements,
                ins_readings,
                epoch_period,
                sigma_ins,
                noise,
                chain,
                prior_mean,
                prior_spread,
            },
            truth,
        )
    }
}

/// Rectangular evaluation grid.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec<T> {
    pub origin: Vec2<T>,
    pub width: T,
    pub height: T,
    pub pitch: T,
}

impl<T: Real> GridSpec<T> {
    fn nx(&self) -> usize {
        (self.width / self.pitch).as_f64().round() as usize + 1
    }

    fn ny(&self) -> usize {
        (self.height / self.pitch).as_f64().round() as usize + 1
    }

    fn x(&self, ix: usize) -> T {
        self.origin.x + self.pitch * T::from_count(ix)
    }

    fn y(&self, iy: usize) -> T {
        self.origin.y + self.pitch * T::from_count(iy)
    }
}

/// Exact position posterior marginal at one epoch.
#[derive(Debug, Clone)]
pub struct GridPosterior<T> {
    pub epoch: usize,
    pub mean: Vec2<T>,
    /// Fraction of posterior mass within one pitch of the grid border;
    /// large values mean the box was too small.
    pub edge_mass: T,
}

/// Run the exact forward recursion over (cell, flag combination) and
/// return the per-epoch position posterior means.
pub fn grid_oracle_filter<T: Real>(
    scenario: &ToyScenario<T>,
    grid: &GridSpec<T>,
) -> Result<Vec<GridPosterior<T>>, FilterError> {
    let n_anchors = scenario.anchors.len();
    let epochs = scenario.epochs();
    if n_anchors > MAX_ANCHORS {
        return Err(FilterError::GridTooLarge(format!(
            "{n_anchors} anchors exceeds the cap of {MAX_ANCHORS}"
        )));
    }
    if epochs > MAX_EPOCHS {
        return Err(FilterError::GridTooLarge(format!(
            "{epochs} epochs exceeds the cap of {MAX_EPOCHS}"
        )));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let cells = nx * ny;
    if cells > MAX_CELLS {
        return Err(FilterError::GridTooLarge(format!(
            "{cells} cells exceeds the cap of {MAX_CELLS}"
        )));
    }
    let combos = 1usize << n_anchors;
    let stationary = scenario.chain.stationary();

    // state[combo][cell], linear probabilities normalized per epoch.
    let mut state = vec![vec![T::zero(); cells]; combos];

    // Distances from every cell to every anchor, reused per epoch.
    let mut dist = vec![vec![T::zero(); cells]; n_anchors];
    for (a, anchor) in scenario.anchors.iter().enumerate() {
        for iy in 0..ny {
            for ix in 0..nx {
                dist[a][iy * nx + ix] = anchor.distance(Vec2::new(grid.x(ix), grid.y(iy)));
            }
        }
    }

    // Prior at epoch 0.
    let spread2 = scenario.prior_spread * scenario.prior_spread;
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Vec2::new(grid.x(ix), grid.y(iy));
            let d2 = (p - scenario.prior_mean).dot(p - scenario.prior_mean);
            let prior = if spread2.is_zero() {
                // Point prior: all mass on the nearest cell.
                T::zero()
            } else {
                (-d2 / (T::of(2.0) * spread2)).exp()
            };
            let cell = iy * nx + ix;
            for (combo, slab) in state.iter_mut().enumerate() {
                slab[cell] = prior * combo_prior(combo, n_anchors, stationary);
            }
        }
    }
    if spread2.is_zero() {
        let ix = ((scenario.prior_mean.x - grid.origin.x) / grid.pitch).as_f64().round() as usize;
        let iy = ((scenario.prior_mean.y - grid.origin.y) / grid.pitch).as_f64().round() as usize;
        let cell = iy.min(ny - 1) * nx + ix.min(nx - 1);
        for (combo, slab) in state.iter_mut().enumerate() {
            slab[cell] = combo_prior(combo, n_anchors, stationary);
        }
    }

    let mut out = Vec::with_capacity(epochs);
    let mut scratch = vec![T::zero(); cells];
    for t in 0..epochs {
        if t > 0 {
            // Flag transition, one link at a time (tensor product).
            for link in 0..n_anchors {
                flag_transition(&mut state, link, &scenario.chain);
            }
            // Spatial transition: shifted Gaussian, separable in x and y.
            let step = scenario.ins_readings[t] * scenario.epoch_period;
            let sigma = scenario.sigma_ins * scenario.epoch_period;
            for slab in &mut state {
                convolve_axis(slab, &mut scratch, nx, ny, grid.pitch, step.x, sigma, true);
                convolve_axis(slab, &mut scratch, nx, ny, grid.pitch, step.y, sigma, false);
            }
        }
        // Measurement update.
        for (a, theta) in scenario.measurements[t].iter().enumerate() {
            let Some(theta) = *theta else { continue };
            for (combo, slab) in state.iter_mut().enumerate() {
                let z = (combo >> a) & 1 == 1;
                let comp = scenario.noise.component(z).prepared();
                for (cell, p) in slab.iter_mut().enumerate() {
                    if !p.is_zero() {
                        *p *= comp.log_pdf(theta - dist[a][cell]).exp();
                    }
                }
            }
        }
        // Normalize and summarize.
        let total: T = state.iter().map(|slab| slab.iter().copied().sum::<T>()).sum();
        if total.is_zero() || !total.is_finite() {
            return Err(FilterError::InvalidInput(format!(
                "grid posterior vanished at epoch {t}; widen the box or check the noise model"
            )));
        }
        for slab in &mut state {
            for p in slab.iter_mut() {
                *p /= total;
            }
        }
        let mut mean = Vec2::zero();
        let mut edge_mass = T::zero();
        for iy in 0..ny {
            for ix in 0..nx {
                let cell = iy * nx + ix;
                let mass: T = state.iter().map(|slab| slab[cell]).sum();
                mean += Vec2::new(grid.x(ix), grid.y(iy)) * mass;
                if ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny {
                    edge_mass += mass;
                }
            }
        }
        out.push(GridPosterior { epoch: t, mean, edge_mass });
    }
    Ok(out)
}

fn combo_prior<T: Real>(combo: usize, n_anchors: usize, stationary: [T; 2]) -> T {
    let mut p = T::one();
    for a in 0..n_anchors {
        let z = (combo >> a) & 1;
        p *= if z == 1 { stationary[LOS] } else { stationary[NLOS] };
    }
    p
}

/// Mix the two flag states of `link` through the transition matrix.
fn flag_transition<T: Real>(state: &mut [Vec<T>], link: usize, chain: &LosMarkov<T>) {
    let combos = state.len();
    let bit = 1usize << link;
    for combo in 0..combos {
        if combo & bit != 0 {
            continue; // handle each (off, on) pair once
        }
        let on = combo | bit;
        let cells = state[combo].len();
        for cell in 0..cells {
            let p_off = state[combo][cell];
            let p_on = state[on][cell];
            state[combo][cell] =
                p_off * chain.p[NLOS][NLOS] + p_on * chain.p[LOS][NLOS];
            state[on][cell] = p_off * chain.p[NLOS][LOS] + p_on * chain.p[LOS][LOS];
        }
    }
}

/// In-place separable convolution with a shifted Gaussian kernel along
/// one axis. Mass leaving the box is truncated (the posterior is
/// renormalized per epoch).
#[allow(clippy::too_many_arguments)]
fn convolve_axis<T: Real>(
    slab: &mut [T],
    scratch: &mut [T],
    nx: usize,
    ny: usize,
    pitch: T,
    shift: T,
    sigma: T,
    along_x: bool,
) {
    // Kernel over integer cell offsets covering shift +/- 6 sigma.
    let center = (shift / pitch).as_f64();
    let halfwidth = (T::of(6.0) * sigma / pitch).as_f64().ceil() as i64 + 1;
    let lo = (center.floor() as i64) - halfwidth;
    let hi = (center.ceil() as i64) + halfwidth;
    let inv_two_sigma2 = (T::of(2.0) * sigma * sigma).recip();
    let mut kernel = Vec::with_capacity((hi - lo + 1) as usize);
    let mut ksum = T::zero();
    for off in lo..=hi {
        let d = pitch * T::of(off as f64) - shift;
        let w = (-d * d * inv_two_sigma2).exp();
        ksum += w;
        kernel.push(w);
    }
    for w in &mut kernel {
        *w /= ksum;
    }
    scratch.fill(T::zero());
    let (stride, lanes, lane_stride) =
        if along_x { (1usize, ny, nx) } else { (nx, nx, 1usize) };
    let len = if along_x { nx } else { ny };
    for lane in 0..lanes {
        let base = lane * lane_stride;
        for src in 0..len {
            let v = slab[base + src * stride];
            if v.is_zero() {
                continue;
            }
            for (ki, w) in kernel.iter().enumerate() {
                let dst = src as i64 + lo + ki as i64;
                if dst >= 0 && (dst as usize) < len {
                    scratch[base + dst as usize * stride] += v * *w;
                }
            }
        }
    }
    slab.copy_from_slice(scratch);
}
