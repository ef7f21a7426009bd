//! Ranging-noise models: LOS/NLOS component distributions, the two-state
//! mixture, the Markov chain driving the hidden LOS flag, and the scalar
//! noise-information functional used by the bound computations.
//!
//! Conventions: LOS is state 1, NLOS is state 0, everywhere. Probability
//! pairs are indexed `[p_nlos, p_los]`.

use crate::quad::integrate;
use crate::scalar::{erfcx, logsumexp2, Real};
use rand::Rng;
use thiserror::Error;

/// Index of the NLOS state in 2-vectors over the hidden flag.
pub const NLOS: usize = 0;
/// Index of the LOS state.
pub const LOS: usize = 1;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible Markov chain: {0}")]
    InfeasibleMarkov(String),
    #[error("information functional assumption violated: {0}")]
    AssumptionViolated(String),
}

/// A single noise component. `Gaussian` covers both the zero-mean LOS
/// model and the positive-mean NLOS model; `ExGaussian` is a Gaussian
/// convolved with an `Exp(lambda)` delay; `Uniform` is supported for
/// sampling and likelihoods but not for the information functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentDistribution<T> {
    Gaussian { mean: T, sigma: T },
    ExGaussian { mean: T, sigma: T, lambda: T },
    Uniform { lower: T, upper: T },
}

impl<T: Real> ComponentDistribution<T> {
    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        Self::Gaussian { mean: T::of(mean), sigma: T::of(sigma) }
    }

    pub fn ex_gaussian(mean: f64, sigma: f64, lambda: f64) -> Self {
        Self::ExGaussian { mean: T::of(mean), sigma: T::of(sigma), lambda: T::of(lambda) }
    }

    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self::Uniform { lower: T::of(lower), upper: T::of(upper) }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match *self {
            Self::Gaussian { mean, sigma } => {
                if !mean.is_finite() || !(sigma > T::zero()) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "gaussian requires finite mean and sigma > 0, got mean={mean}, sigma={sigma}"
                    )));
                }
            }
            Self::ExGaussian { mean, sigma, lambda } => {
                if !mean.is_finite() || !(sigma > T::zero()) || !(lambda > T::zero()) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "ex-gaussian requires sigma > 0 and lambda > 0, got sigma={sigma}, lambda={lambda}"
                    )));
                }
            }
            Self::Uniform { lower, upper } => {
                if !(upper > lower) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "uniform requires upper > lower, got [{lower}, {upper}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Gaussian { mean, .. } => mean,
            Self::ExGaussian { mean, lambda, .. } => mean + lambda.recip(),
            Self::Uniform { lower, upper } => (lower + upper) / T::of(2.0),
        }
    }

    pub fn variance(&self) -> T {
        match *self {
            Self::Gaussian { sigma, .. } => sigma * sigma,
            Self::ExGaussian { sigma, lambda, .. } => sigma * sigma + (lambda * lambda).recip(),
            Self::Uniform { lower, upper } => {
                let w = upper - lower;
                w * w / T::of(12.0)
            }
        }
    }

    /// Log-density at `x`; `-inf` outside a bounded support.
    pub fn log_pdf(&self, x: T) -> T {
        let half_ln_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        match *self {
            Self::Gaussian { mean, sigma } => {
                let z = (x - mean) / sigma;
                -half_ln_2pi - sigma.ln() - z * z / T::of(2.0)
            }
            Self::ExGaussian { mean, sigma, lambda } => {
                // pdf = (lambda/2) exp(lambda(m - x) + lambda^2 s^2/2) erfc(zc)
                // with zc = (m + lambda s^2 - x) / (sqrt(2) s). For zc >= 0
                // the erfcx form avoids underflow of erfc.
                let zc = (mean + lambda * sigma * sigma - x) / (T::of(std::f64::consts::SQRT_2) * sigma);
                let base = (lambda / T::of(2.0)).ln();
                if zc >= T::zero() {
                    let d = x - mean;
                    base - d * d / (T::of(2.0) * sigma * sigma) + erfcx(zc).ln()
                } else {
                    base + lambda * (mean - x)
                        + lambda * lambda * sigma * sigma / T::of(2.0)
                        + zc.erfc_().ln()
                }
            }
            Self::Uniform { lower, upper } => {
                if x >= lower && x <= upper {
                    -(upper - lower).ln()
                } else {
                    T::of(f64::NEG_INFINITY)
                }
            }
        }
    }

    /// Analytic score `d/dx ln pdf(x)`. `None` for the uniform component,
    /// whose density is not differentiable at the support boundary.
    pub fn score(&self, x: T) -> Option<T> {
        match *self {
            Self::Gaussian { mean, sigma } => Some(-(x - mean) / (sigma * sigma)),
            Self::ExGaussian { mean, sigma, lambda } => {
                let zc = (mean + lambda * sigma * sigma - x) / (T::of(std::f64::consts::SQRT_2) * sigma);
                // d/dx ln pdf = -lambda + sqrt(2/pi)/(sigma * erfcx(zc))
                let ecx = if zc >= T::zero() {
                    erfcx(zc)
                } else {
                    (zc * zc).exp() * zc.erfc_()
                };
                Some(-lambda + T::of((2.0 / std::f64::consts::PI).sqrt()) / (sigma * ecx))
            }
            Self::Uniform { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            Self::Gaussian { mean, sigma } => mean + sigma * T::standard_normal(rng),
            Self::ExGaussian { mean, sigma, lambda } => {
                let g = mean + sigma * T::standard_normal(rng);
                let u = T::uniform_01(rng);
                g - (T::one() - u).ln() / lambda
            }
            Self::Uniform { lower, upper } => lower + (upper - lower) * T::uniform_01(rng),
        }
    }

    /// Interval outside which the density is below ~1e-30.
    fn bulk_support(&self) -> (T, T) {
        match *self {
            Self::Gaussian { mean, sigma } => (mean - T::of(13.0) * sigma, mean + T::of(13.0) * sigma),
            Self::ExGaussian { mean, sigma, lambda } => {
                let tail = T::of(30.0 * std::f64::consts::LN_10) / lambda;
                (mean - T::of(13.0) * sigma, mean + T::of(13.0) * sigma + tail)
            }
            Self::Uniform { lower, upper } => (lower, upper),
        }
    }

    /// Whether the density is differentiable with vanishing boundary
    /// values, the hypothesis behind the information functional.
    fn information_compatible(&self) -> bool {
        !matches!(self, Self::Uniform { .. })
    }

    /// Precompute the constants of the log-density for hot loops.
    pub fn prepared(&self) -> PreparedComponent<T> {
        let half_ln_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        match *self {
            Self::Gaussian { mean, sigma } => PreparedComponent::Gaussian {
                mean,
                log_norm: -half_ln_2pi - sigma.ln(),
                inv_two_var: (T::of(2.0) * sigma * sigma).recip(),
            },
            Self::ExGaussian { mean, sigma, lambda } => PreparedComponent::ExGaussian {
                mean,
                lambda,
                base: (lambda / T::of(2.0)).ln(),
                inv_sqrt2_sigma: (T::of(std::f64::consts::SQRT_2) * sigma).recip(),
                inv_two_var: (T::of(2.0) * sigma * sigma).recip(),
                shift: mean + lambda * sigma * sigma,
                half_l2s2: lambda * lambda * sigma * sigma / T::of(2.0),
            },
            Self::Uniform { lower, upper } => PreparedComponent::Uniform {
                lower,
                upper,
                log_density: -(upper - lower).ln(),
            },
        }
    }

    /// The same component with `extra_var` added to its Gaussian part;
    /// used when a neighbor reports position variance. Uniform components
    /// have no Gaussian part and are returned unchanged.
    pub fn with_extra_variance(&self, extra_var: T) -> Self {
        match *self {
            Self::Gaussian { mean, sigma } => Self::Gaussian {
                mean,
                sigma: (sigma * sigma + extra_var).sqrt(),
            },
            Self::ExGaussian { mean, sigma, lambda } => Self::ExGaussian {
                mean,
                sigma: (sigma * sigma + extra_var).sqrt(),
                lambda,
            },
            Self::Uniform { .. } => *self,
        }
    }
}

/// Log-density evaluator with hoisted constants, for per-particle loops.
#[derive(Debug, Clone, Copy)]
pub enum PreparedComponent<T> {
    Gaussian {
        mean: T,
        log_norm: T,
        inv_two_var: T,
    },
    ExGaussian {
        mean: T,
        lambda: T,
        base: T,
        inv_sqrt2_sigma: T,
        inv_two_var: T,
        shift: T,
        half_l2s2: T,
    },
    Uniform {
        lower: T,
        upper: T,
        log_density: T,
    },
}

impl<T: Real> PreparedComponent<T> {
    #[inline]
    pub fn log_pdf(&self, x: T) -> T {
        match *self {
            Self::Gaussian { mean, log_norm, inv_two_var } => {
                let d = x - mean;
                log_norm - d * d * inv_two_var
            }
            Self::ExGaussian { mean, lambda, base, inv_sqrt2_sigma, inv_two_var, shift, half_l2s2 } => {
                let zc = (shift - x) * inv_sqrt2_sigma;
                if zc >= T::zero() {
                    let d = x - mean;
                    base - d * d * inv_two_var + erfcx(zc).ln()
                } else {
                    base + lambda * (mean - x) + half_l2s2 + zc.erfc_().ln()
                }
            }
            Self::Uniform { lower, upper, log_density } => {
                if x >= lower && x <= upper {
                    log_density
                } else {
                    T::of(f64::NEG_INFINITY)
                }
            }
        }
    }
}

/// LOS/NLOS mixture: noise is drawn from `los` with probability `alpha`,
/// from `nlos` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureNoiseModel<T> {
    pub alpha: T,
    pub los: ComponentDistribution<T>,
    pub nlos: ComponentDistribution<T>,
}

impl<T: Real> MixtureNoiseModel<T> {
    pub fn new(
        alpha: T,
        los: ComponentDistribution<T>,
        nlos: ComponentDistribution<T>,
    ) -> Result<Self, NoiseError> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(NoiseError::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        los.validate()?;
        nlos.validate()?;
        Ok(Self { alpha, los, nlos })
    }

    pub fn component(&self, los_flag: bool) -> &ComponentDistribution<T> {
        if los_flag {
            &self.los
        } else {
            &self.nlos
        }
    }

    /// Log-density of the noise value `n`: the indicated component when
    /// the hidden flag is known, the alpha-mixture otherwise.
    pub fn log_pdf(&self, n: T, z: Option<bool>) -> T {
        match z {
            Some(flag) => self.component(flag).log_pdf(n),
            None => {
                if self.alpha == T::one() {
                    self.los.log_pdf(n)
                } else if self.alpha == T::zero() {
                    self.nlos.log_pdf(n)
                } else {
                    let a = self.alpha.ln() + self.los.log_pdf(n);
                    let b = (T::one() - self.alpha).ln() + self.nlos.log_pdf(n);
                    logsumexp2(a, b)
                }
            }
        }
    }

    /// Draw one noise value from the component selected by `z`.
    pub fn sample<R: Rng + ?Sized>(&self, z: bool, rng: &mut R) -> T {
        self.component(z).sample(rng)
    }

    /// Draw the hidden flag from the marginal and then the noise.
    pub fn sample_marginal<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, T) {
        let z = T::uniform_01(rng) < self.alpha;
        (z, self.sample(z, rng))
    }

    /// Integration window covering all but ~1e-30 of the mixture mass.
    pub fn bulk_support(&self) -> (T, T) {
        let (l1, u1) = self.los.bulk_support();
        let (l2, u2) = self.nlos.bulk_support();
        if self.alpha == T::one() {
            (l1, u1)
        } else if self.alpha == T::zero() {
            (l2, u2)
        } else {
            (l1.min(l2), u1.max(u2))
        }
    }

    /// The same mixture with `extra_var` folded into both components.
    pub fn with_extra_variance(&self, extra_var: T) -> Self {
        Self {
            alpha: self.alpha,
            los: self.los.with_extra_variance(extra_var),
            nlos: self.nlos.with_extra_variance(extra_var),
        }
    }
}

/// Relative tolerance for the information quadrature.
const G_REL_TOL: f64 = 1e-8;

/// Scalar noise information: the expected squared score of the mixture
/// density. For a pure Gaussian this is `1/sigma^2`.
///
/// Rejects mixtures containing a uniform component with nonzero weight:
/// its density does not vanish at the support boundary, so the defining
/// integration-by-parts step fails.
pub fn compute_g<T: Real>(model: &MixtureNoiseModel<T>) -> Result<T, NoiseError> {
    let los_active = model.alpha > T::zero();
    let nlos_active = model.alpha < T::one();
    if los_active && !model.los.information_compatible() {
        return Err(NoiseError::AssumptionViolated(
            "LOS component density does not vanish at its support boundary".into(),
        ));
    }
    if nlos_active && !model.nlos.information_compatible() {
        return Err(NoiseError::AssumptionViolated(
            "NLOS component density does not vanish at its support boundary".into(),
        ));
    }

    // Integrand p(n) * (E[component score | n])^2, assembled in log
    // domain so deep-tail evaluations underflow to zero instead of 0/0.
    let integrand = move |n: T| -> T {
        let (log_a, log_b) = match (los_active, nlos_active) {
            (true, true) => (
                model.alpha.ln() + model.los.log_pdf(n),
                (T::one() - model.alpha).ln() + model.nlos.log_pdf(n),
            ),
            (true, false) => (model.los.log_pdf(n), T::of(f64::NEG_INFINITY)),
            (false, true) => (T::of(f64::NEG_INFINITY), model.nlos.log_pdf(n)),
            (false, false) => unreachable!("alpha in [0,1]"),
        };
        let log_mix = logsumexp2(log_a, log_b);
        if !log_mix.is_finite() {
            return T::zero();
        }
        let w_los = (log_a - log_mix).exp();
        let w_nlos = (log_b - log_mix).exp();
        let mut s = T::zero();
        if w_los > T::zero() {
            s += w_los * model.los.score(n).expect("checked compatible");
        }
        if w_nlos > T::zero() {
            s += w_nlos * model.nlos.score(n).expect("checked compatible");
        }
        log_mix.exp() * s * s
    };

    // Integrate over the bulk support, then widen until the tails stop
    // contributing at the quadrature tolerance.
    let (mut lo, mut hi) = model.bulk_support();
    let mut value = integrate(&integrand, lo, hi, T::of(G_REL_TOL));
    for _ in 0..8 {
        let width = hi - lo;
        let new_lo = lo - width / T::of(2.0);
        let new_hi = hi + width / T::of(2.0);
        let tails = integrate(&integrand, new_lo, lo, T::of(G_REL_TOL))
            + integrate(&integrand, hi, new_hi, T::of(G_REL_TOL));
        lo = new_lo;
        hi = new_hi;
        let widened = value + tails;
        if tails.abs() <= T::of(G_REL_TOL) * widened.abs() {
            return Ok(widened);
        }
        value = widened;
    }
    Ok(value)
}

/// Finite-difference sensitivity of `g` to the LOS fraction, evaluated
/// at `alpha` on the given component pair. Central differences inside
/// the unit interval, one-sided at the boundaries.
pub fn g_sensitivity<T: Real>(
    model: &MixtureNoiseModel<T>,
    alpha: T,
    delta: T,
) -> Result<T, NoiseError> {
    if !(alpha >= T::zero() && alpha <= T::one()) || !(delta > T::zero()) {
        return Err(NoiseError::InvalidParameter(format!(
            "need alpha in [0,1] and delta > 0, got alpha={alpha}, delta={delta}"
        )));
    }
    let at = |a: T| -> Result<T, NoiseError> {
        compute_g(&MixtureNoiseModel { alpha: a, los: model.los, nlos: model.nlos })
    };
    let hi_ok = alpha + delta <= T::one();
    let lo_ok = alpha - delta >= T::zero();
    match (lo_ok, hi_ok) {
        (true, true) => Ok((at(alpha + delta)? - at(alpha - delta)?) / (T::of(2.0) * delta)),
        (false, true) => Ok((at(alpha + delta)? - at(alpha)?) / delta),
        (true, false) => Ok((at(alpha)? - at(alpha - delta)?) / delta),
        (false, false) => Err(NoiseError::InvalidParameter(
            "delta spans the whole unit interval".into(),
        )),
    }
}

/// Two-state Markov chain over the hidden LOS flag with stationary
/// distribution `(1 - alpha, alpha)` over `(NLOS, LOS)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosMarkov<T> {
    /// Row-stochastic transition matrix, `p[from][to]`, states `[NLOS, LOS]`.
    pub p: [[T; 2]; 2],
    /// Stationary LOS probability.
    pub alpha: T,
}

impl<T: Real> LosMarkov<T> {
    /// Build the chain from the stationary LOS fraction and the LOS
    /// self-transition probability; the NLOS row follows from
    /// stationarity: `alpha (1 - p_stay_los) = (1 - alpha) p(N->L)`.
    pub fn new(alpha: T, p_stay_los: T) -> Result<Self, NoiseError> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(NoiseError::InfeasibleMarkov(format!(
                "alpha must lie strictly inside (0, 1), got {alpha}"
            )));
        }
        if !(p_stay_los >= T::zero() && p_stay_los <= T::one()) {
            return Err(NoiseError::InfeasibleMarkov(format!(
                "p_stay_los must lie in [0, 1], got {p_stay_los}"
            )));
        }
        let p_nl = alpha * (T::one() - p_stay_los) / (T::one() - alpha);
        if p_nl > T::one() {
            return Err(NoiseError::InfeasibleMarkov(format!(
                "implied p(NLOS->LOS) = {p_nl} exceeds 1 for alpha={alpha}, p_stay_los={p_stay_los}"
            )));
        }
        Ok(Self {
            p: [[T::one() - p_nl, p_nl], [T::one() - p_stay_los, p_stay_los]],
            alpha,
        })
    }

    /// Memoryless chain: each step is an independent Bernoulli(alpha).
    pub fn iid(alpha: T) -> Result<Self, NoiseError> {
        Self::new(alpha, alpha)
    }

    /// Degenerate chain pinned to one state, for the boundary fractions
    /// `alpha = 1` (always LOS) and `alpha = 0` (always NLOS).
    pub fn degenerate(los_always: bool) -> Self {
        if los_always {
            Self { p: [[T::zero(), T::one()], [T::zero(), T::one()]], alpha: T::one() }
        } else {
            Self { p: [[T::one(), T::zero()], [T::one(), T::zero()]], alpha: T::zero() }
        }
    }

    /// Stationary distribution `[p_nlos, p_los]`.
    pub fn stationary(&self) -> [T; 2] {
        [T::one() - self.alpha, self.alpha]
    }

    /// Residual of the stationarity equation; ~1e-16 by construction.
    pub fn stationarity_residual(&self) -> T {
        let pi = self.stationary();
        let next0 = pi[0] * self.p[0][0] + pi[1] * self.p[1][0];
        let next1 = pi[0] * self.p[0][1] + pi[1] * self.p[1][1];
        (next0 - pi[0]).abs().max((next1 - pi[1]).abs())
    }

    /// One transition from `from` (true = LOS).
    pub fn step<R: Rng + ?Sized>(&self, from: bool, rng: &mut R) -> bool {
        let row = self.p[usize::from(from)];
        T::uniform_01(rng) < row[LOS]
    }

    /// Draw the initial state from the stationary distribution.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        T::uniform_01(rng) < self.alpha
    }

    /// Predictive distribution `[p_nlos, p_los]` one step after `prior`.
    pub fn predict(&self, prior: [T; 2]) -> [T; 2] {
        [
            prior[NLOS] * self.p[NLOS][NLOS] + prior[LOS] * self.p[LOS][NLOS],
            prior[NLOS] * self.p[NLOS][LOS] + prior[LOS] * self.p[LOS][LOS],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn n01() -> ComponentDistribution<f64> {
        ComponentDistribution::gaussian(0.0, 1.0)
    }

    #[test]
    fn standard_normal_log_pdf_at_zero() {
        let lp = n01().log_pdf(0.0);
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_mixture_equals_single_component() {
        let m = MixtureNoiseModel::new(0.5, n01(), n01()).unwrap();
        for &x in &[-3.0, -0.5, 0.0, 1.7, 9.0] {
            assert!((m.log_pdf(x, None) - n01().log_pdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn ex_gaussian_pdf_matches_numeric_convolution() {
        // Oracle: integrate N(x - s; 0, 1) * lambda exp(-lambda s) over s.
        let lambda = 0.5_f64;
        let comp = ComponentDistribution::ex_gaussian(0.0, 1.0, lambda);
        for &x in &[-2.0, 0.0, 2.0, 5.0, 20.0] {
            let f = |s: f64| {
                let g = (-0.5 * (x - s) * (x - s)).exp() / (2.0 * std::f64::consts::PI).sqrt();
                g * lambda * (-lambda * s).exp()
            };
            let upper = 40.0 / lambda + x.abs() + 20.0;
            let oracle = quad::integrate(&f, 0.0, upper, 1e-11);
            let got = comp.log_pdf(x).exp();
            assert!(
                (got - oracle).abs() < 1e-9 * oracle.max(1e-12),
                "x={x}: got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn ex_gaussian_score_matches_finite_difference() {
        let comp: ComponentDistribution<f64> = ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25);
        for &x in &[-5.0_f64, 0.0, 4.0, 30.0, 200.0] {
            let h = 1e-5 * (1.0 + x.abs());
            let fd = (comp.log_pdf(x + h) - comp.log_pdf(x - h)) / (2.0 * h);
            let s = comp.score(x).unwrap();
            assert!((s - fd).abs() < 1e-5 * (1.0 + s.abs()), "x={x}: {s} vs {fd}");
        }
    }

    #[test]
    fn component_samples_match_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let comp: ComponentDistribution<f64> = ComponentDistribution::ex_gaussian(0.0, 1.0, 0.5);
        let mean_est: f64 = (0..n).map(|_| comp.sample(&mut rng)).sum::<f64>() / n as f64;
        // Analytic mean of the ex-gaussian: gaussian mean + 1/lambda.
        let want = comp.mean();
        let tol = 3.0 * comp.variance().sqrt() / (n as f64).sqrt();
        assert!((mean_est - want).abs() < tol, "{mean_est} vs {want}");

        let uni: ComponentDistribution<f64> = ComponentDistribution::uniform(0.0, 10.0);
        assert!((0..10_000).map(|_| uni.sample(&mut rng)).all(|v| (0.0..=10.0).contains(&v)));
    }

    #[test]
    fn mixture_normalizes_by_quadrature() {
        let models = [
            MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::gaussian(5.0, 5.0)).unwrap(),
            MixtureNoiseModel::new(0.7, n01(), ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25))
                .unwrap(),
            MixtureNoiseModel::new(0.3, n01(), ComponentDistribution::uniform(0.0, 10.0)).unwrap(),
        ];
        for m in &models {
            let (lo, hi) = m.bulk_support();
            let mass = quad::integrate(&|x| m.log_pdf(x, None).exp(), lo, hi, 1e-10);
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        }
    }

    #[test]
    fn score_has_zero_mean_by_quadrature() {
        let models = [
            MixtureNoiseModel::new(1.0, n01(), n01()).unwrap(),
            MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::gaussian(5.0, 5.0)).unwrap(),
            MixtureNoiseModel::new(0.6, n01(), ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25))
                .unwrap(),
        ];
        for m in &models {
            let (lo, hi) = m.bulk_support();
            let f = |x: f64| {
                let p_l = m.alpha.ln() + m.los.log_pdf(x);
                let p_n = (1.0 - m.alpha).ln() + m.nlos.log_pdf(x);
                let log_mix = logsumexp2(p_l, p_n);
                if !log_mix.is_finite() {
                    return 0.0;
                }
                let s = (p_l - log_mix).exp() * m.los.score(x).unwrap()
                    + (p_n - log_mix).exp() * m.nlos.score(x).unwrap();
                log_mix.exp() * s
            };
            let mean_score = quad::integrate(&f, lo, hi, 1e-10);
            assert!(mean_score.abs() < 1e-6, "score mean {mean_score}");
        }
    }

    #[test]
    fn g_of_gaussian_is_inverse_variance() {
        for &sigma in &[0.1_f64, 1.0, 10.0] {
            let m = MixtureNoiseModel::new(
                1.0,
                ComponentDistribution::gaussian(0.0, sigma),
                ComponentDistribution::gaussian(5.0, 5.0),
            )
            .unwrap();
            let g = compute_g(&m).unwrap();
            let want = 1.0 / (sigma * sigma);
            assert!((g - want).abs() < 1e-6 * want, "sigma={sigma}: {g} vs {want}");
        }
    }

    #[test]
    fn g_rejects_uniform_component() {
        let m = MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::uniform(0.0, 10.0))
            .unwrap();
        assert!(matches!(compute_g(&m), Err(NoiseError::AssumptionViolated(_))));
        // With zero NLOS weight the uniform component is inert.
        let m1 = MixtureNoiseModel::new(1.0, n01(), ComponentDistribution::uniform(0.0, 10.0))
            .unwrap();
        assert!((compute_g(&m1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn g_matches_monte_carlo_score_variance() {
        // Cross-check quadrature against a direct Monte-Carlo estimate of
        // E[score^2] under the mixture, for each component family.
        let cases = [
            MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::gaussian(5.0, 5.0)).unwrap(),
            MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25))
                .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let samples = 2_000_000usize;
        for m in &cases {
            let g = compute_g(m).unwrap();
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..samples {
                let (_, n) = m.sample_marginal(&mut rng);
                let p_l = m.alpha.ln() + m.los.log_pdf(n);
                let p_n = (1.0 - m.alpha).ln() + m.nlos.log_pdf(n);
                let log_mix = logsumexp2(p_l, p_n);
                let s = (p_l - log_mix).exp() * m.los.score(n).unwrap()
                    + (p_n - log_mix).exp() * m.nlos.score(n).unwrap();
                sum += s * s;
                sum_sq += s * s * s * s;
            }
            let mc = sum / samples as f64;
            let var = (sum_sq / samples as f64 - mc * mc).max(0.0);
            let se = (var / samples as f64).sqrt();
            assert!((g - mc).abs() < 3.0 * se, "g={g}, mc={mc}, se={se}");
        }
    }

    #[test]
    fn g_sensitivity_zero_for_identical_components() {
        let m = MixtureNoiseModel::new(0.5, n01(), n01()).unwrap();
        let d = g_sensitivity(&m, 0.5, 1e-3).unwrap();
        assert!(d.abs() < 1e-6, "{d}");
    }

    #[test]
    fn g_sensitivity_positive_across_alpha_grid() {
        let m = MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25))
            .unwrap();
        let mut alpha = 0.05;
        while alpha <= 0.951 {
            let d = g_sensitivity(&m, alpha, 1e-3).unwrap();
            assert!(d > 0.0, "g'({alpha}) = {d}");
            alpha += 0.15;
        }
    }

    #[test]
    fn g_sensitivity_integrates_to_g_span() {
        // Fundamental-theorem check: trapezoid of g'(alpha) over [0, 1]
        // recovers g(1) - g(0) within 1%.
        let m = MixtureNoiseModel::new(0.5, n01(), ComponentDistribution::gaussian(5.0, 5.0))
            .unwrap();
        let at = |a: f64| {
            compute_g(&MixtureNoiseModel { alpha: a, los: m.los, nlos: m.nlos }).unwrap()
        };
        // g'(alpha) steepens towards both ends, so the grid must be fine.
        let n = 400;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let a = i as f64 * h;
            let d = g_sensitivity(&m, a, 1e-4).unwrap();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * d * h;
        }
        let span = at(1.0) - at(0.0);
        assert!((acc - span).abs() < 0.01 * span.abs(), "{acc} vs {span}");
    }

    #[test]
    fn inverse_g_tracks_sigma_over_alpha_at_high_alpha() {
        // On the reference mixtures (a well-separated positive-mean
        // Gaussian and the ex-gaussian with matched mean and variance),
        // 1/g stays within 5% above sigma_los^2 / alpha for alpha >= 0.8.
        let pmg: ComponentDistribution<f64> = ComponentDistribution::gaussian(10.0, 3.0);
        let exg: ComponentDistribution<f64> =
            ComponentDistribution::ex_gaussian(8.0, 5.0_f64.sqrt(), 0.5);
        assert!((exg.mean() - pmg.mean()).abs() < 1e-12);
        assert!((exg.variance() - pmg.variance()).abs() < 1e-12);
        for nlos in [pmg, exg] {
            for &alpha in &[0.8, 0.85, 0.9, 0.95, 1.0] {
                let m = MixtureNoiseModel::new(alpha, n01(), nlos).unwrap();
                let g = compute_g(&m).unwrap();
                let bound = (1.0 / alpha) * 1.05;
                assert!(1.0 / g <= bound, "alpha={alpha}: 1/g = {} > {bound}", 1.0 / g);
            }
        }
    }

    #[test]
    fn markov_construction() {
        let m: LosMarkov<f64> = LosMarkov::new(0.5, 0.5).unwrap();
        assert_eq!(m.p, [[0.5, 0.5], [0.5, 0.5]]);

        let m: LosMarkov<f64> = LosMarkov::new(0.5, 0.9).unwrap();
        for (row, want) in m.p.iter().zip([[0.9_f64, 0.1], [0.1, 0.9]]) {
            for (got, w) in row.iter().zip(want) {
                assert!((got - w).abs() < 1e-12);
            }
        }

        let m: LosMarkov<f64> = LosMarkov::new(0.8, 0.9).unwrap();
        assert!((m.p[NLOS][LOS] - 0.4).abs() < 1e-12);
        assert!(m.stationarity_residual() < 1e-12);

        assert!(LosMarkov::<f64>::new(0.9, 0.0).is_err());
        assert!(LosMarkov::<f64>::new(1.0, 0.5).is_err());
    }

    #[test]
    fn markov_empirics_match_configuration() {
        let chain: LosMarkov<f64> = LosMarkov::new(0.5, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut z = chain.sample_stationary(&mut rng);
        let steps = 200_000;
        let mut los_count = 0usize;
        let mut trans = [[0usize; 2]; 2];
        for _ in 0..steps {
            let next = chain.step(z, &mut rng);
            trans[usize::from(z)][usize::from(next)] += 1;
            z = next;
            los_count += usize::from(z);
        }
        let frac_los = los_count as f64 / steps as f64;
        assert!((frac_los - 0.5).abs() < 0.01, "stationary fraction {frac_los}");
        for from in 0..2 {
            let row_total = (trans[from][0] + trans[from][1]) as f64;
            for to in 0..2 {
                let emp = trans[from][to] as f64 / row_total;
                assert!(
                    (emp - chain.p[from][to]).abs() < 0.01,
                    "transition {from}->{to}: {emp} vs {}",
                    chain.p[from][to]
                );
            }
        }
    }

    #[test]
    fn prepared_matches_direct_log_pdf() {
        let comps: Vec<ComponentDistribution<f64>> = vec![
            ComponentDistribution::gaussian(1.5, 2.0),
            ComponentDistribution::ex_gaussian(1.0, 3.0, 0.25),
            ComponentDistribution::uniform(0.0, 10.0),
        ];
        for c in &comps {
            let p = c.prepared();
            for &x in &[-20.0, -1.0, 0.0, 3.3, 10.0, 50.0, 400.0] {
                let a = c.log_pdf(x);
                let b = p.log_pdf(x);
                if a.is_finite() {
                    assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{c:?} at {x}: {a} vs {b}");
                } else {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn generic_g_works_in_f32() {
        let m: MixtureNoiseModel<f32> = MixtureNoiseModel::new(
            1.0,
            ComponentDistribution::gaussian(0.0, 2.0),
            ComponentDistribution::gaussian(5.0, 5.0),
        )
        .unwrap();
        let g = compute_g(&m).unwrap();
        assert!((g - 0.25).abs() < 1e-3);
    }
}

