//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate (noise models, Fisher matrices, the
//! particle filter) is generic over [`Real`], which bundles the nalgebra
//! field traits with the num-traits conversions plus the two hooks the
//! standard traits do not cover: `erfc` and primitive random draws.
//! Concrete work is done in `f64` (see the aliases at the crate root);
//! `f32` is wired up mainly so the kernels stay scalar-type-agnostic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar usable throughout the numeric core.
pub trait Real:
    nalgebra::RealField
    + Copy
    + Default
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum<Self>
{
    /// Lossy conversion from an `f64` literal or intermediate.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Lossy conversion to `f64` (for reporting and CSV output).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }

    /// Complementary error function.
    fn erfc_(self) -> Self;

    /// One standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[0, 1)`.
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    #[inline]
    fn erfc_(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
}

impl Real for f32 {
    #[inline]
    fn erfc_(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
}

/// Scaled complementary error function `erfcx(x) = exp(x^2) erfc(x)`.
///
/// For moderate arguments the direct product is exact enough; past the
/// point where `erfc` underflows we switch to the asymptotic expansion
/// `erfcx(x) ~ 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k`.
pub fn erfcx<T: Real>(x: T) -> T {
    debug_assert!(x >= T::zero(), "erfcx is only needed for x >= 0 here");
    let switch = T::of(9.0);
    if x < switch {
        (x * x).exp() * x.erfc_()
    } else {
        let inv2x2 = (T::of(2.0) * x * x).recip();
        let mut term = T::one();
        let mut sum = T::one();
        let mut k = 1u32;
        loop {
            term *= -T::of(f64::from(2 * k - 1)) * inv2x2;
            let next = sum + term;
            if next == sum || k > 30 {
                break;
            }
            sum = next;
            k += 1;
        }
        sum / (x * T::of(std::f64::consts::PI).sqrt())
    }
}

/// `log(sum_i exp(v_i))` without overflow; `-inf` for an all-`-inf` input.
pub fn logsumexp<T: Real>(values: &[T]) -> T {
    let mut max = T::of(f64::NEG_INFINITY);
    for &v in values {
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Two-element logsumexp, used in the per-link z-sums of the filter.
#[inline]
pub fn logsumexp2<T: Real>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if !hi.is_finite() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
