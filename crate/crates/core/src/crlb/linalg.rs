//! Dense symmetric matrix utilities: Schur complements, eigenvalue-based
//! inversion with a singularity floor, and the block-tridiagonal sweeps
//! used by the space-time bounds.

use super::CrlbError;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue floor separating translation null spaces from
/// roundoff.
pub const SINGULARITY_FLOOR: f64 = 1e-8;

/// Largest relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    let mut v = T::zero();
    for &x in m.iter() {
        if x.abs() > v {
            v = x.abs();
        }
    }
    v
}

/// Relative asymmetry `max|M - M^T| / max|M|`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let scale = max_abs(m).max(T::of(1e-300));
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst / scale
}

pub fn check_symmetric<T: Real>(m: &DMatrix<T>, context: &str) -> Result<(), CrlbError> {
    if m.nrows() != m.ncols() {
        return Err(CrlbError::InvalidInput(format!(
            "{context}: matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let a = asymmetry(m);
    if a > T::of(SYMMETRY_TOL) {
        return Err(CrlbError::InvalidInput(format!(
            "{context}: relative asymmetry {} exceeds {SYMMETRY_TOL}",
            a.as_f64()
        )));
    }
    Ok(())
}

/// Eigendecomposition of the symmetrized input.
pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> SymmetricEigen<T, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * T::of(0.5);
    SymmetricEigen::new(sym)
}

/// Outcome of inverting a symmetric PSD information matrix.
#[derive(Debug, Clone)]
pub enum SymInverse<T> {
    Invertible {
        inverse: DMatrix<T>,
        eigenvalues: DVector<T>,
        min_eig: T,
    },
    /// Eigenvalues below the relative floor; the basis spans the null
    /// directions (unobservable motions).
    Singular {
        eigenvalues: DVector<T>,
        null_basis: Vec<DVector<T>>,
        min_eig: T,
    },
}

/// Invert via eigendecomposition, reporting the null basis instead of a
/// number when the smallest eigenvalue falls below the relative floor.
pub fn sym_inverse<T: Real>(m: &DMatrix<T>) -> SymInverse<T> {
    let eig = sym_eigen(m);
    let max_eig = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let floor = T::of(SINGULARITY_FLOOR) * max_eig;
    let min_eig = eig.eigenvalues.iter().fold(T::of(f64::INFINITY), |a, &v| a.min(v));
    if max_eig == T::zero() || min_eig < floor {
        let mut null_basis = Vec::new();
        for (i, &v) in eig.eigenvalues.iter().enumerate() {
            if max_eig == T::zero() || v < floor {
                null_basis.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        return SymInverse::Singular { eigenvalues: eig.eigenvalues, null_basis, min_eig };
    }
    let n = m.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda_inv = eig.eigenvalues[k].recip();
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            let vi = v[i] * lambda_inv;
            for j in 0..n {
                inv[(i, j)] += vi * v[j];
            }
        }
    }
    SymInverse::Invertible { inverse: inv, eigenvalues: eig.eigenvalues, min_eig }
}

/// PSD check at the information-matrix tolerance:
/// `min eigenvalue >= -1e-8 * max |eigenvalue|`.
pub fn is_psd<T: Real>(m: &DMatrix<T>) -> bool {
    let eig = sym_eigen(m);
    let max_eig = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(T::of(f64::INFINITY), |a, &v| a.min(v));
    min_eig >= -T::of(SINGULARITY_FLOOR) * max_eig
}

/// Schur complement of the trailing `trailing`-dimensional block:
/// for `M = [[A, B], [B^T, D]]`, returns `A - B D^{-1} B^T`.
pub fn schur_complement<T: Real>(
    m: &DMatrix<T>,
    trailing: usize,
) -> Result<DMatrix<T>, CrlbError> {
    let n = m.nrows();
    if m.ncols() != n || trailing == 0 || trailing >= n {
        return Err(CrlbError::InvalidInput(format!(
            "schur complement needs a square matrix and 0 < trailing < n, got {}x{} with trailing {trailing}",
            m.nrows(),
            m.ncols()
        )));
    }
    let lead = n - trailing;
    let a = m.view((0, 0), (lead, lead)).into_owned();
    let b = m.view((0, lead), (lead, trailing)).into_owned();
    let d = m.view((lead, lead), (trailing, trailing)).into_owned();

    let svd = d.clone().svd(true, true);
    let s_max = svd.singular_values.iter().fold(T::zero(), |a, &v| a.max(v));
    let s_min = svd.singular_values.iter().fold(T::of(f64::INFINITY), |a, &v| a.min(v));
    if s_min <= T::of(f64::EPSILON) * s_max * T::from_count(trailing) {
        let cond = if s_min > T::zero() { (s_max / s_min).as_f64() } else { f64::INFINITY };
        return Err(CrlbError::SingularBlock { condition: cond });
    }
    let d_inv_bt = svd
        .solve(&b.transpose(), T::of(f64::EPSILON) * s_max)
        .map_err(|e| CrlbError::InvalidInput(format!("SVD solve failed: {e}")))?;
    Ok(&a - &b * d_inv_bt)
}

/// Symmetric block-tridiagonal system with constant off-diagonal
/// coupling `-c I`, as produced by the dead-reckoning chain.
pub struct BlockTridiag<T> {
    /// Diagonal blocks, each `d x d`.
    pub diag: Vec<DMatrix<T>>,
    /// Off-diagonal coupling scalar: block `(t, t+1)` is `-c I`.
    pub coupling: T,
}

impl<T: Real> BlockTridiag<T> {
    pub fn block_dim(&self) -> usize {
        self.diag.first().map_or(0, nalgebra::DMatrix::nrows)
    }

    /// Assemble the full dense matrix (small cases and tests).
    pub fn to_dense(&self) -> DMatrix<T> {
        let d = self.block_dim();
        let t = self.diag.len();
        let mut m = DMatrix::zeros(d * t, d * t);
        for (k, blk) in self.diag.iter().enumerate() {
            m.view_mut((k * d, k * d), (d, d)).copy_from(blk);
        }
        for k in 0..t.saturating_sub(1) {
            for i in 0..d {
                m[(k * d + i, (k + 1) * d + i)] = -self.coupling;
                m[((k + 1) * d + i, k * d + i)] = -self.coupling;
            }
        }
        m
    }

    /// Forward Schur sweep: `S_1 = A_1`, `S_t = A_t - c^2 S_{t-1}^{-1}`.
    /// Returns `None` entries where the running complement is singular.
    fn forward_sweep(&self) -> Vec<Option<DMatrix<T>>> {
        let c2 = self.coupling * self.coupling;
        let mut out: Vec<Option<DMatrix<T>>> = Vec::with_capacity(self.diag.len());
        let mut prev_inv: Option<DMatrix<T>> = None;
        for (t, a) in self.diag.iter().enumerate() {
            let s = match (&prev_inv, t) {
                (_, 0) => a.clone(),
                (Some(pinv), _) => a - pinv * c2,
                (None, _) => {
                    out.push(None);
                    continue;
                }
            };
            match sym_inverse(&s) {
                SymInverse::Invertible { inverse, .. } => {
                    prev_inv = Some(inverse);
                    out.push(Some(s));
                }
                SymInverse::Singular { .. } => {
                    prev_inv = None;
                    out.push(None);
                }
            }
        }
        out
    }

    /// Diagonal blocks of the full inverse, via the forward sweep plus a
    /// backward correction pass. Requires every forward complement to be
    /// invertible; returns `None` otherwise.
    pub fn selected_inverse_diag(&self) -> Option<Vec<DMatrix<T>>> {
        let sweeps = self.forward_sweep();
        let mut s_inv = Vec::with_capacity(sweeps.len());
        for s in sweeps {
            match sym_inverse(&s?) {
                SymInverse::Invertible { inverse, .. } => s_inv.push(inverse),
                SymInverse::Singular { .. } => return None,
            }
        }
        let t = s_inv.len();
        let c2 = self.coupling * self.coupling;
        let mut diag_inv = vec![DMatrix::zeros(0, 0); t];
        diag_inv[t - 1] = s_inv[t - 1].clone();
        for k in (0..t - 1).rev() {
            let w = &s_inv[k] + &s_inv[k] * &diag_inv[k + 1] * &s_inv[k] * c2;
            diag_inv[k] = w;
        }
        Some(diag_inv)
    }
}
