//! Space-time Fisher information for mobile agents with dead-reckoning:
//! `F = g F_G + (1/sigma^2) F_INS`, where `F_G` is block diagonal over
//! epochs and `F_INS` is the per-agent, per-axis second-difference chain
//! coupling adjacent epochs.
//!
//! The displacement-measurement likelihood gives chain diagonal entries
//! of `1/sigma^2` at the first and last epoch and `2/sigma^2` inside
//! (exact differentiation; the interior value matches the usual uniform
//! statement, the boundary values are the exact ones).

use super::linalg::BlockTridiag;
use super::{crlb_trace, fisher_heterogeneous, CrlbError, CrlbOutcome, FisherMatrix, SatLink, StaticNetwork};
use crate::scalar::Real;
use nalgebra::DMatrix;

/// Measurement geometry of one epoch: the inter-vehicle network plus the
/// satellite links visible at that epoch.
#[derive(Debug, Clone)]
pub struct EpochGeometry<T> {
    pub net: StaticNetwork<T>,
    pub sat_links: Vec<SatLink<T>>,
}

impl<T: Real> EpochGeometry<T> {
    /// Per-epoch measurement information block `g_veh F_veh + g_sat F_sat`.
    fn measurement_block(&self, g_veh: T, g_sat: T) -> Result<DMatrix<T>, CrlbError> {
        Ok(fisher_heterogeneous(&self.net, &self.sat_links, g_veh, g_sat)?.matrix)
    }
}

fn check_epochs<T: Real>(epochs: &[EpochGeometry<T>]) -> Result<usize, CrlbError> {
    let Some(first) = epochs.first() else {
        return Err(CrlbError::InvalidInput("need at least one epoch".into()));
    };
    let n = first.net.n_agents();
    if epochs.iter().any(|e| e.net.n_agents() != n) {
        return Err(CrlbError::InvalidInput(
            "all epochs must cover the same agent set".into(),
        ));
    }
    Ok(n)
}

/// Per-epoch measurement blocks, g-scaled.
fn measurement_blocks<T: Real>(
    epochs: &[EpochGeometry<T>],
    g_veh: T,
    g_sat: T,
) -> Result<Vec<DMatrix<T>>, CrlbError> {
    epochs.iter().map(|e| e.measurement_block(g_veh, g_sat)).collect()
}

/// Space-time Fisher matrix over all `T` epochs (`2NT` parameters,
/// epoch-major ordering). `sigma_step` is the standard deviation of the
/// per-epoch displacement measurement (velocity sigma times the epoch
/// period); with a single epoch there are no displacement terms.
pub fn fisher_mobile<T: Real>(
    epochs: &[EpochGeometry<T>],
    g_veh: T,
    g_sat: T,
    sigma_step: T,
) -> Result<FisherMatrix<T>, CrlbError> {
    let n = check_epochs(epochs)?;
    if !(sigma_step > T::zero()) {
        return Err(CrlbError::InvalidInput("sigma_step must be positive".into()));
    }
    let t = epochs.len();
    let blocks = measurement_blocks(epochs, g_veh, g_sat)?;
    let sys = assemble_tridiag(blocks, n, t, sigma_step);
    Ok(FisherMatrix { matrix: sys.to_dense(), n_agents: n, epochs: t })
}

/// The full-horizon system as a block tridiagonal structure.
fn assemble_tridiag<T: Real>(
    mut blocks: Vec<DMatrix<T>>,
    n: usize,
    t: usize,
    sigma_step: T,
) -> BlockTridiag<T> {
    let inv_var = (sigma_step * sigma_step).recip();
    for (idx, block) in blocks.iter_mut().enumerate() {
        // One displacement term links each interior epoch to both sides.
        let chain_count = if t == 1 {
            T::zero()
        } else if idx == 0 || idx + 1 == t {
            T::one()
        } else {
            T::of(2.0)
        };
        for i in 0..2 * n {
            block[(i, i)] += chain_count * inv_var;
        }
    }
    BlockTridiag { diag: blocks, coupling: if t == 1 { T::zero() } else { inv_var } }
}

/// Causal bound at epoch `t` (1-based): the trace of the inverse of the
/// Fisher matrix over epochs `1..=t`, restricted to the epoch-`t` block.
///
/// Definitionally this is the trailing `2N x 2N` block of the inverse of
/// the `2Nt`-dimensional causal Fisher matrix; it is computed by the
/// forward block-elimination sweep, which produces the identical value
/// without assembling the full matrix (verified against the dense path
/// in the tests).
pub fn causal_crlb<T: Real>(
    epochs: &[EpochGeometry<T>],
    g_veh: T,
    g_sat: T,
    sigma_step: T,
    t: usize,
) -> Result<CrlbOutcome<T>, CrlbError> {
    let available = epochs.len();
    if t == 0 || t > available {
        return Err(CrlbError::InvalidInput(format!(
            "causal epoch {t} out of range 1..={available}"
        )));
    }
    let mut sweep = causal_crlb_sweep(&epochs[..t], g_veh, g_sat, sigma_step)?;
    Ok(sweep.pop().expect("nonempty sweep"))
}

/// Causal bounds for every epoch `1..=T` in a single forward sweep.
pub fn causal_crlb_sweep<T: Real>(
    epochs: &[EpochGeometry<T>],
    g_veh: T,
    g_sat: T,
    sigma_step: T,
) -> Result<Vec<CrlbOutcome<T>>, CrlbError> {
    let n = check_epochs(epochs)?;
    if !(sigma_step > T::zero()) {
        return Err(CrlbError::InvalidInput("sigma_step must be positive".into()));
    }
    let inv_var = (sigma_step * sigma_step).recip();
    let blocks = measurement_blocks(epochs, g_veh, g_sat)?;
    let mut out = Vec::with_capacity(blocks.len());
    // Running trailing Schur complement of the growing causal system.
    let mut running: Option<DMatrix<T>> = None;
    for block in blocks {
        let sigma_block = match running.take() {
            None => block,
            Some(prev) => {
                // The new displacement measurement adds inv_var to the
                // previous epoch's diagonal and couples it to the new one.
                // prev is PSD and inv_var > 0, so the shifted block is
                // positive definite.
                let mut prev_aug = prev;
                for i in 0..2 * n {
                    prev_aug[(i, i)] += inv_var;
                }
                let inverse = nalgebra::Cholesky::new(prev_aug)
                    .ok_or_else(|| {
                        CrlbError::NonFinite("causal chain lost positive definiteness".into())
                    })?
                    .inverse();
                let mut s = block;
                for i in 0..2 * n {
                    s[(i, i)] += inv_var;
                }
                s - inverse * (inv_var * inv_var)
            }
        };
        let outcome = crlb_trace(&FisherMatrix {
            matrix: sigma_block.clone(),
            n_agents: n,
            epochs: 1,
        })?;
        out.push(outcome);
        running = Some(sigma_block);
    }
    Ok(out)
}

/// Per-epoch diagonal blocks of the inverse of the full space-time
/// Fisher matrix (the smoothing bound given all `T` epochs), without
/// assembling the dense matrix. Returns one outcome per epoch.
pub fn smoothing_crlb_per_epoch<T: Real>(
    epochs: &[EpochGeometry<T>],
    g_veh: T,
    g_sat: T,
    sigma_step: T,
) -> Result<Vec<CrlbOutcome<T>>, CrlbError> {
    let n = check_epochs(epochs)?;
    if !(sigma_step > T::zero()) {
        return Err(CrlbError::InvalidInput("sigma_step must be positive".into()));
    }
    let t = epochs.len();
    let blocks = measurement_blocks(epochs, g_veh, g_sat)?;
    let sys = assemble_tridiag(blocks, n, t, sigma_step);
    match sys.selected_inverse_diag() {
        Some(diags) => Ok(diags
            .into_iter()
            .map(|block| {
                let per_node: Vec<T> =
                    (0..n).map(|k| block[(k, k)] + block[(n + k, n + k)]).collect();
                CrlbOutcome::Bounded {
                    trace: block.trace(),
                    per_node,
                    min_eig: T::zero(),
                }
            })
            .collect()),
        None => {
            // Fall back to the dense eigenvalue path, which reports the
            // null space properly.
            let f = FisherMatrix { matrix: sys.to_dense(), n_agents: n, epochs: t };
            let outcome = crlb_trace(&f)?;
            match outcome {
                CrlbOutcome::Bounded { .. } => Err(CrlbError::NonFinite(
                    "selected inverse failed on an invertible system".into(),
                )),
                CrlbOutcome::Unlocalizable { null_basis, min_eig } => {
                    Ok(vec![CrlbOutcome::Unlocalizable { null_basis, min_eig }; t])
                }
            }
        }
    }
}
