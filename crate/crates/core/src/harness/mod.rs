//! Experiment runner: parameter sweeps, trial orchestration, summary
//! statistics, and the scaling-law studies, with CSV outputs.

pub mod csvio;
mod driver;

pub use driver::{compute_bounds, epoch_geometries, run_filter_schedule, BoundsRun, TrialRun};

use crate::crlb::{
    agent_scaling_empirical, agent_scaling_prediction, anchor_scaling_empirical,
    anchor_scaling_prediction, geometry_eigenvalues, geometry_fisher, sym_inverse, CrlbError,
    ScalingInputs, StaticNetwork, SymInverse,
};
use crate::filter::FilterError;
use crate::noise::NoiseError;
use crate::rng::child_seed;
use crate::scenario::{ScenarioConfig, ScenarioError, ScenarioTruth};
use crate::Scalar;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
}

impl HarnessError {
    /// CLI exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Scenario(_) | HarnessError::InvalidSpec(_) => 2,
            HarnessError::Crlb(_) | HarnessError::Noise(_) => 3,
            HarnessError::Filter(_) | HarnessError::Io(_) => 1,
        }
    }
}

/// Filter tuning exposed to experiments (defaults: 2000 particles,
/// resampling threshold 30, reseed floor 10 distinct survivors).
#[derive(Debug, Clone, Copy)]
pub struct FilterParams {
    pub particles: usize,
    pub ess_threshold: Scalar,
    pub distinct_floor: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { particles: 2000, ess_threshold: 30.0, distinct_floor: 10 }
    }
}

/// The scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    MaskAngle,
    SigmaR,
    Alpha,
    SigmaIns,
    Radius,
}

impl SweepVariable {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "mask_angle" => Some(Self::MaskAngle),
            "sigma_r" => Some(Self::SigmaR),
            "alpha" => Some(Self::Alpha),
            "sigma_ins" => Some(Self::SigmaIns),
            "radius" => Some(Self::Radius),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MaskAngle => "mask_angle",
            Self::SigmaR => "sigma_r",
            Self::Alpha => "alpha",
            Self::SigmaIns => "sigma_ins",
            Self::Radius => "radius",
        }
    }

    /// Apply one sweep value to a scenario config.
    pub fn apply(self, config: &mut ScenarioConfig, value: Scalar) {
        match self {
            Self::MaskAngle => {
                config.mask_min_deg = value;
                config.mask_max_deg = value;
            }
            Self::SigmaR => config.noise.los.sigma = value,
            Self::Alpha => config.noise.alpha = value,
            Self::SigmaIns => config.sigma_ins_mps = value,
            Self::Radius => config.comm_radius_m = value,
        }
    }
}

/// What to run and what to write.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub filter: FilterParams,
    pub sweep: Option<(SweepVariable, Vec<Scalar>)>,
    pub trials: usize,
    pub out_dir: Option<PathBuf>,
    pub debug_truth: bool,
    /// Evaluate the information bounds per trial (distance modality only).
    pub with_bounds: bool,
}

impl ExperimentSpec {
    pub fn single(name: &str, scenario: ScenarioConfig) -> Self {
        Self {
            name: name.to_string(),
            scenario,
            filter: FilterParams::default(),
            sweep: None,
            trials: 1,
            out_dir: None,
            debug_truth: false,
            with_bounds: false,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidSpec("trials must be >= 1".into()));
        }
        if let Some((_, values)) = &self.sweep {
            if values.is_empty() {
                return Err(HarnessError::InvalidSpec("sweep value list is empty".into()));
            }
        }
        Ok(())
    }
}

/// Aggregated outcome of one trial.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub sweep_value: Option<Scalar>,
    pub trial: usize,
    pub seed: u64,
    /// Mean error over vehicles and post-warmup epochs.
    pub mean_error: Scalar,
    pub p05: Scalar,
    pub p95: Scalar,
    pub avg_ess: Scalar,
    pub diverged: bool,
    pub convergence_epoch: Option<usize>,
    pub ls_mean_error: Option<Scalar>,
    /// Mean-squared error per epoch (all epochs, for bound comparisons).
    pub epoch_mse: Vec<Scalar>,
    /// Causal bound per vehicle per epoch, where localizable.
    pub causal_per_vehicle: Vec<Option<Scalar>>,
    /// A trial that failed is recorded, not fatal.
    pub error: Option<String>,
}

/// First 10 epochs are excluded from summary statistics.
pub const WARMUP_EPOCHS: usize = 10;

/// Divergence: mean error over the last quarter of the post-warmup
/// window exceeds 3x the mean over its first quarter.
pub fn diverged(epoch_means: &[Scalar]) -> bool {
    if epoch_means.len() <= WARMUP_EPOCHS + 8 {
        return false;
    }
    let window = &epoch_means[WARMUP_EPOCHS..];
    let q = window.len() / 4;
    if q == 0 {
        return false;
    }
    let first: Scalar = window[..q].iter().sum::<Scalar>() / q as Scalar;
    let last: Scalar = window[window.len() - q..].iter().sum::<Scalar>() / q as Scalar;
    last > 3.0 * first
}

/// First epoch after which the rolling-5 mean error stays within twice
/// the final-quarter mean. `None` when the run diverged or never settles.
pub fn convergence_epoch(epoch_means: &[Scalar]) -> Option<usize> {
    if diverged(epoch_means) || epoch_means.len() < 8 {
        return None;
    }
    let n = epoch_means.len();
    let q = (n / 4).max(1);
    let final_mean: Scalar = epoch_means[n - q..].iter().sum::<Scalar>() / q as Scalar;
    let limit = 2.0 * final_mean;
    let rolling: Vec<Scalar> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(4);
            epoch_means[lo..=t].iter().sum::<Scalar>() / (t - lo + 1) as Scalar
        })
        .collect();
    let mut first_ok = None;
    for t in 0..n {
        if rolling[t] <= limit {
            first_ok.get_or_insert(t);
        } else {
            first_ok = None;
        }
    }
    first_ok
}

fn percentile(sorted: &[Scalar], p: Scalar) -> Scalar {
    if sorted.is_empty() {
        return Scalar::NAN;
    }
    let idx = ((sorted.len() - 1) as Scalar * p).round() as usize;
    sorted[idx]
}

/// Run one trial at a concrete config and summarize it.
fn run_trial(
    spec: &ExperimentSpec,
    sweep_value: Option<Scalar>,
    config: &ScenarioConfig,
    trial: usize,
) -> RunResult {
    let seed = config.seed;
    let blank = |msg: String| RunResult {
        sweep_value,
        trial,
        seed,
        mean_error: Scalar::NAN,
        p05: Scalar::NAN,
        p95: Scalar::NAN,
        avg_ess: Scalar::NAN,
        diverged: false,
        convergence_epoch: None,
        ls_mean_error: None,
        epoch_mse: Vec::new(),
        causal_per_vehicle: Vec::new(),
        error: Some(msg),
    };
    let truth = match ScenarioTruth::generate(config) {
        Ok(t) => t,
        Err(e) => return blank(e.to_string()),
    };
    let run = match run_filter_schedule(&truth, &spec.filter) {
        Ok(r) => r,
        Err(e) => return blank(e.to_string()),
    };
    let bounds = if spec.with_bounds {
        match compute_bounds(&truth) {
            Ok(b) => Some(b),
            Err(e) => return blank(e.to_string()),
        }
    } else {
        None
    };

    let epoch_means = run.epoch_mean_errors();
    let post_warmup: Vec<Scalar> = run
        .errors
        .iter()
        .skip(WARMUP_EPOCHS.min(run.epochs().saturating_sub(1)))
        .flatten()
        .copied()
        .collect();
    let mut sorted = post_warmup.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_error = post_warmup.iter().sum::<Scalar>() / post_warmup.len().max(1) as Scalar;
    let ess_values: Vec<Scalar> = run
        .ess
        .iter()
        .skip(WARMUP_EPOCHS.min(run.epochs().saturating_sub(1)))
        .flatten()
        .copied()
        .collect();
    let avg_ess = ess_values.iter().sum::<Scalar>() / ess_values.len().max(1) as Scalar;
    let ls: Vec<Scalar> = run.ls_errors.iter().flatten().filter_map(|e| *e).collect();
    let ls_mean_error =
        (!ls.is_empty()).then(|| ls.iter().sum::<Scalar>() / ls.len() as Scalar);

    let result = RunResult {
        sweep_value,
        trial,
        seed,
        mean_error,
        p05: percentile(&sorted, 0.05),
        p95: percentile(&sorted, 0.95),
        avg_ess,
        diverged: diverged(&epoch_means),
        convergence_epoch: convergence_epoch(&epoch_means),
        ls_mean_error,
        epoch_mse: run.epoch_mean_sq_errors(),
        causal_per_vehicle: bounds
            .as_ref()
            .map(|b| (0..run.epochs()).map(|t| b.causal_per_vehicle(t)).collect())
            .unwrap_or_default(),
        error: None,
    };

    if let Some(dir) = &spec.out_dir {
        let sub = match sweep_value {
            Some(v) => dir.join(&spec.name).join(v.to_string()),
            None => dir.join(&spec.name),
        };
        let _ = csvio::write_error_trace(&run, &sub.join(format!("trial_{trial}.csv")));
        let _ = csvio::write_belief_log(&run, &sub.join(format!("beliefs_{trial}.csv")));
        if let Some(b) = &bounds {
            let min_eigs = vec![None; b.full.len()];
            let _ = csvio::write_crlb_report(b, &min_eigs, &sub.join(format!("crlb_{trial}.csv")));
        }
        if spec.debug_truth {
            let _ = csvio::write_measurements(
                &truth.measurements,
                true,
                &sub.join(format!("measurements_{trial}.csv")),
            );
        }
    }
    result
}

/// Run the whole experiment: every sweep value times every trial, in
/// parallel, each trial on its own derived seed. Failed trials are
/// recorded in their `error` field. Results come back sorted by
/// (sweep index, trial) and, when an output directory is set, a
/// `summary.csv` is written there.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunResult>, HarnessError> {
    spec.validate()?;
    let values: Vec<Option<Scalar>> = match &spec.sweep {
        Some((_, vs)) => vs.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let jobs: Vec<(usize, Option<Scalar>, usize)> = values
        .iter()
        .enumerate()
        .flat_map(|(vi, v)| (0..spec.trials).map(move |k| (vi, *v, k)))
        .collect();
    let mut results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(vi, value, trial)| {
            let mut config = spec.scenario.clone();
            if let (Some((var, _)), Some(v)) = (&spec.sweep, value) {
                var.apply(&mut config, v);
            }
            config.seed = child_seed(spec.scenario.seed, vi as u64, trial as u64);
            run_trial(spec, value, &config, trial)
        })
        .collect();
    results.sort_by(|a, b| {
        let ka = (a.sweep_value.map(|v| v.to_bits()), a.trial);
        let kb = (b.sweep_value.map(|v| v.to_bits()), b.trial);
        ka.cmp(&kb)
    });
    if let Some(dir) = &spec.out_dir {
        csvio::write_summary(&results, &dir.join(&spec.name).join("summary.csv"))?;
    }
    Ok(results)
}

/// Average effective sample size per ranging-noise level.
#[derive(Debug, Clone)]
pub struct NeffRow {
    pub sigma_r: Scalar,
    pub avg_ess: Scalar,
}

/// The effective-sample-size table over a ranging-noise sweep.
pub fn neff_table(
    base: &ScenarioConfig,
    filter: FilterParams,
    sigma_values: &[Scalar],
    trials: usize,
) -> Result<Vec<NeffRow>, HarnessError> {
    let spec = ExperimentSpec {
        name: "neff".into(),
        scenario: base.clone(),
        filter,
        sweep: Some((SweepVariable::SigmaR, sigma_values.to_vec())),
        trials,
        out_dir: None,
        debug_truth: false,
        with_bounds: false,
    };
    let results = run_experiment(&spec)?;
    Ok(sigma_values
        .iter()
        .map(|&s| {
            let group: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.sweep_value == Some(s) && r.error.is_none())
                .collect();
            let avg = group.iter().map(|r| r.avg_ess).sum::<Scalar>() / group.len().max(1) as Scalar;
            NeffRow { sigma_r: s, avg_ess: avg }
        })
        .collect())
}

/// Scaling-law study parameters.
#[derive(Debug, Clone)]
pub struct ScalingParams {
    pub n_agents: usize,
    pub n_anchors: usize,
    /// Torus side (m).
    pub side: Scalar,
    /// Radius wiring the base network.
    pub base_radius: Scalar,
    /// Radius wiring the added nodes (defines rho).
    pub added_radius: Scalar,
    pub added_counts: Vec<usize>,
    pub deployments: usize,
    pub g: Scalar,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum ScalingKind {
    Anchors,
    Agents,
}

/// Prediction-versus-empirical rows `(added, predicted, empirical)` for
/// the chosen scaling law; optionally written as CSV.
pub fn scaling_experiment(
    kind: ScalingKind,
    params: &ScalingParams,
    out: Option<&Path>,
) -> Result<Vec<(usize, Scalar, Scalar)>, HarnessError> {
    let base = crate::crlb::random_torus_network::<Scalar>(
        params.n_agents,
        params.n_anchors,
        params.side,
        params.base_radius,
        params.seed,
    );
    let eigenvalues = geometry_eigenvalues(&base)?;
    let rho = (std::f64::consts::PI * params.added_radius * params.added_radius
        / (params.side * params.side))
        .min(1.0);
    let mut rows = Vec::with_capacity(params.added_counts.len());
    for &added in &params.added_counts {
        let inputs = ScalingInputs {
            eigenvalues: eigenvalues.clone(),
            rho,
            added,
            n_agents: params.n_agents,
            n_anchors: params.n_anchors,
            g: params.g,
        };
        let (pred, emp) = match kind {
            ScalingKind::Anchors => {
                let pred = anchor_scaling_prediction(&inputs)?;
                let (emp, _) = anchor_scaling_empirical(
                    &base,
                    params.side,
                    params.added_radius,
                    added,
                    params.deployments,
                    params.g,
                    child_seed(params.seed, 0xA, added as u64),
                )?;
                (pred, emp)
            }
            ScalingKind::Agents => {
                let f_g = geometry_fisher(&base)?;
                let (densified, _) = agent_scaling_prediction(&f_g, &inputs)?;
                let pred = match sym_inverse(&densified) {
                    SymInverse::Invertible { inverse, .. } => inverse.trace() / params.g,
                    SymInverse::Singular { .. } => {
                        return Err(HarnessError::Crlb(CrlbError::InvalidInput(
                            "densified prediction matrix is singular".into(),
                        )))
                    }
                };
                let emp = agent_scaling_empirical(
                    &base,
                    params.side,
                    params.added_radius,
                    added,
                    params.deployments,
                    params.g,
                    child_seed(params.seed, 0xB, added as u64),
                )?;
                (pred, emp)
            }
        };
        rows.push((added, pred, emp));
    }
    if let Some(path) = out {
        csvio::write_scaling_rows(&rows, path)?;
    }
    Ok(rows)
}

/// Fully-connected base network for the rho = 1 agent-scaling study.
pub fn full_connectivity_network(
    n_agents: usize,
    n_anchors: usize,
    side: Scalar,
    seed: u64,
) -> StaticNetwork<Scalar> {
    let mut net =
        crate::crlb::random_torus_network::<Scalar>(n_agents, n_anchors, side, side, seed);
    net.agent_edges.clear();
    net.anchor_edges.clear();
    for k in 0..n_agents {
        for m in (k + 1)..n_agents {
            net.agent_edges.push((k, m));
        }
        for a in 0..n_anchors {
            net.anchor_edges.push((k, a));
        }
    }
    net
}
