//! Command-line front end: scenario simulation, bound reports, parameter
//! sweeps, the effective-sample-size table, scaling-law studies, and a
//! quick oracle self-check.

use clap::{Args, Parser, Subcommand};
use cooploc::harness::{
    self, compute_bounds, csvio, neff_table, run_experiment, run_filter_schedule,
    ExperimentSpec, FilterParams, HarnessError, ScalingKind, ScalingParams, SweepVariable,
};
use cooploc::scenario::{ScenarioConfig, ScenarioTruth};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cooploc", version, about = "Cooperative NLOS localization workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Scenario config file (TOML); defaults to the built-in scenario.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the scenario RNG seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Particles per vehicle.
    #[arg(long, value_name = "N")]
    particles: Option<usize>,
    /// Resampling threshold on the effective sample size.
    #[arg(long, value_name = "X")]
    ess_threshold: Option<f64>,
}

impl CommonOpts {
    fn scenario(&self) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_toml_file(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn filter_params(&self) -> FilterParams {
        let mut params = FilterParams::default();
        if let Some(k) = self.particles {
            params.particles = k;
        }
        if let Some(t) = self.ess_threshold {
            params.ess_threshold = t;
        }
        params
    }
}

#[derive(Subcommand)]
enum Command {
    /// One scenario + filter run; writes error trace, belief log, and
    /// the measurement dump.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Include the hidden LOS flags in the measurement dump.
        #[arg(long)]
        debug_truth: bool,
    },
    /// Full and causal bound report on one realization's geometry.
    Crlb {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Parameter sweep: repeated trials per value, with summary.csv.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Sweep spec `name=v1,v2,...`; names: mask_angle, sigma_r,
        /// alpha, sigma_ins, radius.
        #[arg(long, value_name = "NAME=V1,V2,...")]
        sweep: String,
        #[arg(long, value_name = "N", default_value_t = 20)]
        trials: usize,
        /// Also evaluate the information bounds per trial.
        #[arg(long)]
        bounds: bool,
        #[arg(long)]
        debug_truth: bool,
    },
    /// Average effective sample size per ranging-noise level.
    NeffTable {
        #[command(flatten)]
        common: CommonOpts,
        /// Ranging-noise values (m).
        #[arg(long, value_name = "V1,V2,...", default_value = "1,2,3,4,5")]
        sigmas: String,
        #[arg(long, value_name = "N", default_value_t = 3)]
        trials: usize,
    },
    /// Scaling-law study: closed-form prediction vs direct assembly.
    Scaling {
        /// `anchors` or `agents`.
        #[arg(long, value_name = "KIND")]
        kind: String,
        #[arg(long, default_value_t = 5)]
        agents: usize,
        #[arg(long, default_value_t = 3)]
        anchors: usize,
        /// Torus side (m).
        #[arg(long, default_value_t = 100.0)]
        side: f64,
        #[arg(long, default_value_t = 45.0)]
        base_radius: f64,
        #[arg(long, default_value_t = 30.0)]
        added_radius: f64,
        /// Added node counts.
        #[arg(long, value_name = "V1,V2,...", default_value = "50,200,800")]
        added: String,
        #[arg(long, default_value_t = 100)]
        deployments: usize,
        #[arg(long, default_value_t = 2025)]
        seed: u64,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Quick self-check of the independent oracles (grid filter vs
    /// particle filter, Monte-Carlo Fisher, angle statistics).
    OracleCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_sweep(text: &str) -> Result<(SweepVariable, Vec<f64>), HarnessError> {
    let (name, values) = text.split_once('=').ok_or_else(|| {
        HarnessError::InvalidSpec(format!("sweep must look like name=v1,v2, got `{text}`"))
    })?;
    let var = SweepVariable::parse(name).ok_or_else(|| {
        HarnessError::InvalidSpec(format!(
            "unknown sweep variable `{name}` (expected mask_angle, sigma_r, alpha, sigma_ins, radius)"
        ))
    })?;
    let values = parse_values(values)?;
    Ok((var, values))
}

fn parse_values(text: &str) -> Result<Vec<f64>, HarnessError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| HarnessError::InvalidSpec(format!("bad value `{v}`: {e}")))
        })
        .collect()
}

fn parse_counts(text: &str) -> Result<Vec<usize>, HarnessError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| HarnessError::InvalidSpec(format!("bad count `{v}`: {e}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { common, debug_truth } => {
            let cfg = common.scenario()?;
            let truth = ScenarioTruth::generate(&cfg)?;
            let run = run_filter_schedule(&truth, &common.filter_params())?;
            let dir = common.out.join("simulate");
            csvio::write_error_trace(&run, &dir.join("trial_0.csv"))?;
            csvio::write_belief_log(&run, &dir.join("beliefs_0.csv"))?;
            csvio::write_measurements(
                &truth.measurements,
                debug_truth,
                &dir.join("measurements_0.csv"),
            )?;
            let means = run.epoch_mean_errors();
            let last = means.last().copied().unwrap_or(f64::NAN);
            println!(
                "simulated {} vehicles x {} epochs; final mean error {last:.3} m; outputs in {}",
                truth.n_vehicles(),
                cfg.epochs,
                dir.display()
            );
        }
        Command::Crlb { common } => {
            let cfg = common.scenario()?;
            let truth = ScenarioTruth::generate(&cfg)?;
            let bounds = compute_bounds(&truth)?;
            let dir = common.out.join("crlb");
            let min_eigs = vec![None; bounds.full.len()];
            csvio::write_crlb_report(&bounds, &min_eigs, &dir.join("crlb_0.csv"))?;
            let last_causal = bounds.causal.last().copied().flatten();
            println!(
                "bounds over {} epochs; final causal trace {:?} m^2; report in {}",
                cfg.epochs,
                last_causal,
                dir.display()
            );
        }
        Command::Sweep { common, sweep, trials, bounds, debug_truth } => {
            let scenario = common.scenario()?;
            let (var, values) = parse_sweep(&sweep)?;
            let spec = ExperimentSpec {
                name: format!("sweep_{}", var.name()),
                scenario,
                filter: common.filter_params(),
                sweep: Some((var, values)),
                trials,
                out_dir: Some(common.out.clone()),
                debug_truth,
                with_bounds: bounds,
            };
            let results = run_experiment(&spec)?;
            let failed = results.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} runs ({failed} failed); summary in {}",
                results.len(),
                common.out.join(&spec.name).join("summary.csv").display()
            );
        }
        Command::NeffTable { common, sigmas, trials } => {
            let scenario = common.scenario()?;
            let values = parse_values(&sigmas)?;
            let rows = neff_table(&scenario, common.filter_params(), &values, trials)?;
            println!("sigma_r_m,avg_ess");
            for row in &rows {
                println!("{},{}", row.sigma_r, row.avg_ess);
            }
        }
        Command::Scaling {
            kind,
            agents,
            anchors,
            side,
            base_radius,
            added_radius,
            added,
            deployments,
            seed,
            out,
        } => {
            let kind = match kind.as_str() {
                "anchors" => ScalingKind::Anchors,
                "agents" => ScalingKind::Agents,
                other => {
                    return Err(HarnessError::InvalidSpec(format!(
                        "kind must be `anchors` or `agents`, got `{other}`"
                    )))
                }
            };
            let params = ScalingParams {
                n_agents: agents,
                n_anchors: anchors,
                side,
                base_radius,
                added_radius,
                added_counts: parse_counts(&added)?,
                deployments,
                g: 1.0,
                seed,
            };
            let path = out.join("scaling").join(match kind {
                ScalingKind::Anchors => "anchors.csv",
                ScalingKind::Agents => "agents.csv",
            });
            let rows = harness::scaling_experiment(kind, &params, Some(&path))?;
            for (added, pred, emp) in &rows {
                println!(
                    "added {added}: predicted {pred:.6}, empirical {emp:.6}, rel err {:.4}",
                    (emp / pred - 1.0).abs()
                );
            }
            println!("written to {}", path.display());
        }
        Command::OracleCheck { seed } => {
            oracle_check(seed)?;
        }
    }
    Ok(())
}

/// A fast standalone pass over the main independent oracles.
fn oracle_check(seed: u64) -> Result<(), HarnessError> {
    use cooploc::crlb::{fisher_static, lln_angle_check, monte_carlo_fisher_static, StaticNetwork};
    use cooploc::filter::{grid_oracle_filter, run_toy_filter, GridSpec, ToyScenario};
    use cooploc::geom::Vec2;
    use cooploc::noise::{compute_g, ComponentDistribution, LosMarkov, MixtureNoiseModel};
    use rand::SeedableRng;

    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Gaussian information functional.
    let g_model = MixtureNoiseModel::new(
        1.0,
        ComponentDistribution::gaussian(0.0, 2.0),
        ComponentDistribution::gaussian(5.0, 5.0),
    )?;
    let g: f64 = compute_g(&g_model)?;
    check("g(N(0,4)) = 1/4", (g - 0.25).abs() < 1e-6, format!("got {g}"));

    // Monte-Carlo Fisher vs analytic assembly.
    let net = StaticNetwork::of(
        vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 4.0)],
        vec![Vec2::new(5.0, -6.0)],
        vec![(0, 1)],
        vec![(0, 0), (1, 0)],
    );
    let model = MixtureNoiseModel::new(
        0.5,
        ComponentDistribution::gaussian(0.0, 1.0),
        ComponentDistribution::gaussian(5.0, 5.0),
    )?;
    let analytic = fisher_static(&net, compute_g(&model)?)?;
    let emp = monte_carlo_fisher_static(&net, &model, 200_000, seed)?;
    let dev = emp.max_deviation_se(&analytic.matrix);
    check("empirical Fisher within 3 SE", dev < 3.0, format!("max dev {dev:.2} SE"));

    // Angle-statistic limits.
    let reports = lln_angle_check::<f64>(1_000_000, 1, seed);
    let worst = reports[0]
        .deviations_in_se()
        .iter()
        .fold(0.0f64, |a, d| a.max(d.abs()));
    check("angle statistics within 3 SE", worst < 3.0, format!("worst {worst:.2} SE"));

    // Grid oracle vs particle filter on a toy scenario.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let chain = LosMarkov::new(0.5, 0.7)?;
    let (scenario, _) = ToyScenario::sample(
        vec![Vec2::new(-8.0, -2.0), Vec2::new(8.0, -2.0), Vec2::new(0.0, 9.0)],
        Vec2::new(0.5, 1.0),
        Vec2::new(0.4, 0.1),
        4,
        1.0,
        0.3,
        model,
        chain,
        Vec2::new(0.0, 1.0),
        2.0,
        &mut rng,
    );
    let grid = GridSpec { origin: Vec2::new(-9.0, -8.0), width: 20.0, height: 18.0, pitch: 0.1 };
    let oracle = grid_oracle_filter(&scenario, &grid)?;
    let pf = run_toy_filter(&scenario, 40_000, 30.0, &mut rng)?;
    let gap = oracle
        .iter()
        .zip(pf.iter())
        .map(|(o, p)| (o.mean - p.position).norm())
        .fold(0.0f64, f64::max);
    check("particle filter tracks grid oracle", gap < 0.25, format!("max gap {gap:.3} m"));

    if failures > 0 {
        Err(HarnessError::InvalidSpec(format!("{failures} oracle checks failed")))
    } else {
        println!("all oracle checks passed");
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
