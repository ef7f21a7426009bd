//! CSV emitters. Formatting goes through `{}` on f64 (shortest
//! round-trip), so identical runs produce byte-identical files.

use super::driver::{BoundsRun, TrialRun};
use super::RunResult;
use crate::scenario::MeasurementSet;
use std::io::{BufWriter, Write};
use std::path::Path;

fn create(path: &Path) -> std::io::Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `epoch,vehicle,err_m,ess,resampled,neff_distinct`
pub fn write_error_trace(run: &TrialRun, path: &Path) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,vehicle,err_m,ess,resampled,neff_distinct")?;
    for (t, row) in run.errors.iter().enumerate() {
        for v in 0..row.len() {
            writeln!(
                w,
                "{t},{v},{},{},{},{}",
                row[v],
                run.ess[t][v],
                u8::from(run.resampled[t][v]),
                run.distinct[t][v]
            )?;
        }
    }
    w.flush()
}

/// `epoch,vehicle,x_hat,y_hat,var`
pub fn write_belief_log(run: &TrialRun, path: &Path) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,vehicle,x_hat,y_hat,var")?;
    for (t, row) in run.estimates.iter().enumerate() {
        for (v, p) in row.iter().enumerate() {
            writeln!(w, "{t},{v},{},{},{}", p.x, p.y, run.variances[t][v])?;
        }
    }
    w.flush()
}

/// `epoch,bound_kind{full|causal},trace_m2,min_eig,singular_flag`
///
/// The trace column is empty on singular epochs; `min_eig` is reported
/// where the dense path computed it (otherwise empty).
pub fn write_crlb_report(
    bounds: &BoundsRun,
    min_eigs: &[Option<f64>],
    path: &Path,
) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,bound_kind,trace_m2,min_eig,singular_flag")?;
    for t in 0..bounds.full.len() {
        let me = min_eigs.get(t).copied().flatten();
        writeln!(
            w,
            "{t},full,{},{},{}",
            fmt_opt(bounds.full[t]),
            fmt_opt(me),
            u8::from(bounds.full[t].is_none())
        )?;
        writeln!(
            w,
            "{t},causal,{},{},{}",
            fmt_opt(bounds.causal[t]),
            fmt_opt(me),
            u8::from(bounds.causal[t].is_none())
        )?;
    }
    w.flush()
}

/// `epoch,from,to,modality,value,z_true` (`z_true` only when asked).
pub fn write_measurements(
    set: &MeasurementSet,
    debug_truth: bool,
    path: &Path,
) -> std::io::Result<()> {
    let mut w = create(path)?;
    if debug_truth {
        writeln!(w, "epoch,from,to,modality,value,z_true")?;
    } else {
        writeln!(w, "epoch,from,to,modality,value")?;
    }
    for epoch in &set.per_epoch {
        for m in epoch {
            if debug_truth {
                writeln!(
                    w,
                    "{},v{},{},{},{},{}",
                    m.epoch,
                    m.from,
                    m.to,
                    m.modality.name(),
                    m.value,
                    u8::from(m.z_true)
                )?;
            } else {
                writeln!(w, "{},v{},{},{},{}", m.epoch, m.from, m.to, m.modality.name(), m.value)?;
            }
        }
    }
    w.flush()
}

/// `m_tilde,predicted_trace,empirical_trace,rel_err`
pub fn write_scaling_rows(
    rows: &[(usize, f64, f64)],
    path: &Path,
) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "m_tilde,predicted_trace,empirical_trace,rel_err")?;
    for &(m_tilde, pred, emp) in rows {
        let rel = if pred != 0.0 { (emp / pred - 1.0).abs() } else { f64::NAN };
        writeln!(w, "{m_tilde},{pred},{emp},{rel}")?;
    }
    w.flush()
}

/// One row per (sweep value, trial).
pub fn write_summary(results: &[RunResult], path: &Path) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "sweep_value,trial,mean_err_m,p05_err_m,p95_err_m,avg_ess,diverged,convergence_epoch,ls_mean_err_m"
    )?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_opt(r.sweep_value),
            r.trial,
            r.mean_error,
            r.p05,
            r.p95,
            r.avg_ess,
            u8::from(r.diverged),
            r.convergence_epoch.map_or_else(String::new, |e| e.to_string()),
            fmt_opt(r.ls_mean_error),
        )?;
    }
    w.flush()
}
