//! `ganlab compare`: one summary row per run directory.

use ganlab::metrics::{pearson, read_grid_csv, read_metrics_csv};
use ganlab::theory::DiracTrajectory;
use serde::Serialize;
use std::path::Path;

use crate::manifest::{RunManifest, RunStatus};
use crate::run::{METRICS, ORACLE_SURFACE, VALUE_SURFACE};
use crate::{CliError, CliResult};

/// `|θ|` below this at the end of a Dirac run counts as converged.
pub const DIRAC_SETTLE_TOL: f64 = 1e-2;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub name: String,
    pub seed: Option<u64>,
    /// `complete`, `diverged`, or `incomplete` when artifacts are missing.
    pub status: String,
    pub iter: Option<usize>,
    pub modes_covered: Option<usize>,
    pub hq_fraction: Option<f64>,
    pub gen_gap: Option<f64>,
    pub grad_norm_cv: Option<f64>,
    /// Correlation between the learned and the optimal value surface.
    pub oracle_corr: Option<f64>,
    /// `converged`, `oscillating` or `undecided` for Dirac runs.
    pub dirac_verdict: Option<String>,
}

fn incomplete(run: String, name: String) -> SummaryRow {
    SummaryRow {
        run,
        name,
        status: "incomplete".into(),
        ..SummaryRow::default()
    }
}

pub fn summarize(dir: &Path) -> SummaryRow {
    let run = dir.display().to_string();
    let Ok(m) = RunManifest::read(dir) else {
        return incomplete(run, String::new());
    };
    let status = match m.status {
        RunStatus::Complete => "complete",
        RunStatus::Diverged => "diverged",
    };
    let mut row = SummaryRow {
        run: run.clone(),
        name: m.name.clone(),
        seed: Some(m.seed),
        status: status.into(),
        ..SummaryRow::default()
    };
    let metrics = dir.join(METRICS);
    match read_grid_csv(&metrics) {
        Ok((header, rows)) if header == ["iter", "psi", "theta"] => {
            let t = DiracTrajectory {
                psi: rows.iter().map(|r| r[1]).collect(),
                theta: rows.iter().map(|r| r[2]).collect(),
            };
            row.iter = rows.len().checked_sub(1);
            row.dirac_verdict = Some(
                if t.settled_within(DIRAC_SETTLE_TOL).is_some() {
                    "converged"
                } else if t.oscillation().oscillating {
                    "oscillating"
                } else {
                    "undecided"
                }
                .into(),
            );
            return row;
        }
        _ => {}
    }
    let last = match read_metrics_csv(&metrics).ok().and_then(|r| r.last().cloned()) {
        Some(l) => l,
        None => return incomplete(run, m.name),
    };
    row.iter = Some(last.iter);
    row.modes_covered = last.modes_covered;
    row.hq_fraction = last.hq_fraction;
    row.gen_gap = Some(last.gen_gap);
    row.grad_norm_cv = Some(last.grad_norm_cv);
    if let (Ok((_, v)), Ok((_, o))) = (read_grid_csv(dir.join(VALUE_SURFACE)), read_grid_csv(dir.join(ORACLE_SURFACE))) {
        let a: Vec<f64> = v.iter().map(|r| r[2]).collect();
        let b: Vec<f64> = o.iter().map(|r| r[2]).collect();
        row.oracle_corr = pearson(&a, &b).ok();
    }
    row
}

/// Summaries of `dirs`; a run that is missing pieces is flagged, not fatal.
pub fn compare_runs(dirs: &[impl AsRef<Path>]) -> CliResult<Vec<SummaryRow>> {
    if dirs.is_empty() {
        return Err(CliError::Schema("compare needs at least one run directory".into()));
    }
    Ok(dirs.iter().map(|d| summarize(d.as_ref())).collect())
}

pub fn write_summary(rows: &[SummaryRow], out: impl std::io::Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
