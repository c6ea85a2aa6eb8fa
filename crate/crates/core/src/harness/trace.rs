use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::monitor::monitored_run;
use super::{HarnessError, MatrixCase};
use crate::detection::GapReport;
use crate::faults::{FaultInjector, FaultSpec};
use crate::ft::{aft_solve, ft_solve, FtConfig};
use crate::solvers::{NoHook, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    /// Pipe-PR-CG with the detection set watching only.
    Plain,
    /// FT-Pipe-PR-CG with rollback.
    Ft,
    /// Adaptive-threshold variant.
    Aft,
}

impl std::str::FromStr for TraceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(TraceMode::Plain),
            "ft" => Ok(TraceMode::Ft),
            "aft" => Ok(TraceMode::Aft),
            _ => Err(format!("unknown trace mode '{s}' (expected plain, ft or aft)")),
        }
    }
}

/// One executed iteration: gaps, bounds, alarms and the residual after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub rel_residual: f64,
    pub nu_gap: f64,
    pub nu_bound: f64,
    pub w_gap: f64,
    pub w_bound: f64,
    pub mu_gap: f64,
    pub mu_bound: f64,
    pub rel_mu_diff: Option<f64>,
    pub alarm_nu: bool,
    pub alarm_w: bool,
    pub alarm_mu: bool,
    pub alarm_rel: bool,
    pub threshold: f64,
    /// False for steps discarded by a rollback.
    pub accepted: bool,
}

impl TraceRow {
    fn new(r: &GapReport, rel_residual: f64, accepted: bool) -> Self {
        Self {
            k: r.k,
            rel_residual,
            nu_gap: r.nu_gap,
            nu_bound: r.nu_bound,
            w_gap: r.w_gap,
            w_bound: r.w_bound,
            mu_gap: r.mu_gap,
            mu_bound: r.mu_bound,
            rel_mu_diff: r.rel_mu_diff,
            alarm_nu: r.alarm_nu,
            alarm_w: r.alarm_w,
            alarm_mu: r.alarm_mu,
            alarm_rel: r.alarm_rel,
            threshold: r.threshold,
            accepted,
        }
    }
}

/// Per-iteration detection trace of one solve from `x = 0`.
#[allow(clippy::too_many_arguments)]
pub fn trace_rows(
    case: &MatrixCase,
    b: &[f64],
    mode: TraceMode,
    fault: Option<FaultSpec>,
    threshold: f64,
    adaptation: f64,
    solve: &SolveConfig,
) -> Result<Vec<TraceRow>, HarnessError> {
    if mode == TraceMode::Plain {
        let run = monitored_run(&case.a, &case.consts, b, fault, &[threshold], solve, true, true)?;
        let reports = run.reports.unwrap_or_default();
        return Ok(reports.iter().map(|r| TraceRow::new(r, run.residual_history[r.k], true)).collect());
    }
    let mut cfg = FtConfig::new(threshold, case.consts, *solve);
    cfg.adaptation = adaptation;
    cfg.record_steps = true;
    let x0 = vec![0.0; case.n()];
    let out = match (mode, fault) {
        (TraceMode::Ft, Some(f)) => ft_solve(&case.a, b, &x0, &cfg, &mut FaultInjector::single(f))?,
        (TraceMode::Ft, None) => ft_solve(&case.a, b, &x0, &cfg, &mut NoHook)?,
        (_, Some(f)) => aft_solve(&case.a, b, &x0, &cfg, &mut FaultInjector::single(f))?,
        (_, None) => aft_solve(&case.a, b, &x0, &cfg, &mut NoHook)?,
    };
    Ok(out.steps.unwrap_or_default().iter().map(|s| TraceRow::new(&s.report, s.rel_residual, s.accepted)).collect())
}

/// Write any serializable rows as CSV with a header line.
pub fn emit_trace<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    emit_trace(rows, std::fs::File::create(path)?)
}
