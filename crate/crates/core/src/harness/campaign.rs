use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{classify_run, Outcome, Tally};
use super::config::ExperimentConfig;
use super::monitor::monitored_run;
use super::{run_rng, HarnessError, MatrixCase};
use crate::faults::{FaultInjector, FaultSpec};
use crate::ft::{aft_solve, FtConfig};
use crate::solvers::{SolveConfig, Variable};

const PURPOSE_DETECT: u8 = 1;
const PURPOSE_AFT: u8 = 2;

/// Flips in `x` never reach the other variables, so the campaigns skip it.
const UNCOVERED: [Variable; 1] = [Variable::X];

/// Iteration cap for fault-free reference runs.
fn reference_limit(n: usize) -> usize {
    50 * n + 1000
}

/// One campaign run: the drawn fault (if any) and the outcome at every
/// configured threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub matrix: String,
    pub variable: Variable,
    pub trial: usize,
    pub fault: Option<FaultSpec>,
    pub phi: usize,
    pub iterations: usize,
    pub converged: bool,
    /// First alarm iteration per threshold.
    pub rho: Vec<Option<usize>>,
    pub outcomes: Vec<Outcome>,
}

fn draw_fault(rng: &mut impl Rng, cfg: &ExperimentConfig, variable: Variable, phi: usize, n: usize) -> FaultSpec {
    let (lo, hi) = cfg.tau_range;
    let tau = ((rng.gen_range(lo..=hi) * phi as f64).round() as usize).max(1);
    let bit = rng.gen_range(cfg.bits.0..=cfg.bits.1);
    let position = rng.gen_range(0..n);
    FaultSpec { target: variable, iteration: tau, bit, position }
}

/// Run `trial` of the detection campaign for `variable` on `case`. Trials
/// below `cfg.tainted_runs` carry a flip; the rest are fault-free.
pub fn detection_run(
    case: &MatrixCase,
    cfg: &ExperimentConfig,
    matrix_index: usize,
    variable: Variable,
    trial: usize,
) -> Result<DetectionRecord, HarnessError> {
    let mut rng = run_rng(cfg.seed, PURPOSE_DETECT, matrix_index, variable.index(), trial);
    let b = cfg.rhs.build(&case.a, &mut rng);
    let tainted = trial < cfg.tainted_runs;
    let thresholds = &cfg.thresholds;
    let reference_cfg = SolveConfig { tol: cfg.tol, max_iters: reference_limit(case.n()) };
    let reference = monitored_run(&case.a, &case.consts, &b, None, if tainted { &[] } else { thresholds }, &reference_cfg, true, false)
        .map_err(|source| HarnessError::Reference { matrix: case.name.clone(), source })?;
    if !reference.converged {
        return Err(HarnessError::NoConvergence(case.name.clone()));
    }
    let phi = reference.iterations;
    let mut record = DetectionRecord {
        matrix: case.name.clone(),
        variable,
        trial,
        fault: None,
        phi,
        iterations: phi,
        converged: true,
        rho: reference.first_alarm.clone(),
        outcomes: reference.first_alarm.iter().map(|&rho| classify_run(rho, None, true)).collect(),
    };
    if !tainted {
        return Ok(record);
    }

    let spec = draw_fault(&mut rng, cfg, variable, phi, case.n());
    record.fault = Some(spec);
    let limit = SolveConfig { tol: cfg.tol, max_iters: cfg.iteration_limit(phi) };
    match monitored_run(&case.a, &case.consts, &b, Some(spec), thresholds, &limit, true, false) {
        Ok(run) => {
            record.iterations = run.iterations;
            record.converged = run.converged;
            record.outcomes = run.first_alarm.iter().map(|&rho| classify_run(rho, Some(spec.iteration), run.converged)).collect();
            record.rho = run.first_alarm;
        }
        Err(e) if e.is_overflow_like() => {
            record.converged = false;
            record.rho = vec![None; thresholds.len()];
            record.outcomes = vec![Outcome::Overflow; thresholds.len()];
        }
        Err(e) => return Err(e.into()),
    }
    Ok(record)
}

/// Outcome counts for one matrix, threshold and variable (`None` = all).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTally {
    pub matrix: String,
    pub threshold: f64,
    pub variable: Option<Variable>,
    pub tally: Tally,
}

/// CSV shape of a [`DetectionTally`].
#[derive(Serialize)]
struct DetectionRow<'a> {
    matrix: &'a str,
    threshold: f64,
    variable: &'a str,
    tp: usize,
    sp: usize,
    fp: usize,
    tn: usize,
    sn: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    overflow_excluded: usize,
}

impl DetectionTally {
    pub fn write_csv<W: std::io::Write>(rows: &[DetectionTally], out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            let t = &r.tally;
            w.serialize(DetectionRow {
                matrix: &r.matrix,
                threshold: r.threshold,
                variable: r.variable.map_or("all", |v| v.name()),
                tp: t.tp,
                sp: t.sp,
                fp: t.fp,
                tn: t.tn,
                sn: t.sn,
                fn_: t.fn_,
                overflow_excluded: t.overflow,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All runs of the detection campaign, ordered by matrix, variable, trial.
pub fn detection_records(cfg: &ExperimentConfig) -> Result<Vec<DetectionRecord>, HarnessError> {
    cfg.validate()?;
    let variables = cfg.variables_except(&UNCOVERED);
    let per_var = cfg.tainted_runs + cfg.untainted_runs;
    let mut out = Vec::new();
    for (mi, spec) in cfg.matrices.iter().enumerate() {
        let case = MatrixCase::load(spec)?;
        let jobs: Vec<(Variable, usize)> = variables.iter().flat_map(|&v| (0..per_var).map(move |t| (v, t))).collect();
        let records: Result<Vec<_>, _> = jobs.par_iter().map(|&(v, t)| detection_run(&case, cfg, mi, v, t)).collect();
        out.extend(records?);
    }
    Ok(out)
}

/// Table of outcome counts per matrix and threshold: one row per variable
/// followed by the sum over variables.
pub fn detection_campaign(cfg: &ExperimentConfig) -> Result<Vec<DetectionTally>, HarnessError> {
    let records = detection_records(cfg)?;
    Ok(tally_detection(&records, cfg))
}

fn tally_detection(records: &[DetectionRecord], cfg: &ExperimentConfig) -> Vec<DetectionTally> {
    let mut rows = Vec::new();
    let mut matrices: Vec<&str> = Vec::new();
    for r in records {
        if !matrices.contains(&r.matrix.as_str()) {
            matrices.push(&r.matrix);
        }
    }
    let variables = cfg.variables_except(&UNCOVERED);
    for m in matrices {
        for (ti, &threshold) in cfg.thresholds.iter().enumerate() {
            let mut total = Tally::default();
            for &v in &variables {
                let mut t = Tally::default();
                for r in records.iter().filter(|r| r.matrix == m && r.variable == v) {
                    t.add(r.outcomes[ti]);
                }
                total.merge(&t);
                rows.push(DetectionTally { matrix: m.to_string(), threshold, variable: Some(v), tally: t });
            }
            rows.push(DetectionTally { matrix: m.to_string(), threshold, variable: None, tally: total });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AftOutcome {
    /// First alarm at or after the flip came at the flip iteration or the next.
    Positive,
    Sn,
    Fn,
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftRecord {
    pub matrix: String,
    pub variable: Variable,
    pub trial: usize,
    pub adaptation: f64,
    pub fault: FaultSpec,
    pub phi: usize,
    pub iterations: usize,
    pub converged: bool,
    pub alarms: usize,
    pub final_threshold: f64,
    pub outcome: AftOutcome,
}

/// One tainted AFT run. The fault and right-hand side depend only on
/// `(seed, matrix_index, variable, trial)`, never on `adaptation`.
pub fn aft_run(
    case: &MatrixCase,
    cfg: &ExperimentConfig,
    matrix_index: usize,
    variable: Variable,
    trial: usize,
    adaptation: f64,
) -> Result<AftRecord, HarnessError> {
    let mut rng = run_rng(cfg.seed, PURPOSE_AFT, matrix_index, variable.index(), trial);
    let b = cfg.rhs.build(&case.a, &mut rng);
    let reference_cfg = SolveConfig { tol: cfg.tol, max_iters: reference_limit(case.n()) };
    let reference = crate::solvers::run_to_convergence(&case.a, &crate::solvers::Identity, &b, &vec![0.0; case.n()], &reference_cfg)
        .map_err(|source| HarnessError::Reference { matrix: case.name.clone(), source })?;
    if !reference.converged {
        return Err(HarnessError::NoConvergence(case.name.clone()));
    }
    let phi = reference.iterations;
    let spec = draw_fault(&mut rng, cfg, variable, phi, case.n());

    let mut ft = FtConfig::new(cfg.aft_threshold, case.consts, SolveConfig { tol: cfg.tol, max_iters: cfg.iteration_limit(phi) });
    ft.adaptation = adaptation;
    let mut record = AftRecord {
        matrix: case.name.clone(),
        variable,
        trial,
        adaptation,
        fault: spec,
        phi,
        iterations: 0,
        converged: false,
        alarms: 0,
        final_threshold: cfg.aft_threshold,
        outcome: AftOutcome::Overflow,
    };
    match aft_solve(&case.a, &b, &vec![0.0; case.n()], &ft, &mut FaultInjector::single(spec)) {
        Ok(out) => {
            let tau = spec.iteration;
            let timely = out.alarms.first_at_or_after(tau).is_some_and(|e| e.iteration <= tau + 1);
            record.iterations = out.iterations;
            record.converged = out.converged;
            record.alarms = out.alarms.count();
            record.final_threshold = out.final_threshold;
            record.outcome = if timely {
                AftOutcome::Positive
            } else if out.converged {
                AftOutcome::Sn
            } else {
                AftOutcome::Fn
            };
        }
        Err(e) if e.is_overflow_like() => {}
        Err(e) => return Err(e.into()),
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftTally {
    pub matrix: String,
    pub adaptation: f64,
    /// `None` for the sum over variables.
    pub variable: Option<Variable>,
    pub positive: usize,
    pub sn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub overflow_excluded: usize,
    /// Mean alarm count over the non-overflow runs.
    pub mean_alarms: f64,
}

impl AftTally {
    fn from_records<'a>(
        matrix: &str,
        adaptation: f64,
        variable: Option<Variable>,
        records: impl Iterator<Item = &'a AftRecord>,
    ) -> Self {
        let mut t = AftTally {
            matrix: matrix.to_string(),
            adaptation,
            variable,
            positive: 0,
            sn: 0,
            fn_: 0,
            overflow_excluded: 0,
            mean_alarms: 0.0,
        };
        let mut alarms = 0usize;
        for r in records {
            match r.outcome {
                AftOutcome::Positive => t.positive += 1,
                AftOutcome::Sn => t.sn += 1,
                AftOutcome::Fn => t.fn_ += 1,
                AftOutcome::Overflow => {
                    t.overflow_excluded += 1;
                    continue;
                }
            }
            alarms += r.alarms;
        }
        let counted = t.positive + t.sn + t.fn_;
        t.mean_alarms = if counted == 0 { 0.0 } else { alarms as f64 / counted as f64 };
        t
    }

    pub fn write_csv<W: std::io::Write>(rows: &[AftTally], out: W) -> Result<(), HarnessError> {
        #[derive(Serialize)]
        struct Row<'a> {
            matrix: &'a str,
            a: f64,
            variable: &'a str,
            positive: usize,
            sn: usize,
            #[serde(rename = "fn")]
            fn_: usize,
            overflow_excluded: usize,
            alarms: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            w.serialize(Row {
                matrix: &r.matrix,
                a: r.adaptation,
                variable: r.variable.map_or("all", |v| v.name()),
                positive: r.positive,
                sn: r.sn,
                fn_: r.fn_,
                overflow_excluded: r.overflow_excluded,
                alarms: r.mean_alarms,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn aft_records(cfg: &ExperimentConfig) -> Result<Vec<AftRecord>, HarnessError> {
    cfg.validate()?;
    let variables = cfg.variables_except(&UNCOVERED);
    let mut out = Vec::new();
    for (mi, spec) in cfg.matrices.iter().enumerate() {
        let case = MatrixCase::load(spec)?;
        let jobs: Vec<(f64, Variable, usize)> = cfg
            .adaptations
            .iter()
            .flat_map(|&a| variables.iter().flat_map(move |&v| (0..cfg.aft_runs).map(move |t| (a, v, t))))
            .collect();
        let records: Result<Vec<_>, _> = jobs.par_iter().map(|&(a, v, t)| aft_run(&case, cfg, mi, v, t, a)).collect();
        out.extend(records?);
    }
    Ok(out)
}

/// Per matrix and adaptation factor: one row per variable and a sum row.
pub fn aft_campaign(cfg: &ExperimentConfig) -> Result<Vec<AftTally>, HarnessError> {
    let records = aft_records(cfg)?;
    let variables = cfg.variables_except(&UNCOVERED);
    let mut rows = Vec::new();
    let mut matrices: Vec<&str> = Vec::new();
    for r in &records {
        if !matrices.contains(&r.matrix.as_str()) {
            matrices.push(&r.matrix);
        }
    }
    for m in matrices {
        for &a in &cfg.adaptations {
            let of = |r: &&AftRecord| r.matrix == m && r.adaptation == a;
            for &v in &variables {
                rows.push(AftTally::from_records(m, a, Some(v), records.iter().filter(of).filter(|r| r.variable == v)));
            }
            rows.push(AftTally::from_records(m, a, None, records.iter().filter(of)));
        }
    }
    Ok(rows)
}
