//! Fault-tolerant Pipe-PR-CG: the detection set is evaluated every
//! iteration and an alarm rolls the solver back to a state that predates
//! the suspected fault.
//!
//! Two policies are provided. [`ft_solve`] marks the re-executed alarm
//! iteration so a false positive cannot loop forever. [`aft_solve`] instead
//! shrinks the threshold `T` by a factor `a` whenever the relative mu
//! criterion fires.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{evaluate_detection_set, BoundConstants, GapReport};
use crate::solvers::{initialize_piped, step_with_duplicate_x, Identity, SolveConfig, SolveError, SolverState, StepHook};
use crate::sparse::{norm2, SparseSpdMatrix};

const RING_CAPACITY: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FtError {
    #[error("rollback from iteration {k} needs iterations {} through {k} in the history", k.saturating_sub(4))]
    RollbackUnavailable { k: usize },
}

/// A solver state together with the detection report computed for it
/// (`None` for the initial state).
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub state: SolverState<f64>,
    pub report: Option<GapReport>,
}

/// The last five iterations, newest last. The newest entry is the
/// candidate iteration the detection set is being evaluated on.
#[derive(Debug, Clone)]
pub struct HistoryRing {
    entries: VecDeque<HistoryEntry>,
    init: HistoryEntry,
}

impl HistoryRing {
    pub fn new(init: SolverState<f64>) -> Self {
        let init = HistoryEntry { state: init, report: None };
        Self { entries: VecDeque::from([init.clone()]), init }
    }

    pub fn push(&mut self, state: SolverState<f64>, report: Option<GapReport>) {
        if self.entries.len() == RING_CAPACITY {
            self.entries.pop_front();
        }
        self.entries.push_back(HistoryEntry { state, report });
    }

    pub fn latest(&self) -> &HistoryEntry {
        self.entries.back().expect("ring is never empty")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iterations(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.state.k)
    }

    /// Drop iterations `k-2..=k` so that `k-3` becomes the newest entry
    /// (with `k-4` before it), and return that pair as (current, previous).
    pub fn recover(&mut self) -> Result<(&SolverState<f64>, &SolverState<f64>), FtError> {
        let k = self.latest().state.k;
        let consecutive = self.entries.iter().zip(self.entries.iter().skip(1)).all(|(a, b)| b.state.k == a.state.k + 1);
        if self.entries.len() < RING_CAPACITY || !consecutive {
            return Err(FtError::RollbackUnavailable { k });
        }
        self.entries.truncate(2);
        Ok((&self.entries[1].state, &self.entries[0].state))
    }

    /// Fall back to the initial state.
    pub fn reset(&mut self) {
        self.entries.clear();
        self.entries.push_back(self.init.clone());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtConfig {
    pub threshold: f64,
    /// Threshold adaptation factor `a`; only used by [`aft_solve`].
    pub adaptation: f64,
    pub consts: BoundConstants,
    pub solve: SolveConfig,
    /// Decide the w criterion one iteration late, as a pipelined
    /// implementation with a single reduction per iteration must.
    pub lag_w: bool,
    pub record_fingerprints: bool,
    /// Keep a [`StepRecord`] for every executed step, rejected ones included.
    pub record_steps: bool,
}

impl FtConfig {
    pub fn new(threshold: f64, consts: BoundConstants, solve: SolveConfig) -> Self {
        Self {
            threshold,
            adaptation: 0.1,
            consts,
            solve,
            lag_w: true,
            record_fingerprints: false,
            record_steps: false,
        }
    }

    pub fn validate(&self, adaptive: bool) -> Result<(), SolveError> {
        self.solve.validate()?;
        if !(self.threshold > 0.0) {
            return Err(SolveError::InvalidConfig(format!("threshold must be positive, got {}", self.threshold)));
        }
        if adaptive && !(self.adaptation > 0.0 && self.adaptation < 1.0) {
            return Err(SolveError::InvalidConfig(format!("adaptation must lie in (0, 1), got {}", self.adaptation)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryAction {
    /// Rolled back to `k-3`.
    Rollback,
    /// Too early for a rollback; restarted from the initial state.
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmEntry {
    pub iteration: usize,
    /// Bitmask of `detection::CRITERION_*`.
    pub criteria: u8,
    pub threshold: f64,
    pub action: RecoveryAction,
}

/// Every alarm that triggered a recovery, in order of occurrence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlarmLog {
    pub entries: Vec<AlarmEntry>,
}

impl AlarmLog {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn first_at_or_after(&self, k: usize) -> Option<&AlarmEntry> {
        self.entries.iter().find(|e| e.iteration >= k)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(vec![]);
        for e in &self.entries {
            w.serialize(e)?;
        }
        if self.entries.is_empty() {
            w.write_record(["iteration", "criteria", "threshold", "action"])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// One executed step as seen by the detection layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub report: GapReport,
    pub rel_residual: f64,
    /// False when the step was discarded by a recovery.
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct FtOutcome {
    pub x: Vec<f64>,
    /// Steps executed minus steps discarded at detection: each recovery
    /// costs the two healthy iterations that are recomputed.
    pub iterations: usize,
    pub executed_steps: usize,
    /// Index of the final accepted iterate.
    pub final_k: usize,
    pub converged: bool,
    pub alarms: AlarmLog,
    /// Alarms ignored because the iteration had already been corrected.
    pub suppressed_alarms: usize,
    pub final_threshold: f64,
    pub x_recomputations: usize,
    /// Relative residual of each accepted iterate, indexed by `k`.
    pub residual_history: Vec<f64>,
    /// Bit fingerprint of each accepted iterate, indexed by `k`.
    pub fingerprints: Option<Vec<u64>>,
    /// Every executed step in execution order.
    pub steps: Option<Vec<StepRecord>>,
}

/// FT-Pipe-PR-CG with iteration marking.
pub fn ft_solve(
    a: &SparseSpdMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &FtConfig,
    hook: &mut impl StepHook<f64>,
) -> Result<FtOutcome, SolveError> {
    run(a, b, x0, cfg, hook, false)
}

/// AFT-Pipe-PR-CG: no marking, `T <- a T` on every relative-criterion alarm.
pub fn aft_solve(
    a: &SparseSpdMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &FtConfig,
    hook: &mut impl StepHook<f64>,
) -> Result<FtOutcome, SolveError> {
    run(a, b, x0, cfg, hook, true)
}

fn run(
    a: &SparseSpdMatrix,
    b: &[f64],
    x0: &[f64],
    cfg: &FtConfig,
    hook: &mut impl StepHook<f64>,
    adaptive: bool,
) -> Result<FtOutcome, SolveError> {
    cfg.validate(adaptive)?;
    let init = initialize_piped(a, &Identity, b, x0)?;
    let norm_b = norm2(b);
    let rel_res = |st: &SolverState<f64>| {
        let nr = norm2(&st.r);
        if norm_b == 0.0 {
            nr
        } else {
            nr / norm_b
        }
    };

    let mut residuals = vec![rel_res(&init)];
    let mut fingerprints = cfg.record_fingerprints.then(|| vec![init.fingerprint()]);
    let mut steps: Option<Vec<StepRecord>> = cfg.record_steps.then(Vec::new);
    let mut converged = residuals[0] <= cfg.solve.tol;
    let mut ring = HistoryRing::new(init);

    let mut threshold = cfg.threshold;
    let mut marked: HashSet<usize> = HashSet::new();
    let mut alarms = AlarmLog::default();
    let mut suppressed = 0;
    let mut executed = 0usize;
    let mut x_recomputations = 0;
    // Guards against a detection set that keeps firing on clean data
    // (which would be a bound that does not hold for this matrix).
    let executed_cap = cfg.solve.max_iters.saturating_mul(4).saturating_add(64);

    while !converged && executed - alarms.count() < cfg.solve.max_iters && executed < executed_cap {
        let prev = ring.latest();
        let (st, redos) = step_with_duplicate_x(&prev.state, a, &Identity, hook, true)?;
        executed += 1;
        x_recomputations += redos;
        let report = evaluate_detection_set(&st, &prev.state, prev.report.as_ref(), &cfg.consts, threshold, cfg.lag_w);
        let k = st.k;
        let rel = rel_res(&st);

        if report.any_alarm() {
            if !adaptive && marked.contains(&k) {
                suppressed += 1;
            } else {
                if adaptive && report.alarm_rel {
                    threshold *= cfg.adaptation;
                }
                ring.push(st, Some(report));
                let action = match ring.recover() {
                    Ok(_) => RecoveryAction::Rollback,
                    Err(FtError::RollbackUnavailable { .. }) => {
                        ring.reset();
                        RecoveryAction::Restart
                    }
                };
                alarms.entries.push(AlarmEntry {
                    iteration: k,
                    criteria: report.criteria_mask(),
                    threshold: report.threshold,
                    action,
                });
                if !adaptive {
                    marked.insert(k);
                }
                let keep = ring.latest().state.k + 1;
                residuals.truncate(keep);
                if let Some(f) = fingerprints.as_mut() {
                    f.truncate(keep);
                }
                if let Some(s) = steps.as_mut() {
                    s.push(StepRecord { report, rel_residual: rel, accepted: false });
                }
                continue;
            }
        }

        residuals.push(rel);
        if let Some(f) = fingerprints.as_mut() {
            f.push(st.fingerprint());
        }
        if let Some(s) = steps.as_mut() {
            s.push(StepRecord { report, rel_residual: rel, accepted: true });
        }
        converged = rel <= cfg.solve.tol;
        ring.push(st, Some(report));
    }

    let last = &ring.latest().state;
    Ok(FtOutcome {
        x: last.x.clone(),
        iterations: executed - alarms.count(),
        executed_steps: executed,
        final_k: last.k,
        converged,
        suppressed_alarms: suppressed,
        final_threshold: threshold,
        x_recomputations,
        residual_history: residuals,
        fingerprints,
        steps,
        alarms,
    })
}
