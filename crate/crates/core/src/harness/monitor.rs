use crate::detection::{evaluate_detection_set, BoundConstants, GapReport};
use crate::faults::{FaultInjector, FaultSpec, InjectionLog};
use crate::solvers::{initialize_piped, piped_step, Identity, NoHook, SolveConfig, SolveError, SolverState};
use crate::sparse::{norm2, SparseSpdMatrix};

/// A plain Pipe-PR-CG run observed by the detection set at several
/// thresholds at once. Alarms are recorded but never acted on.
#[derive(Debug, Clone)]
pub struct MonitoredRun {
    pub iterations: usize,
    pub converged: bool,
    /// First alarm iteration for each requested threshold.
    pub first_alarm: Vec<Option<usize>>,
    /// First iteration whose own gaps exceed a bound (lag ignored).
    pub first_bound_violation: Option<usize>,
    /// Iterations with at least one gap above its bound.
    pub bound_violations: usize,
    pub fault_applied: bool,
    /// Values before and after the flip, when one was applied.
    pub injection: Option<InjectionLog>,
    pub residual_history: Vec<f64>,
    /// Reports at the first threshold, when requested.
    pub reports: Option<Vec<GapReport>>,
}

/// Run Pipe-PR-CG from `x = 0` with an optional flip, evaluating the
/// detection set after every iteration.
#[allow(clippy::too_many_arguments)]
pub fn monitored_run(
    a: &SparseSpdMatrix,
    consts: &BoundConstants,
    b: &[f64],
    fault: Option<FaultSpec>,
    thresholds: &[f64],
    solve: &SolveConfig,
    lag_w: bool,
    keep_reports: bool,
) -> Result<MonitoredRun, SolveError> {
    solve.validate()?;
    let mut injector = fault.map(FaultInjector::single);
    let norm_b = norm2(b);
    let mut st: SolverState = initialize_piped(a, &Identity, b, &vec![0.0; a.n()])?;
    let mut history = vec![norm2(&st.r) / norm_b];
    let mut converged = history[0] <= solve.tol;
    let t0 = thresholds.first().copied().unwrap_or(f64::INFINITY);
    let mut prev_report: Option<GapReport> = None;
    let mut run = MonitoredRun {
        iterations: 0,
        converged: false,
        first_alarm: vec![None; thresholds.len()],
        first_bound_violation: None,
        bound_violations: 0,
        fault_applied: false,
        injection: None,
        residual_history: Vec::new(),
        reports: keep_reports.then(Vec::new),
    };

    while !converged && st.k < solve.max_iters {
        let next = match injector.as_mut() {
            Some(h) => piped_step(&st, a, &Identity, h)?,
            None => piped_step(&st, a, &Identity, &mut NoHook)?,
        };
        let report = evaluate_detection_set(&next, &st, prev_report.as_ref(), consts, t0, lag_w);
        let k = next.k;
        for (slot, &t) in run.first_alarm.iter_mut().zip(thresholds) {
            if slot.is_none() && report.with_threshold(t).any_alarm() {
                *slot = Some(k);
            }
        }
        let own_violation = report.nu_gap > report.nu_bound
            || report.w_gap > report.w_bound
            || report.mu_gap > report.mu_bound
            || [report.nu_gap, report.w_gap, report.mu_gap].iter().any(|g| g.is_nan());
        if own_violation {
            run.bound_violations += 1;
            run.first_bound_violation.get_or_insert(k);
        }
        if let Some(r) = run.reports.as_mut() {
            r.push(report);
        }
        prev_report = Some(report);
        st = next;
        let rel = norm2(&st.r) / norm_b;
        history.push(rel);
        converged = rel <= solve.tol;
    }

    run.iterations = st.k;
    run.converged = converged;
    run.fault_applied = injector.as_ref().is_some_and(|i| i.any_applied());
    run.injection = injector.as_ref().and_then(|i| i.logs().map(|(_, l)| *l).find(|l| l.applied));
    run.residual_history = history;
    Ok(run)
}
