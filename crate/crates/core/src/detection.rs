//! Rounding-error bounds on three gaps of Pipe-PR-CG and the detection set
//! built from them.
//!
//! In exact arithmetic `nu'_k = nu_k`, `w'_k = w_k` and `mu_k = sigma_k`.
//! In floating point the differences ("gaps") stay under worst-case bounds
//! derived from the standard model `|fp(a op b) - a op b| <= eps |a op b|`;
//! a gap above its bound signals a bit flip. A fourth criterion fires when
//! the relative distance between the mu-gap and its bound drops below a
//! threshold `T`, which catches flips the bounds miss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solvers::SolverState;
use crate::sparse::{norm2, SparseError, SparseSpdMatrix};

/// Unit roundoff of binary64.
pub const UNIT_ROUNDOFF: f64 = 1.0 / 9_007_199_254_740_992.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("invalid bound constant: {0}")]
    InvalidConstant(String),
    #[error(transparent)]
    Matrix(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub eps: f64,
    pub n: usize,
    /// Matvec rounding constant, `m sqrt(n)` with `m` the widest row.
    pub c: f64,
    pub norm_a: f64,
}

impl BoundConstants {
    pub fn new(eps: f64, n: usize, c: f64, norm_a: f64) -> Result<Self, DetectionError> {
        if !(eps > 0.0) {
            return Err(DetectionError::InvalidConstant(format!("eps = {eps}")));
        }
        if !(c >= 1.0) {
            return Err(DetectionError::InvalidConstant(format!("c = {c}")));
        }
        if !(norm_a > 0.0) || !norm_a.is_finite() {
            return Err(DetectionError::InvalidConstant(format!("norm_a = {norm_a}")));
        }
        Ok(Self { eps, n, c, norm_a })
    }

    /// Constants for `a` in binary64. Uses the cached norm estimate when
    /// present and runs power iteration otherwise.
    pub fn for_matrix(a: &SparseSpdMatrix) -> Result<Self, DetectionError> {
        let norm_a = match a.norm2_estimate() {
            Some(v) => v,
            None => a.clone().estimate_norm2(1e-8, 10_000)?,
        };
        Self::new(UNIT_ROUNDOFF, a.n(), a.rounding_constant(), norm_a)
    }
}

/// `eps (21 + 6n) (||r_{k-1}||^2 + ||r_k||^2)`
pub fn nu_gap_bound(norm_r_prev_sq: f64, norm_r_sq: f64, consts: &BoundConstants) -> f64 {
    consts.eps * (21.0 + 6.0 * consts.n as f64) * (norm_r_prev_sq + norm_r_sq)
}

/// Preconditioned form: `eps (21 + 6n)/2 (||r_{k-1}||^2 + ||r~_{k-1}||^2 + ||r_k||^2 + ||r~_k||^2)`.
pub fn nu_gap_bound_preconditioned(
    norm_r_prev_sq: f64,
    norm_rt_prev_sq: f64,
    norm_r_sq: f64,
    norm_rt_sq: f64,
    consts: &BoundConstants,
) -> f64 {
    consts.eps * (21.0 + 6.0 * consts.n as f64) / 2.0 * (norm_r_prev_sq + norm_rt_prev_sq + norm_r_sq + norm_rt_sq)
}

/// `eps ||A|| ((c+3)||r_k|| + (c+4)||r_{k-1}|| + (c+2)|alpha_{k-1}| ||s_{k-1}||)`
pub fn w_gap_bound(norm_r: f64, norm_r_prev: f64, abs_alpha_prev: f64, norm_s_prev: f64, consts: &BoundConstants) -> f64 {
    let c = consts.c;
    consts.eps * consts.norm_a * ((c + 3.0) * norm_r + (c + 4.0) * norm_r_prev + (c + 2.0) * abs_alpha_prev * norm_s_prev)
}

/// `2 (c+3) eps ||A|| (||r_{k-1}|| + ||r_k||)`, the form obtained after
/// eliminating `||s_{k-1}||`. With preconditioning pass the `r~` norms.
pub fn w_gap_bound_simplified(norm_r_prev: f64, norm_r: f64, consts: &BoundConstants) -> f64 {
    2.0 * (consts.c + 3.0) * consts.eps * consts.norm_a * (norm_r_prev + norm_r)
}

/// `|beta_k| |<p_{k-1}, s_k>| + eps ||s_k|| (||r_k|| + 2|beta_k| ||p_{k-1}|| + n (||p_k|| + ||r_k||))`.
/// With preconditioning pass `||r~_k||` as `norm_r`.
pub fn mu_gap_bound(
    beta: f64,
    ip_p_prev_s: f64,
    norm_s: f64,
    norm_r: f64,
    norm_p_prev: f64,
    norm_p: f64,
    consts: &BoundConstants,
) -> f64 {
    let b = beta.abs();
    b * ip_p_prev_s.abs() + consts.eps * norm_s * (norm_r + 2.0 * b * norm_p_prev + consts.n as f64 * (norm_p + norm_r))
}

/// Right-hand sides of the three standard-model kernel bounds:
/// axpy `eps (||x|| + 2|a| ||y||)`, inner product `eps n ||x|| ||y||` and
/// matvec `eps c ||A|| ||x||`.
pub fn fp_model_bounds_reference(x: &[f64], y: &[f64], a: f64, consts: &BoundConstants) -> (f64, f64, f64) {
    let (nx, ny) = (norm2(x), norm2(y));
    let eps = consts.eps;
    (eps * (nx + 2.0 * a.abs() * ny), eps * consts.n as f64 * nx * ny, eps * consts.c * consts.norm_a * nx)
}

/// Gaps, bounds and alarms of one iteration.
///
/// `w_gap`/`w_bound` belong to this iteration. When the w criterion runs
/// lagged (`w_lagged`), `alarm_w` was decided from the previous iteration's
/// pair, as a pipelined implementation would.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub k: usize,
    pub nu_gap: f64,
    pub nu_bound: f64,
    pub w_gap: f64,
    pub w_bound: f64,
    pub mu_gap: f64,
    pub mu_bound: f64,
    /// `|B_mu - D_mu| / B_mu`; `None` when `B_mu = 0`.
    pub rel_mu_diff: Option<f64>,
    pub threshold: f64,
    pub alarm_nu: bool,
    pub alarm_w: bool,
    pub alarm_mu: bool,
    pub alarm_rel: bool,
    pub w_lagged: bool,
}

pub const CRITERION_NU: u8 = 1;
pub const CRITERION_W: u8 = 2;
pub const CRITERION_MU: u8 = 4;
pub const CRITERION_REL: u8 = 8;

impl GapReport {
    pub fn any_alarm(&self) -> bool {
        self.alarm_nu || self.alarm_w || self.alarm_mu || self.alarm_rel
    }

    /// Alarm from the three bound-violation criteria only.
    pub fn bound_violated(&self) -> bool {
        self.alarm_nu || self.alarm_w || self.alarm_mu
    }

    pub fn criteria_mask(&self) -> u8 {
        (self.alarm_nu as u8 * CRITERION_NU)
            | (self.alarm_w as u8 * CRITERION_W)
            | (self.alarm_mu as u8 * CRITERION_MU)
            | (self.alarm_rel as u8 * CRITERION_REL)
    }

    /// Re-decide the rel criterion for another threshold. Everything else is
    /// threshold-independent.
    pub fn with_threshold(&self, threshold: f64) -> GapReport {
        GapReport { threshold, alarm_rel: self.rel_mu_diff.is_some_and(|r| r < threshold), ..*self }
    }
}

/// Evaluate the detection set for iteration `cur.k` given iteration
/// `cur.k - 1` in `prev`.
///
/// With `lag_w` the w alarm comes from `prev_report` (no alarm when there is
/// none, i.e. at `k = 1`); otherwise it is decided immediately.
pub fn evaluate_detection_set(
    cur: &SolverState<f64>,
    prev: &SolverState<f64>,
    prev_report: Option<&GapReport>,
    consts: &BoundConstants,
    threshold: f64,
    lag_w: bool,
) -> GapReport {
    let norm_r = cur.r_norm_sq().sqrt();
    let norm_r_prev = prev.r_norm_sq().sqrt();
    let norm_s = cur.s_norm_sq().sqrt();
    let norm_s_prev = prev.s_norm_sq().sqrt();
    let norm_p = cur.probes.p_norm_sq.abs().sqrt();
    let norm_p_prev = prev.probes.p_norm_sq.abs().sqrt();

    let nu_gap = (cur.nu - cur.nu_prime).abs();
    let w_gap = cur.probes.w_gap_sq.abs().sqrt();
    let mu_gap = (cur.mu - cur.sigma).abs();

    let (nu_bound, w_bound, mu_bound) = if cur.is_preconditioned() {
        let norm_rt = cur.r_tilde_norm_sq().sqrt();
        let norm_rt_prev = prev.r_tilde_norm_sq().sqrt();
        (
            nu_gap_bound_preconditioned(
                prev.r_norm_sq(),
                prev.r_tilde_norm_sq(),
                cur.r_norm_sq(),
                cur.r_tilde_norm_sq(),
                consts,
            ),
            w_gap_bound_simplified(norm_rt_prev, norm_rt, consts),
            mu_gap_bound(cur.beta, cur.probes.p_prev_s, norm_s, norm_rt, norm_p_prev, norm_p, consts),
        )
    } else {
        (
            nu_gap_bound(prev.nu.abs(), cur.nu.abs(), consts),
            w_gap_bound(norm_r, norm_r_prev, prev.alpha.abs(), norm_s_prev, consts),
            mu_gap_bound(cur.beta, cur.probes.p_prev_s, norm_s, norm_r, norm_p_prev, norm_p, consts),
        )
    };

    let rel_mu_diff = (mu_bound > 0.0).then(|| (mu_bound - mu_gap).abs() / mu_bound);
    // NaN gaps (from corrupted values) never compare greater; count them as violations.
    let exceeds = |gap: f64, bound: f64| gap > bound || gap.is_nan();
    let alarm_w = if lag_w {
        prev_report.is_some_and(|p| exceeds(p.w_gap, p.w_bound))
    } else {
        exceeds(w_gap, w_bound)
    };
    GapReport {
        k: cur.k,
        nu_gap,
        nu_bound,
        w_gap,
        w_bound,
        mu_gap,
        mu_bound,
        rel_mu_diff,
        threshold,
        alarm_nu: exceeds(nu_gap, nu_bound),
        alarm_w,
        alarm_mu: exceeds(mu_gap, mu_bound),
        alarm_rel: rel_mu_diff.is_some_and(|r| r < threshold),
        w_lagged: lag_w,
    }
}
