use super::{Preconditioner, SolveConfig, SolveError, SolverState, StepHook, Variable};
use crate::scalar::Scalar;
use crate::sparse::{axpy_unchecked, dot_unchecked, SparseError, SparseSpdMatrix};

/// Result of an iteration engine run to its stopping rule.
#[derive(Debug, Clone)]
pub struct Solution<S> {
    pub state: S,
    /// Iterations executed; the fault-free value is the reference count `phi`.
    pub iterations: usize,
    /// `||r_k|| / ||b||` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// How many times a mismatching duplicate `x` update is redone before the
/// step gives up.
const MAX_X_RETRIES: usize = 8;

pub(crate) fn check_dims<T: Scalar>(a: &SparseSpdMatrix<T>, b: &[T], x0: &[T]) -> Result<(), SolveError> {
    for got in [b.len(), x0.len()] {
        if got != a.n() {
            return Err(SparseError::DimensionMismatch { expected: a.n(), got }.into());
        }
    }
    Ok(())
}

/// Relative residual with the norm recomputed from the vector.
pub(crate) fn relative_residual<T: Scalar>(r: &[T], norm_b: f64) -> f64 {
    let nr = dot_unchecked(r, r).to_f64().sqrt();
    if norm_b == 0.0 {
        nr
    } else {
        nr / norm_b
    }
}

/// Quotient `num / den` with the exact-convergence convention: `0 / 0` is 0
/// (the iteration has hit the solution and every later update is a no-op),
/// while `x / 0` with `x != 0` is a breakdown.
pub(crate) fn ratio<T: Scalar>(num: T, den: T, k: usize, quantity: &'static str) -> Result<T, SolveError> {
    if den.is_zero() {
        if num.is_zero() {
            Ok(T::zero())
        } else {
            Err(SolveError::Breakdown { k, quantity })
        }
    } else {
        Ok(num / den)
    }
}

pub fn initialize_piped<T: Scalar, M: Preconditioner<T> + ?Sized>(
    a: &SparseSpdMatrix<T>,
    m: &M,
    b: &[T],
    x0: &[T],
) -> Result<SolverState<T>, SolveError> {
    check_dims(a, b, x0)?;
    let ax = a.matvec_unchecked(x0);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut st = SolverState::blank(0, !m.is_identity());
    st.x = x0.to_vec();

    if let Some(pt) = st.precond.as_mut() {
        let r_tilde = m.apply(&r);
        let p = r_tilde.clone();
        let s = a.matvec_unchecked(&p);
        let s_tilde = m.apply(&s);
        let u = a.matvec_unchecked(&s_tilde);
        let w = a.matvec_unchecked(&r_tilde);
        pt.u_tilde = m.apply(&u);
        pt.w_tilde = m.apply(&w);
        st.sigma = dot_unchecked(&r_tilde, &s);
        st.gamma = dot_unchecked(&s_tilde, &s);
        st.nu = dot_unchecked(&r_tilde, &r);
        pt.phi = dot_unchecked(&s_tilde, &r);
        pt.r_norm_sq = dot_unchecked(&r, &r);
        pt.r_tilde_norm_sq = dot_unchecked(&r_tilde, &r_tilde);
        pt.s_norm_sq = dot_unchecked(&s, &s);
        st.mu = dot_unchecked(&p, &s);
        pt.w_tilde_prime = pt.w_tilde.clone();
        pt.r_tilde = r_tilde;
        pt.s_tilde = s_tilde;
        st.p = p;
        st.s = s;
        st.u = u;
        st.w = w;
    } else {
        let p = r.clone();
        let s = a.matvec_unchecked(&p);
        st.u = a.matvec_unchecked(&s);
        st.w = a.matvec_unchecked(&r);
        st.sigma = dot_unchecked(&r, &s);
        st.gamma = dot_unchecked(&s, &s);
        st.nu = dot_unchecked(&r, &r);
        st.mu = dot_unchecked(&p, &s);
        st.p = p;
        st.s = s;
    }
    st.r = r;
    if st.mu.is_zero() {
        return Err(SolveError::Breakdown { k: 0, quantity: "<p0, s0>" });
    }
    st.alpha = st.nu / st.mu;
    st.w_prime = st.w.clone();
    st.nu_prime = st.nu;
    st.probes.p_norm_sq = dot_unchecked(&st.p, &st.p);
    st.probes.p_prev_s = st.mu;
    if let Some(v) = st.first_non_finite() {
        return Err(SolveError::Overflow { k: 0, variable: v });
    }
    Ok(st)
}

/// One Pipe-PR-CG iteration, `k-1 -> k`.
pub fn piped_step<T: Scalar, M: Preconditioner<T> + ?Sized, H: StepHook<T>>(
    prev: &SolverState<T>,
    a: &SparseSpdMatrix<T>,
    m: &M,
    hook: &mut H,
) -> Result<SolverState<T>, SolveError> {
    step_with_duplicate_x(prev, a, m, hook, false).map(|(s, _)| s)
}

/// The step shared by the plain and fault-tolerant engines. With
/// `duplicate_x` the `x` update is evaluated twice and compared bitwise,
/// and both evaluations are redone until they agree. The second value is the
/// number of such redos.
pub(crate) fn step_with_duplicate_x<T: Scalar, M: Preconditioner<T> + ?Sized, H: StepHook<T>>(
    prev: &SolverState<T>,
    a: &SparseSpdMatrix<T>,
    m: &M,
    hook: &mut H,
    duplicate_x: bool,
) -> Result<(SolverState<T>, usize), SolveError> {
    let k = prev.k + 1;
    if prev.nu.is_zero() {
        return Err(SolveError::Breakdown { k, quantity: "nu" });
    }
    let alpha = prev.alpha;
    let neg_alpha = -alpha;
    let mut st = SolverState::blank(k, prev.is_preconditioned());

    let mut redos = 0;
    loop {
        st.x = axpy_unchecked(&prev.x, alpha, &prev.p);
        hook.after(Variable::X, &mut st);
        if !duplicate_x {
            break;
        }
        let x_hat = axpy_unchecked(&prev.x, alpha, &prev.p);
        if st.x.iter().zip(&x_hat).all(|(a, b)| a.bit_eq(b)) {
            break;
        }
        redos += 1;
        if redos > MAX_X_RETRIES {
            return Err(SolveError::DuplicateMismatch { k });
        }
    }

    st.r = axpy_unchecked(&prev.r, neg_alpha, &prev.s);
    if let (Some(pt), Some(pp)) = (st.precond.as_mut(), prev.precond.as_ref()) {
        pt.r_tilde = axpy_unchecked(&pp.r_tilde, neg_alpha, &pp.s_tilde);
    }
    hook.after(Variable::R, &mut st);

    st.w_prime = axpy_unchecked(&prev.w, neg_alpha, &prev.u);
    if let (Some(pt), Some(pp)) = (st.precond.as_mut(), prev.precond.as_ref()) {
        pt.w_tilde_prime = axpy_unchecked(&pp.w_tilde, neg_alpha, &pp.u_tilde);
    }
    hook.after(Variable::WPrime, &mut st);

    st.nu_prime = match prev.precond.as_ref() {
        Some(pp) => prev.nu - alpha * prev.sigma - alpha * pp.phi + alpha * alpha * prev.gamma,
        None => {
            let two = T::one() + T::one();
            prev.nu - two * alpha * prev.sigma + alpha * alpha * prev.gamma
        }
    };
    hook.after(Variable::NuPrime, &mut st);

    st.beta = st.nu_prime / prev.nu;
    hook.after(Variable::Beta, &mut st);

    st.p = axpy_unchecked(st.r_tilde(), st.beta, &prev.p);
    hook.after(Variable::P, &mut st);

    st.s = axpy_unchecked(&st.w_prime, st.beta, &prev.s);
    if let (Some(pt), Some(pp)) = (st.precond.as_mut(), prev.precond.as_ref()) {
        pt.s_tilde = axpy_unchecked(&pt.w_tilde_prime, st.beta, &pp.s_tilde);
    }
    hook.after(Variable::S, &mut st);

    st.u = a.matvec_unchecked(st.s_tilde());
    if let Some(pt) = st.precond.as_mut() {
        pt.u_tilde = m.apply(&st.u);
    }
    hook.after(Variable::U, &mut st);

    st.w = a.matvec_unchecked(st.r_tilde());
    if let Some(pt) = st.precond.as_mut() {
        pt.w_tilde = m.apply(&st.w);
    }
    hook.after(Variable::W, &mut st);

    // The single reduction: solver inner products plus detection probes.
    st.probes.p_prev_s = dot_unchecked(&prev.p, &st.s);
    st.probes.p_norm_sq = dot_unchecked(&st.p, &st.p);
    let w_diff: Vec<T> = st.w.iter().zip(&st.w_prime).map(|(&a, &b)| a - b).collect();
    st.probes.w_gap_sq = dot_unchecked(&w_diff, &w_diff);
    if let Some(pt) = st.precond.as_mut() {
        pt.r_norm_sq = dot_unchecked(&st.r, &st.r);
        pt.r_tilde_norm_sq = dot_unchecked(&pt.r_tilde, &pt.r_tilde);
        pt.s_norm_sq = dot_unchecked(&st.s, &st.s);
    }

    st.mu = dot_unchecked(&st.p, &st.s);
    hook.after(Variable::Mu, &mut st);
    st.sigma = dot_unchecked(st.r_tilde(), &st.s);
    hook.after(Variable::Sigma, &mut st);
    if st.is_preconditioned() {
        let phi = dot_unchecked(st.s_tilde(), &st.r);
        if let Some(pt) = st.precond.as_mut() {
            pt.phi = phi;
        }
    }
    st.gamma = dot_unchecked(st.s_tilde(), &st.s);
    hook.after(Variable::Gamma, &mut st);
    st.nu = dot_unchecked(st.r_tilde(), &st.r);
    hook.after(Variable::Nu, &mut st);

    st.alpha = ratio(st.nu, st.mu, k, "mu")?;
    hook.after(Variable::Alpha, &mut st);

    if let Some(v) = st.first_non_finite() {
        return Err(SolveError::Overflow { k, variable: v });
    }
    Ok((st, redos))
}

/// Iterate Pipe-PR-CG until the relative residual drops to `cfg.tol` or
/// `cfg.max_iters` steps have run.
pub fn run_to_convergence<T: Scalar, M: Preconditioner<T> + ?Sized>(
    a: &SparseSpdMatrix<T>,
    m: &M,
    b: &[T],
    x0: &[T],
    cfg: &SolveConfig,
) -> Result<Solution<SolverState<T>>, SolveError> {
    cfg.validate()?;
    let norm_b = dot_unchecked(b, b).to_f64().sqrt();
    let mut st = initialize_piped(a, m, b, x0)?;
    let mut history = vec![relative_residual(&st.r, norm_b)];
    let mut converged = history[0] <= cfg.tol;
    while !converged && st.k < cfg.max_iters {
        st = piped_step(&st, a, m, &mut super::NoHook)?;
        let rel = relative_residual(&st.r, norm_b);
        history.push(rel);
        converged = rel <= cfg.tol;
    }
    Ok(Solution { iterations: st.k, state: st, residual_history: history, converged })
}
