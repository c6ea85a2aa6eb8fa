use super::piped::{check_dims, ratio, relative_residual, Solution};
use super::{Preconditioner, SolveConfig, SolveError};
use crate::scalar::Scalar;
use crate::sparse::{axpy_unchecked, dot_unchecked, SparseSpdMatrix};

/// Iteration variables of classical (Hestenes-Stiefel) CG.
#[derive(Debug, Clone, PartialEq)]
pub struct HsCgState<T = f64> {
    pub k: usize,
    pub x: Vec<T>,
    pub r: Vec<T>,
    pub r_tilde: Vec<T>,
    pub p: Vec<T>,
    pub s: Vec<T>,
    pub nu: T,
    pub beta: T,
    pub mu: T,
    pub alpha: T,
}

pub fn initialize_hscg<T: Scalar, M: Preconditioner<T> + ?Sized>(
    a: &SparseSpdMatrix<T>,
    m: &M,
    b: &[T],
    x0: &[T],
) -> Result<HsCgState<T>, SolveError> {
    check_dims(a, b, x0)?;
    let ax = a.matvec_unchecked(x0);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let r_tilde = m.apply(&r);
    let nu = dot_unchecked(&r_tilde, &r);
    let p = r_tilde.clone();
    let s = a.matvec_unchecked(&p);
    let mu = dot_unchecked(&p, &s);
    if mu.is_zero() {
        return Err(SolveError::Breakdown { k: 0, quantity: "<p0, s0>" });
    }
    Ok(HsCgState { k: 0, x: x0.to_vec(), r, r_tilde, p, s, nu, beta: T::zero(), mu, alpha: nu / mu })
}

pub fn hscg_step<T: Scalar, M: Preconditioner<T> + ?Sized>(
    prev: &HsCgState<T>,
    a: &SparseSpdMatrix<T>,
    m: &M,
) -> Result<HsCgState<T>, SolveError> {
    let k = prev.k + 1;
    if prev.nu.is_zero() {
        return Err(SolveError::Breakdown { k, quantity: "nu" });
    }
    let x = axpy_unchecked(&prev.x, prev.alpha, &prev.p);
    let r = axpy_unchecked(&prev.r, -prev.alpha, &prev.s);
    let r_tilde = m.apply(&r);
    let nu = dot_unchecked(&r_tilde, &r);
    let beta = nu / prev.nu;
    let p = axpy_unchecked(&r_tilde, beta, &prev.p);
    let s = a.matvec_unchecked(&p);
    let mu = dot_unchecked(&p, &s);
    let alpha = ratio(nu, mu, k, "mu")?;
    let st = HsCgState { k, x, r, r_tilde, p, s, nu, beta, mu, alpha };
    let scalars_ok = [nu, beta, mu, alpha].iter().all(|v| v.is_finite_value());
    if !scalars_ok || st.x.iter().chain(&st.r).chain(&st.p).chain(&st.s).any(|v| !v.is_finite_value()) {
        return Err(SolveError::Overflow { k, variable: "hscg state" });
    }
    Ok(st)
}

pub fn run_hscg<T: Scalar, M: Preconditioner<T> + ?Sized>(
    a: &SparseSpdMatrix<T>,
    m: &M,
    b: &[T],
    x0: &[T],
    cfg: &SolveConfig,
) -> Result<Solution<HsCgState<T>>, SolveError> {
    cfg.validate()?;
    let norm_b = dot_unchecked(b, b).to_f64().sqrt();
    let mut st = initialize_hscg(a, m, b, x0)?;
    let mut history = vec![relative_residual(&st.r, norm_b)];
    let mut converged = history[0] <= cfg.tol;
    while !converged && st.k < cfg.max_iters {
        st = hscg_step(&st, a, m)?;
        let rel = relative_residual(&st.r, norm_b);
        history.push(rel);
        converged = rel <= cfg.tol;
    }
    Ok(Solution { iterations: st.k, state: st, residual_history: history, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::solvers::Identity;

    fn two_by_two() -> SparseSpdMatrix {
        SparseSpdMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]).unwrap()
    }

    #[test]
    fn init_values() {
        let st = initialize_hscg(&two_by_two(), &Identity, &[3.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(st.nu, 18.0);
        assert_eq!(st.alpha, 1.0 / 3.0);
        let t = vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)];
        let i3 = SparseSpdMatrix::from_triplets(3, &t).unwrap();
        let st = initialize_hscg(&i3, &Identity, &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!((st.nu, st.alpha), (3.0, 1.0));
        assert_eq!(st.s, vec![1.0; 3]);
    }

    #[test]
    fn exact_guess_breaks_down() {
        assert!(initialize_hscg(&two_by_two(), &Identity, &[3.0, 3.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn scalar_system_converges_in_one_step() {
        let a = SparseSpdMatrix::from_triplets(1, &[(0, 0, Rational::from_integer(4))]).unwrap();
        let st0 = initialize_hscg(&a, &Identity, &[Rational::from_integer(8)], &[Rational::from_integer(0)]).unwrap();
        let st1 = hscg_step(&st0, &a, &Identity).unwrap();
        assert_eq!(st1.x[0], Rational::from_integer(2));
        assert_eq!(st1.beta, st1.nu / st0.nu);
    }

    #[test]
    fn two_by_two_terminates_in_two_steps() {
        let a = two_by_two().map_values(|v| <Rational as Scalar>::from_f64(v).unwrap());
        let b = [Rational::from_integer(3), Rational::from_integer(1)];
        let zero = [Rational::from_integer(0); 2];
        let sol = run_hscg(&a, &Identity, &b, &zero, &SolveConfig { tol: 1e-300, max_iters: 2 }).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        assert_eq!(sol.state.x, vec![Rational::new(5, 3), Rational::new(-1, 3)]);
    }
}
