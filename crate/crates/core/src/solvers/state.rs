use std::hash::{DefaultHasher, Hash, Hasher};

use crate::scalar::Scalar;

/// Quantities that exist only when a non-identity preconditioner is active.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecondTerms<T> {
    pub r_tilde: Vec<T>,
    pub w_tilde_prime: Vec<T>,
    pub s_tilde: Vec<T>,
    pub u_tilde: Vec<T>,
    pub w_tilde: Vec<T>,
    pub phi: T,
    /// `<r, r>` (with preconditioning `nu` is no longer the residual norm).
    pub r_norm_sq: T,
    /// `<r~, r~>`
    pub r_tilde_norm_sq: T,
    /// `<s, s>` (`gamma` mixes `s` and `s~`).
    pub s_norm_sq: T,
}

/// Extra inner products the detection criteria need. They are formed in the
/// same reduction as the solver's own inner products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probes<T> {
    /// `<p_{k-1}, s_k>`
    pub p_prev_s: T,
    /// `<p_k, p_k>`
    pub p_norm_sq: T,
    /// `<w_k - w'_k, w_k - w'_k>`
    pub w_gap_sq: T,
}

/// Every iteration variable of Pipe-PR-CG at one index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T = f64> {
    pub k: usize,
    pub x: Vec<T>,
    pub r: Vec<T>,
    pub w_prime: Vec<T>,
    pub p: Vec<T>,
    pub s: Vec<T>,
    pub u: Vec<T>,
    pub w: Vec<T>,
    pub nu_prime: T,
    pub beta: T,
    pub mu: T,
    pub sigma: T,
    pub gamma: T,
    pub nu: T,
    pub alpha: T,
    pub precond: Option<PrecondTerms<T>>,
    pub probes: Probes<T>,
}

impl<T: Scalar> SolverState<T> {
    pub(crate) fn blank(k: usize, preconditioned: bool) -> Self {
        let z = T::zero();
        Self {
            k,
            x: Vec::new(),
            r: Vec::new(),
            w_prime: Vec::new(),
            p: Vec::new(),
            s: Vec::new(),
            u: Vec::new(),
            w: Vec::new(),
            nu_prime: z,
            beta: z,
            mu: z,
            sigma: z,
            gamma: z,
            nu: z,
            alpha: z,
            precond: preconditioned.then(|| PrecondTerms {
                r_tilde: Vec::new(),
                w_tilde_prime: Vec::new(),
                s_tilde: Vec::new(),
                u_tilde: Vec::new(),
                w_tilde: Vec::new(),
                phi: z,
                r_norm_sq: z,
                r_tilde_norm_sq: z,
                s_norm_sq: z,
            }),
            probes: Probes { p_prev_s: z, p_norm_sq: z, w_gap_sq: z },
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn is_preconditioned(&self) -> bool {
        self.precond.is_some()
    }

    /// `r~_k`; aliases `r_k` without preconditioning.
    pub fn r_tilde(&self) -> &[T] {
        self.precond.as_ref().map_or(&self.r, |p| &p.r_tilde)
    }

    pub fn s_tilde(&self) -> &[T] {
        self.precond.as_ref().map_or(&self.s, |p| &p.s_tilde)
    }

    pub fn u_tilde(&self) -> &[T] {
        self.precond.as_ref().map_or(&self.u, |p| &p.u_tilde)
    }

    pub fn w_tilde(&self) -> &[T] {
        self.precond.as_ref().map_or(&self.w, |p| &p.w_tilde)
    }

    /// `phi_k = <s~_k, r_k>`, identical to `sigma_k` without preconditioning.
    pub fn phi(&self) -> T {
        self.precond.as_ref().map_or(self.sigma, |p| p.phi)
    }

    /// `||r_k||^2` as the detection criteria see it: `|nu_k|` without
    /// preconditioning, the dedicated inner product otherwise.
    pub fn r_norm_sq(&self) -> T {
        self.precond.as_ref().map_or(self.nu.abs(), |p| p.r_norm_sq.abs())
    }

    pub fn r_tilde_norm_sq(&self) -> T {
        self.precond.as_ref().map_or(self.nu.abs(), |p| p.r_tilde_norm_sq.abs())
    }

    pub fn s_norm_sq(&self) -> T {
        self.precond.as_ref().map_or(self.gamma.abs(), |p| p.s_norm_sq.abs())
    }

    pub(crate) fn vectors(&self) -> [(&'static str, &[T]); 7] {
        [
            ("x", &self.x),
            ("r", &self.r),
            ("w_prime", &self.w_prime),
            ("p", &self.p),
            ("s", &self.s),
            ("u", &self.u),
            ("w", &self.w),
        ]
    }

    pub(crate) fn scalars(&self) -> [(&'static str, T); 7] {
        [
            ("nu_prime", self.nu_prime),
            ("beta", self.beta),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("nu", self.nu),
            ("alpha", self.alpha),
        ]
    }

    /// Name of the first non-finite variable, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        for (name, v) in self.scalars() {
            if !v.is_finite_value() {
                return Some(name);
            }
        }
        for (name, v) in self.vectors() {
            if v.iter().any(|e| !e.is_finite_value()) {
                return Some(name);
            }
        }
        for (name, v) in [
            ("p_prev_s", &self.probes.p_prev_s),
            ("p_norm_sq", &self.probes.p_norm_sq),
            ("w_gap_sq", &self.probes.w_gap_sq),
        ] {
            if !v.is_finite_value() {
                return Some(name);
            }
        }
        if let Some(p) = &self.precond {
            for (name, v) in [
                ("phi", &p.phi),
                ("r_norm_sq", &p.r_norm_sq),
                ("r_tilde_norm_sq", &p.r_tilde_norm_sq),
                ("s_norm_sq", &p.s_norm_sq),
            ] {
                if !v.is_finite_value() {
                    return Some(name);
                }
            }
            for (name, v) in [
                ("r_tilde", &p.r_tilde),
                ("w_tilde_prime", &p.w_tilde_prime),
                ("s_tilde", &p.s_tilde),
                ("u_tilde", &p.u_tilde),
                ("w_tilde", &p.w_tilde),
            ] {
                if v.iter().any(|e| !e.is_finite_value()) {
                    return Some(name);
                }
            }
        }
        None
    }

    /// Bitwise equality of all iteration variables (index included).
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let vec_eq = |a: &[T], b: &[T]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y));
        self.k == other.k
            && self.vectors().iter().zip(other.vectors().iter()).all(|((_, a), (_, b))| vec_eq(a, b))
            && self.scalars().iter().zip(other.scalars().iter()).all(|((_, a), (_, b))| a.bit_eq(b))
    }
}

impl SolverState<f64> {
    /// Hash of the bit patterns of every iteration variable. Used to compare
    /// long trajectories without retaining them.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.k.hash(&mut h);
        for (_, v) in self.vectors() {
            for e in v {
                e.to_bits().hash(&mut h);
            }
        }
        for (_, s) in self.scalars() {
            s.to_bits().hash(&mut h);
        }
        h.finish()
    }
}
