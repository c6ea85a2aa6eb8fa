//! Conjugate gradient engines: the classical Hestenes-Stiefel recurrence and
//! the pipelined predict-and-recompute variant that the fault-tolerance layer
//! builds on.
//!
//! Each step is instrumented through [`StepHook`]: the hook is called right
//! after every one of the fourteen iteration variables receives its new
//! value, which is exactly where the fault injector operates.

mod hscg;
mod piped;
mod precond;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SparseError;

pub use hscg::{hscg_step, initialize_hscg, run_hscg, HsCgState};
pub use piped::{initialize_piped, piped_step, run_to_convergence, Solution};
pub(crate) use piped::step_with_duplicate_x;
pub use precond::{Identity, Jacobi, Preconditioner};
pub use state::{PrecondTerms, Probes, SolverState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("breakdown at iteration {k}: {quantity} is zero")]
    Breakdown { k: usize, quantity: &'static str },
    #[error("non-finite value in {variable} at iteration {k}")]
    Overflow { k: usize, variable: &'static str },
    #[error("duplicate x evaluations kept disagreeing at iteration {k}")]
    DuplicateMismatch { k: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dimension(#[from] SparseError),
}

impl SolveError {
    /// Failures that are not silent: the run announced itself as broken.
    pub fn is_overflow_like(&self) -> bool {
        matches!(self, SolveError::Overflow { .. } | SolveError::Breakdown { .. } | SolveError::DuplicateMismatch { .. })
    }
}

/// Stopping rule: `||r_k|| / ||b|| <= tol`, with `||r_k||` recomputed from
/// the residual vector, or `max_iters` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 100_000 }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// The fourteen per-iteration variables of unpreconditioned Pipe-PR-CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    X,
    R,
    WPrime,
    NuPrime,
    Beta,
    P,
    S,
    U,
    W,
    Mu,
    Sigma,
    Gamma,
    Nu,
    Alpha,
}

impl Variable {
    pub const ALL: [Variable; 14] = [
        Variable::X,
        Variable::R,
        Variable::WPrime,
        Variable::NuPrime,
        Variable::Beta,
        Variable::P,
        Variable::S,
        Variable::U,
        Variable::W,
        Variable::Mu,
        Variable::Sigma,
        Variable::Gamma,
        Variable::Nu,
        Variable::Alpha,
    ];

    pub fn is_vector(self) -> bool {
        matches!(
            self,
            Variable::X | Variable::R | Variable::WPrime | Variable::P | Variable::S | Variable::U | Variable::W
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::X => "x",
            Variable::R => "r",
            Variable::WPrime => "w_prime",
            Variable::NuPrime => "nu_prime",
            Variable::Beta => "beta",
            Variable::P => "p",
            Variable::S => "s",
            Variable::U => "u",
            Variable::W => "w",
            Variable::Mu => "mu",
            Variable::Sigma => "sigma",
            Variable::Gamma => "gamma",
            Variable::Nu => "nu",
            Variable::Alpha => "alpha",
        }
    }

    pub fn index(self) -> usize {
        Variable::ALL.iter().position(|&v| v == self).expect("ALL lists every variant")
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variable '{s}' (expected one of x, r, w_prime, nu_prime, beta, p, s, u, w, mu, sigma, gamma, nu, alpha)"))
    }
}

/// Observer invoked after each variable of an iteration is (re)computed.
/// `state.k` already holds the index of the iteration being built.
pub trait StepHook<T> {
    fn after(&mut self, _var: Variable, _state: &mut SolverState<T>) {}
}

/// Hook that does nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHook;

impl<T> StepHook<T> for NoHook {}

impl<T, H: StepHook<T> + ?Sized> StepHook<T> for &mut H {
    fn after(&mut self, var: Variable, state: &mut SolverState<T>) {
        (**self).after(var, state)
    }
}
