use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{run_rng, HarnessError, MatrixCase};
use crate::faults::{FaultInjector, FaultSpec};
use crate::solvers::{initialize_piped, piped_step, run_to_convergence, Identity, SolveConfig, SolveError, Variable};
use crate::sparse::{norm2, SparseSpdMatrix};

const PURPOSE_SWEEP_RHS: u8 = 3;
const PURPOSE_SWEEP: u8 = 4;

/// Convergence count for one (matrix, variable, bit, flip fraction) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub matrix: String,
    pub variable: Variable,
    pub bit: u32,
    pub fraction: f64,
    pub flip_iteration: usize,
    pub runs: usize,
    pub converged: usize,
}

impl SweepCell {
    pub fn converged_pct(&self) -> f64 {
        100.0 * self.converged as f64 / self.runs as f64
    }
}

/// Plain Pipe-PR-CG with one flip; `Ok(true)` if it reached the tolerance
/// within `limit` iterations. Overflow and breakdown count as divergence.
fn converges_with_flip(a: &SparseSpdMatrix, b: &[f64], spec: FaultSpec, solve: &SolveConfig) -> Result<bool, SolveError> {
    let norm_b = norm2(b);
    let mut hook = FaultInjector::single(spec);
    let mut st = initialize_piped(a, &Identity, b, &vec![0.0; a.n()])?;
    let mut rel = norm2(&st.r) / norm_b;
    while rel > solve.tol && st.k < solve.max_iters {
        st = match piped_step(&st, a, &Identity, &mut hook) {
            Ok(s) => s,
            Err(e) if e.is_overflow_like() => return Ok(false),
            Err(e) => return Err(e),
        };
        rel = norm2(&st.r) / norm_b;
    }
    Ok(rel <= solve.tol)
}

/// Flip every bit of every variable at each configured fraction of the
/// fault-free iteration count and record how many runs still converge
/// within the iteration limit. Vector variables get `cfg.trials` random
/// positions per cell, scalars one run.
pub fn sensitivity_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>, HarnessError> {
    cfg.validate()?;
    let variables = cfg.variables_except(&[]);
    let mut cells = Vec::new();
    for (mi, spec) in cfg.matrices.iter().enumerate() {
        let case = MatrixCase::load(spec)?;
        let n = case.n();
        let b = cfg.rhs.build(&case.a, &mut run_rng(cfg.seed, PURPOSE_SWEEP_RHS, mi, 0, 0));
        let reference = run_to_convergence(&case.a, &Identity, &b, &vec![0.0; n], &SolveConfig { tol: cfg.tol, max_iters: 50 * n + 1000 })
            .map_err(|source| HarnessError::Reference { matrix: case.name.clone(), source })?;
        if !reference.converged {
            return Err(HarnessError::NoConvergence(case.name.clone()));
        }
        let phi = reference.iterations;
        let limit = SolveConfig { tol: cfg.tol, max_iters: cfg.iteration_limit(phi) };

        let mut jobs = Vec::new();
        for &v in &variables {
            for bit in cfg.bits.0..=cfg.bits.1 {
                for (fi, &f) in cfg.fractions.iter().enumerate() {
                    jobs.push((v, bit, fi, f));
                }
            }
        }
        let matrix_cells: Result<Vec<SweepCell>, HarnessError> = jobs
            .par_iter()
            .map(|&(v, bit, fi, f)| {
                let iteration = ExperimentConfig::flip_iteration(phi, f);
                let runs = if v.is_vector() { cfg.trials } else { 1 };
                let mut converged = 0;
                for t in 0..runs {
                    let position = if v.is_vector() {
                        let key = (bit as usize) << 24 | fi << 16 | t;
                        run_rng(cfg.seed, PURPOSE_SWEEP, mi, v.index(), key).gen_range(0..n)
                    } else {
                        0
                    };
                    let spec = FaultSpec { target: v, iteration, bit, position };
                    if converges_with_flip(&case.a, &b, spec, &limit)? {
                        converged += 1;
                    }
                }
                Ok(SweepCell { matrix: case.name.clone(), variable: v, bit, fraction: f, flip_iteration: iteration, runs, converged })
            })
            .collect();
        cells.extend(matrix_cells?);
    }
    Ok(cells)
}

/// Percentage of convergent runs per bit: first per variable (pooled over
/// fractions, trials and matrices), then averaged with equal weight per
/// variable. Sorted by bit.
pub fn sweep_profile(cells: &[SweepCell]) -> Vec<(u32, f64)> {
    let mut bits: Vec<u32> = cells.iter().map(|c| c.bit).collect();
    bits.sort_unstable();
    bits.dedup();
    bits.into_iter()
        .map(|bit| {
            let mut per_var: Vec<(Variable, usize, usize)> = Vec::new();
            for c in cells.iter().filter(|c| c.bit == bit) {
                match per_var.iter_mut().find(|(v, ..)| *v == c.variable) {
                    Some(e) => {
                        e.1 += c.converged;
                        e.2 += c.runs;
                    }
                    None => per_var.push((c.variable, c.converged, c.runs)),
                }
            }
            let mean = per_var.iter().map(|&(_, ok, runs)| 100.0 * ok as f64 / runs as f64).sum::<f64>() / per_var.len() as f64;
            (bit, mean)
        })
        .collect()
}
