//! Experiment orchestration: bit-sensitivity sweeps, detection campaigns,
//! adaptive-threshold campaigns and per-iteration traces.
//!
//! Every randomized run draws from its own ChaCha8 stream keyed by
//! `(seed, matrix, variable, trial)`, so results do not depend on the order
//! in which the worker pool schedules runs.

mod campaign;
mod classify;
mod config;
mod monitor;
mod sweep;
mod trace;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detection::{BoundConstants, DetectionError};
use crate::mm::{load_matrix_market, MatrixMarketError};
use crate::solvers::SolveError;
use crate::sparse::SparseSpdMatrix;
use crate::gallery;

pub use campaign::{aft_campaign, aft_records, aft_run, detection_campaign, detection_records, detection_run, AftOutcome, AftRecord, AftTally, DetectionRecord, DetectionTally};
pub use classify::{classify_run, Outcome, Tally};
pub use config::{ExperimentConfig, RhsMode};
pub use monitor::{monitored_run, MonitoredRun};
pub use sweep::{sensitivity_sweep, sweep_profile, SweepCell};
pub use trace::{emit_trace, trace_rows, write_csv, TraceMode, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot load matrix '{name}': {source}")]
    Load { name: String, source: MatrixMarketError },
    #[error("unknown gallery matrix '{0}' (available: {list})", list = gallery::NAMES.join(", "))]
    UnknownGallery(String),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("reference run on '{matrix}' failed: {source}")]
    Reference { matrix: String, source: SolveError },
    #[error("reference run on '{0}' did not converge")]
    NoConvergence(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A matrix ready for experiments: name, entries and bound constants.
#[derive(Debug, Clone)]
pub struct MatrixCase {
    pub name: String,
    pub a: SparseSpdMatrix,
    pub consts: BoundConstants,
}

impl MatrixCase {
    pub fn new(name: impl Into<String>, mut a: SparseSpdMatrix) -> Result<Self, HarnessError> {
        if a.norm2_estimate().is_none() {
            a.estimate_norm2(1e-8, 10_000).map_err(DetectionError::from)?;
        }
        let consts = BoundConstants::for_matrix(&a)?;
        Ok(Self { name: name.into(), a, consts })
    }

    /// `gallery:NAME` for a built-in matrix, anything else is a Matrix
    /// Market file path.
    pub fn load(spec: &str) -> Result<Self, HarnessError> {
        if let Some(name) = spec.strip_prefix("gallery:") {
            let a = gallery::by_name(name).ok_or_else(|| HarnessError::UnknownGallery(name.to_string()))?;
            return Self::new(name, a);
        }
        let a = load_matrix_market(spec).map_err(|source| HarnessError::Load { name: spec.to_string(), source })?;
        let name = Path::new(spec).file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
        Self::new(name, a)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }
}

/// Independent generator for one run. Streams are keyed so that, e.g., the
/// AFT campaign sees the same draws for every adaptation factor.
pub fn run_rng(seed: u64, purpose: u8, matrix: usize, variable: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = (purpose as u64) << 56 | (matrix as u64 & 0xff) << 48 | (variable as u64 & 0xff) << 40 | trial as u64;
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let draw = |m, v, t| run_rng(7, 1, m, v, t).gen::<u64>();
        assert_eq!(draw(0, 1, 2), draw(0, 1, 2));
        assert_ne!(draw(0, 1, 2), draw(0, 1, 3));
        assert_ne!(draw(0, 1, 2), draw(1, 1, 2));
        assert_ne!(run_rng(7, 1, 0, 0, 0).gen::<u64>(), run_rng(7, 2, 0, 0, 0).gen::<u64>());
    }

    #[test]
    fn load_gallery_and_reject_unknown() {
        let case = MatrixCase::load("gallery:grid9-12").unwrap();
        assert_eq!(case.n(), 144);
        assert!(case.consts.norm_a > 8.0 && case.consts.norm_a < 16.0);
        assert!(matches!(MatrixCase::load("gallery:nope"), Err(HarnessError::UnknownGallery(_))));
        let err = MatrixCase::load("/definitely/not/here.mtx").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.mtx"));
    }
}
