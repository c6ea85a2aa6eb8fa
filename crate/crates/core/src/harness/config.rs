use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::solvers::Variable;
use crate::sparse::SparseSpdMatrix;

/// Right-hand side construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsMode {
    /// `b = A e`, so the solution is the all-ones vector.
    Ae,
    /// `b = e`.
    E,
    /// Entries uniform in `[0, 1)`, drawn per run.
    Uniform,
}

impl RhsMode {
    pub fn build(self, a: &SparseSpdMatrix, rng: &mut impl Rng) -> Vec<f64> {
        let n = a.n();
        match self {
            RhsMode::Ae => a.matvec(&vec![1.0; n]).expect("length matches"),
            RhsMode::E => vec![1.0; n],
            RhsMode::Uniform => (0..n).map(|_| rng.gen::<f64>()).collect(),
        }
    }
}

impl std::str::FromStr for RhsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ae" => Ok(RhsMode::Ae),
            "e" => Ok(RhsMode::E),
            "uniform" => Ok(RhsMode::Uniform),
            _ => Err(format!("unknown right-hand side '{s}' (expected ae, e or uniform)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Matrix Market paths or `gallery:NAME` entries.
    pub matrices: Vec<String>,
    pub rhs: RhsMode,
    pub seed: u64,
    pub tol: f64,
    /// A run "converges" when it reaches `tol` within `factor * phi` iterations.
    pub convergence_factor: f64,
    /// Sweep: random-position trials per cell for vector variables.
    pub trials: usize,
    /// Sweep: flip iterations as fractions of `phi`.
    pub fractions: Vec<f64>,
    /// Inclusive bit range.
    pub bits: (u32, u32),
    /// Campaigns: flip iteration drawn uniformly from this fraction range of `phi`.
    pub tau_range: (f64, f64),
    pub tainted_runs: usize,
    pub untainted_runs: usize,
    pub thresholds: Vec<f64>,
    pub aft_runs: usize,
    pub aft_threshold: f64,
    pub adaptations: Vec<f64>,
    /// Variables to cover; `None` means every variable the experiment allows.
    pub variables: Option<Vec<Variable>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            matrices: vec!["gallery:grid9-30".into()],
            rhs: RhsMode::Uniform,
            seed: 2024,
            tol: 1e-10,
            convergence_factor: 1.5,
            trials: 5,
            fractions: vec![0.3, 0.6, 0.9],
            bits: (1, 64),
            tau_range: (0.1, 0.9),
            tainted_runs: 50,
            untainted_runs: 20,
            thresholds: vec![0.5, 1e-4],
            aft_runs: 50,
            aft_threshold: 0.5,
            adaptations: vec![0.5, 0.1],
            variables: None,
        }
    }
}

impl ExperimentConfig {
    /// Full run counts: 20 sweep trials, 800 + 200 detection runs and 500
    /// AFT runs per variable.
    pub fn full_scale(mut self) -> Self {
        self.trials = 20;
        self.tainted_runs = 800;
        self.untainted_runs = 200;
        self.aft_runs = 500;
        self
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.matrices.is_empty() {
            return bad("no matrices given".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("flip fraction {f} is outside (0, 1)"));
        }
        let (lo, hi) = self.bits;
        if !(1 <= lo && lo <= hi && hi <= 64) {
            return bad(format!("bit range {lo}..{hi} is not within 1..64"));
        }
        let (t0, t1) = self.tau_range;
        if !(0.0 < t0 && t0 <= t1 && t1 < 1.0) {
            return bad(format!("flip range {t0}..{t1} is not within (0, 1)"));
        }
        if !(self.tol > 0.0) || !(self.convergence_factor >= 1.0) {
            return bad("tol must be positive and the convergence factor at least 1".into());
        }
        if let Some(t) = self.thresholds.iter().chain([&self.aft_threshold]).find(|t| !(**t > 0.0)) {
            return bad(format!("threshold {t} must be positive"));
        }
        if let Some(a) = self.adaptations.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("adaptation {a} is outside (0, 1)"));
        }
        if matches!(&self.variables, Some(v) if v.is_empty()) {
            return bad("variable list is empty".into());
        }
        Ok(())
    }

    /// Variables to run, dropping any in `exclude`.
    pub fn variables_except(&self, exclude: &[Variable]) -> Vec<Variable> {
        let all = self.variables.clone().unwrap_or_else(|| Variable::ALL.to_vec());
        all.into_iter().filter(|v| !exclude.contains(v)).collect()
    }

    /// Iteration budget that still counts as convergent for reference count `phi`.
    pub fn iteration_limit(&self, phi: usize) -> usize {
        ((self.convergence_factor * phi as f64).floor() as usize).max(1)
    }

    /// Flip iteration for a fraction of `phi`: nearest integer, at least 1.
    pub fn flip_iteration(phi: usize, fraction: f64) -> usize {
        ((fraction * phi as f64).round() as usize).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_scale() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let full = cfg.clone().full_scale();
        assert_eq!((full.trials, full.tainted_runs, full.untainted_runs, full.aft_runs), (20, 800, 200, 500));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let base = ExperimentConfig::default();
        for cfg in [
            ExperimentConfig { trials: 0, ..base.clone() },
            ExperimentConfig { bits: (0, 64), ..base.clone() },
            ExperimentConfig { bits: (30, 20), ..base.clone() },
            ExperimentConfig { fractions: vec![1.0], ..base.clone() },
            ExperimentConfig { adaptations: vec![1.5], ..base.clone() },
            ExperimentConfig { thresholds: vec![-1.0], ..base.clone() },
            ExperimentConfig { matrices: vec![], ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn json_round_trip_with_partial_input() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 5, "rhs": "ae", "bits": [2, 30]}"#).unwrap();
        assert_eq!((cfg.seed, cfg.rhs, cfg.bits), (5, RhsMode::Ae, (2, 30)));
        assert_eq!(cfg.tol, 1e-10);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 5}"#).is_err());
    }

    #[test]
    fn flip_iteration_rounds_to_nearest_and_is_positive() {
        assert_eq!(ExperimentConfig::flip_iteration(10, 0.35), 4);
        assert_eq!(ExperimentConfig::flip_iteration(10, 0.34), 3);
        assert_eq!(ExperimentConfig::flip_iteration(3, 0.1), 1);
        assert_eq!(ExperimentConfig::default().iteration_limit(41), 61);
    }
}
