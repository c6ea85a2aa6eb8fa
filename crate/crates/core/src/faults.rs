//! Transient single-bit upsets in binary64 values.
//!
//! Bits are numbered 1..=64 from the most significant end: bit 1 is the
//! sign, 2..=12 the exponent and 13..=64 the mantissa.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solvers::{SolverState, StepHook, Variable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultError {
    #[error("bit index {0} is outside 1..=64")]
    BitOutOfRange(u32),
    #[error("flip iteration must be at least 1")]
    ZeroIteration,
    #[error("position {position} is outside a vector of length {n}")]
    PositionOutOfRange { position: usize, n: usize },
}

/// Flip bit `bit` (1 = sign, 64 = last mantissa bit) of `v`.
pub fn flip_bit(v: f64, bit: u32) -> Result<f64, FaultError> {
    if !(1..=64).contains(&bit) {
        return Err(FaultError::BitOutOfRange(bit));
    }
    Ok(f64::from_bits(v.to_bits() ^ (1u64 << (64 - bit))))
}

/// One scheduled flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: Variable,
    pub iteration: usize,
    pub bit: u32,
    /// Ignored for scalar targets.
    pub position: usize,
}

impl FaultSpec {
    pub fn validate(&self, n: usize) -> Result<(), FaultError> {
        if !(1..=64).contains(&self.bit) {
            return Err(FaultError::BitOutOfRange(self.bit));
        }
        if self.iteration == 0 {
            return Err(FaultError::ZeroIteration);
        }
        if self.target.is_vector() && self.position >= n {
            return Err(FaultError::PositionOutOfRange { position: self.position, n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InjectionLog {
    pub applied: bool,
    pub original_value: f64,
    pub flipped_value: f64,
}

fn slot<'a>(state: &'a mut SolverState<f64>, spec: &FaultSpec) -> Option<&'a mut f64> {
    let p = spec.position;
    match spec.target {
        Variable::X => state.x.get_mut(p),
        Variable::R => state.r.get_mut(p),
        Variable::WPrime => state.w_prime.get_mut(p),
        Variable::P => state.p.get_mut(p),
        Variable::S => state.s.get_mut(p),
        Variable::U => state.u.get_mut(p),
        Variable::W => state.w.get_mut(p),
        Variable::NuPrime => Some(&mut state.nu_prime),
        Variable::Beta => Some(&mut state.beta),
        Variable::Mu => Some(&mut state.mu),
        Variable::Sigma => Some(&mut state.sigma),
        Variable::Gamma => Some(&mut state.gamma),
        Variable::Nu => Some(&mut state.nu),
        Variable::Alpha => Some(&mut state.alpha),
    }
}

/// Flip the targeted entry of `state` in place. The caller is responsible
/// for timing (the target must already hold its iteration-`k` value).
pub fn inject(state: &mut SolverState<f64>, spec: &FaultSpec) -> Result<InjectionLog, FaultError> {
    let n = state.n();
    spec.validate(n)?;
    let v = slot(state, spec).ok_or(FaultError::PositionOutOfRange { position: spec.position, n })?;
    let original = *v;
    let flipped = flip_bit(original, spec.bit)?;
    *v = flipped;
    Ok(InjectionLog { applied: true, original_value: original, flipped_value: flipped })
}

/// [`StepHook`] that applies each scheduled flip right after its target is
/// computed in its iteration. Every flip fires at most once, so a replay of
/// the same iteration after a rollback runs clean.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    schedule: Vec<(FaultSpec, InjectionLog)>,
}

impl FaultInjector {
    pub fn new(specs: impl IntoIterator<Item = FaultSpec>) -> Self {
        Self { schedule: specs.into_iter().map(|s| (s, InjectionLog::default())).collect() }
    }

    pub fn single(spec: FaultSpec) -> Self {
        Self::new([spec])
    }

    pub fn logs(&self) -> impl Iterator<Item = (&FaultSpec, &InjectionLog)> {
        self.schedule.iter().map(|(s, l)| (s, l))
    }

    pub fn any_applied(&self) -> bool {
        self.schedule.iter().any(|(_, l)| l.applied)
    }
}

impl StepHook<f64> for FaultInjector {
    fn after(&mut self, var: Variable, state: &mut SolverState<f64>) {
        for (spec, log) in &mut self.schedule {
            if !log.applied && spec.target == var && spec.iteration == state.k {
                // Invalid specs are rejected up front by the harness; a bad one
                // here simply never fires.
                if let Ok(l) = inject(state, spec) {
                    *log = l;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::solvers::{initialize_piped, piped_step, Identity, NoHook};
    use proptest::prelude::*;

    #[test]
    fn documented_flips() {
        assert_eq!(flip_bit(1.0, 1).unwrap(), -1.0);
        assert_eq!(flip_bit(1.0, 2).unwrap(), f64::INFINITY);
        assert_eq!(flip_bit(1.0, 64).unwrap(), 1.0 + f64::EPSILON);
        assert_eq!(flip_bit(1.0, 0), Err(FaultError::BitOutOfRange(0)));
        assert_eq!(flip_bit(1.0, 65), Err(FaultError::BitOutOfRange(65)));
    }

    proptest! {
        #[test]
        fn flip_is_a_single_bit_involution(bits in any::<u64>(), bit in 1u32..=64) {
            let v = f64::from_bits(bits);
            let f = flip_bit(v, bit).unwrap();
            prop_assert_eq!((f.to_bits() ^ bits).count_ones(), 1);
            prop_assert_eq!(flip_bit(f, bit).unwrap().to_bits(), bits);
        }
    }

    fn run(a: &crate::sparse::SparseSpdMatrix, b: &[f64], steps: usize, hook: &mut impl StepHook<f64>) -> Vec<SolverState> {
        let mut st = initialize_piped(a, &Identity, b, &vec![0.0; b.len()]).unwrap();
        let mut out = vec![st.clone()];
        for _ in 0..steps {
            st = piped_step(&st, a, &Identity, hook).unwrap();
            out.push(st.clone());
        }
        out
    }

    #[test]
    fn beta_sign_flip_is_logged() {
        let a = gallery::grid9(6);
        let b = a.matvec(&[1.0; 36]).unwrap();
        let spec = FaultSpec { target: Variable::Beta, iteration: 3, bit: 1, position: 0 };
        let mut inj = FaultInjector::single(spec);
        let tainted = run(&a, &b, 3, &mut inj);
        let (_, log) = inj.logs().next().unwrap();
        assert!(log.applied);
        assert_eq!(log.flipped_value, -log.original_value);
        assert_eq!(tainted[3].beta, log.flipped_value);
    }

    #[test]
    fn x_flip_leaves_everything_else_untouched() {
        let a = gallery::grid9(6);
        let b = a.matvec(&[1.0; 36]).unwrap();
        let clean = run(&a, &b, 12, &mut NoHook);
        let spec = FaultSpec { target: Variable::X, iteration: 4, bit: 3, position: 7 };
        let tainted = run(&a, &b, 12, &mut FaultInjector::single(spec));
        for (c, t) in clean.iter().zip(&tainted) {
            assert_eq!(c.r, t.r);
            assert_eq!(c.nu.to_bits(), t.nu.to_bits());
        }
        assert_ne!(clean[4].x[7].to_bits(), tainted[4].x[7].to_bits());
    }

    #[test]
    fn double_flip_restores_fault_free_run() {
        let a = gallery::grid9(6);
        let b = a.matvec(&[1.0; 36]).unwrap();
        let clean = run(&a, &b, 10, &mut NoHook);
        for target in Variable::ALL {
            let spec = FaultSpec { target, iteration: 5, bit: 7, position: 11 };
            let tainted = run(&a, &b, 10, &mut FaultInjector::new([spec, spec]));
            for (c, t) in clean.iter().zip(&tainted) {
                assert!(c.bitwise_eq(t), "{target}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = FaultSpec { target: Variable::R, iteration: 1, bit: 3, position: 10 };
        assert!(matches!(spec.validate(10), Err(FaultError::PositionOutOfRange { .. })));
        assert!(FaultSpec { target: Variable::Mu, ..spec }.validate(10).is_ok());
        assert_eq!(FaultSpec { iteration: 0, ..spec }.validate(100), Err(FaultError::ZeroIteration));
    }

    #[test]
    fn spec_serializes_as_flat_record() {
        let spec = FaultSpec { target: Variable::WPrime, iteration: 9, bit: 20, position: 3 };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"target":"w_prime","iteration":9,"bit":20,"position":3}"#);
        let mut w = csv::Writer::from_writer(vec![]);
        w.serialize(spec).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text, "target,iteration,bit,position\nw_prime,9,20,3\n");
    }
}
