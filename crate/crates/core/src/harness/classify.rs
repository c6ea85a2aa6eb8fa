use std::fmt;

use serde::{Deserialize, Serialize};

/// Six-way outcome of a monitored run, plus runs dropped for overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Flip, alarm at the flip iteration or the next, run did not converge.
    Tp,
    /// Flip, timely alarm, but the run converged anyway.
    Sp,
    /// Alarm before the flip, or any alarm in a run without a flip.
    Fp,
    /// No flip, no alarm.
    Tn,
    /// Flip, no timely alarm, run converged.
    Sn,
    /// Flip, no timely alarm, run did not converge.
    Fn,
    /// Non-finite value or breakdown; reported separately.
    Overflow,
}

impl Outcome {
    pub const TALLIED: [Outcome; 6] = [Outcome::Tp, Outcome::Sp, Outcome::Fp, Outcome::Tn, Outcome::Sn, Outcome::Fn];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Tp => "tp",
            Outcome::Sp => "sp",
            Outcome::Fp => "fp",
            Outcome::Tn => "tn",
            Outcome::Sn => "sn",
            Outcome::Fn => "fn",
            Outcome::Overflow => "overflow",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Classify a run. `rho` is the first alarm iteration (`None` = never),
/// `tau` the flip iteration (`None` = no flip) and `converged` whether the
/// run reached the tolerance within the iteration limit.
pub fn classify_run(rho: Option<usize>, tau: Option<usize>, converged: bool) -> Outcome {
    match (tau, rho) {
        (None, Some(_)) => Outcome::Fp,
        (None, None) => Outcome::Tn,
        (Some(t), Some(r)) if r < t => Outcome::Fp,
        (Some(t), Some(r)) if r <= t + 1 => {
            if converged {
                Outcome::Sp
            } else {
                Outcome::Tp
            }
        }
        (Some(_), _) => {
            if converged {
                Outcome::Sn
            } else {
                Outcome::Fn
            }
        }
    }
}

/// Counts per outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub tp: usize,
    pub sp: usize,
    pub fp: usize,
    pub tn: usize,
    pub sn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub overflow: usize,
}

impl Tally {
    pub fn add(&mut self, o: Outcome) {
        *self.slot(o) += 1;
    }

    pub fn get(&self, o: Outcome) -> usize {
        match o {
            Outcome::Tp => self.tp,
            Outcome::Sp => self.sp,
            Outcome::Fp => self.fp,
            Outcome::Tn => self.tn,
            Outcome::Sn => self.sn,
            Outcome::Fn => self.fn_,
            Outcome::Overflow => self.overflow,
        }
    }

    fn slot(&mut self, o: Outcome) -> &mut usize {
        match o {
            Outcome::Tp => &mut self.tp,
            Outcome::Sp => &mut self.sp,
            Outcome::Fp => &mut self.fp,
            Outcome::Tn => &mut self.tn,
            Outcome::Sn => &mut self.sn,
            Outcome::Fn => &mut self.fn_,
            Outcome::Overflow => &mut self.overflow,
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        for o in Outcome::TALLIED.iter().chain([&Outcome::Overflow]) {
            *self.slot(*o) += other.get(*o);
        }
    }

    /// Runs in the six categories (overflow excluded).
    pub fn tallied(&self) -> usize {
        Outcome::TALLIED.iter().map(|o| self.get(*o)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_cases() {
        assert_eq!(classify_run(Some(10), Some(10), false), Outcome::Tp);
        assert_eq!(classify_run(None, None, true), Outcome::Tn);
        assert_eq!(classify_run(Some(13), Some(10), true), Outcome::Sn);
        assert_eq!(classify_run(Some(11), Some(10), true), Outcome::Sp);
        assert_eq!(classify_run(Some(9), Some(10), false), Outcome::Fp);
        assert_eq!(classify_run(None, Some(10), false), Outcome::Fn);
        assert_eq!(classify_run(Some(3), None, true), Outcome::Fp);
    }

    proptest! {
        #[test]
        fn exhaustive_and_never_overflow(rho in prop::option::of(0usize..50), tau in prop::option::of(1usize..50), c in any::<bool>()) {
            let o = classify_run(rho, tau, c);
            prop_assert!(Outcome::TALLIED.contains(&o));
            if tau.is_none() {
                prop_assert!(matches!(o, Outcome::Fp | Outcome::Tn));
            }
        }
    }

    #[test]
    fn tally_counts_and_merges() {
        let mut t = Tally::default();
        for o in [Outcome::Tp, Outcome::Tp, Outcome::Fn, Outcome::Overflow] {
            t.add(o);
        }
        let mut u = Tally::default();
        u.merge(&t);
        u.merge(&t);
        assert_eq!((u.tp, u.fn_, u.overflow, u.tallied()), (4, 2, 2, 6));
    }
}
