use ftcg::detection::BoundConstants;
use ftcg::faults::{FaultInjector, FaultSpec};
use ftcg::ft::{ft_solve, FtConfig, RecoveryAction};
use ftcg::harness::{monitored_run, run_rng, MatrixCase};
use ftcg::solvers::{NoHook, SolveConfig, Variable};
use rand::Rng;

const SOLVE: SolveConfig = SolveConfig { tol: 1e-10, max_iters: 10_000 };

fn nu_violations(case: &MatrixCase, b: &[f64], spec: FaultSpec) -> Vec<usize> {
    let run = monitored_run(&case.a, &case.consts, b, Some(spec), &[1e-4], &SOLVE, false, true).unwrap();
    run.reports.unwrap().iter().filter(|r| r.nu_gap > r.nu_bound).map(|r| r.k).collect()
}

#[test]
fn gamma_flip_shows_up_in_the_nu_gap_one_iteration_later() {
    let case = MatrixCase::load("gallery:graded-420").unwrap();
    let b = vec![1.0; case.n()];
    let at = |target| FaultSpec { target, iteration: 200, bit: 20, position: 0 };
    assert_eq!(nu_violations(&case, &b, at(Variable::Gamma)), vec![201]);
    assert_eq!(nu_violations(&case, &b, at(Variable::NuPrime)), vec![200]);
    assert_eq!(nu_violations(&case, &b, at(Variable::Nu)), vec![200, 201]);
}

#[test]
fn fault_free_runs_never_exceed_a_bound() {
    for name in ["grid9-12", "graded-420"] {
        let case = MatrixCase::load(&format!("gallery:{name}")).unwrap();
        for t in 0..5 {
            let mut rng = run_rng(11, 0, 0, 0, t);
            let b: Vec<f64> = (0..case.n()).map(|_| rng.gen()).collect();
            let run = monitored_run(&case.a, &case.consts, &b, None, &[], &SOLVE, true, false).unwrap();
            assert!(run.converged);
            assert_eq!(run.bound_violations, 0, "{name} trial {t}");
        }
    }
}

#[test]
fn rollback_replays_the_clean_trajectory() {
    let case = MatrixCase::load("gallery:grid9-12").unwrap();
    let b = case.a.matvec(&vec![1.0; case.n()]).unwrap();
    let consts = BoundConstants::for_matrix(&case.a).unwrap();
    let mut cfg = FtConfig::new(1e-4, consts, SOLVE);
    cfg.record_fingerprints = true;
    let clean = ft_solve(&case.a, &b, &vec![0.0; case.n()], &cfg, &mut NoHook).unwrap();
    let phi = clean.iterations;
    let mut checked = 0;
    for target in [Variable::Nu, Variable::Gamma, Variable::Sigma, Variable::W, Variable::Alpha] {
        for bit in [2, 5, 12] {
            let spec = FaultSpec { target, iteration: phi / 2, bit, position: 7 };
            // Exponent flips that overflow are reported as errors, not recovered.
            let Ok(out) = ft_solve(&case.a, &b, &vec![0.0; case.n()], &cfg, &mut FaultInjector::single(spec)) else { continue };
            let Some(first) = out.alarms.entries.first() else { continue };
            if first.iteration > spec.iteration + 1 {
                continue;
            }
            checked += 1;
            assert_eq!(first.action, RecoveryAction::Rollback);
            assert!(out.converged);
            assert_eq!(out.fingerprints, clean.fingerprints, "{spec:?}");
            assert_eq!(out.iterations, phi + 2, "{spec:?}");
        }
    }
    assert!(checked >= 10, "only {checked} flips were caught promptly");
}

#[test]
fn an_x_flip_is_repaired_without_an_alarm() {
    let case = MatrixCase::load("gallery:grid9-12").unwrap();
    let b = case.a.matvec(&vec![1.0; case.n()]).unwrap();
    let cfg = FtConfig::new(1e-4, case.consts, SOLVE);
    let clean = ft_solve(&case.a, &b, &vec![0.0; case.n()], &cfg, &mut NoHook).unwrap();
    let spec = FaultSpec { target: Variable::X, iteration: 10, bit: 3, position: 40 };
    let out = ft_solve(&case.a, &b, &vec![0.0; case.n()], &cfg, &mut FaultInjector::single(spec)).unwrap();
    assert_eq!(out.alarms.count(), 0);
    assert_eq!(out.x_recomputations, 1);
    assert_eq!(out.x, clean.x);
}
