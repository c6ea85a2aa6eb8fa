use std::process::Command;

fn ftcg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ftcg")).args(args).output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = ftcg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn solve_writes_residual_history() {
    let text = stdout_of(&["solve", "--matrix", "gallery:grid9-12"]);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,rel_residual"));
    let last: f64 = lines.last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last <= 1e-10);
    for method in ["hscg", "ft", "aft"] {
        stdout_of(&["solve", "--matrix", "gallery:grid9-12", "--method", method]);
    }
    stdout_of(&["solve", "--matrix", "gallery:grid9-12", "--precond", "jacobi", "--rhs", "uniform"]);
}

#[test]
fn inject_reports_flip_and_recovery() {
    let args = ["inject", "--matrix", "gallery:grid9-12", "--variable", "nu", "--iteration", "8", "--bit", "4"];
    let text = stdout_of(&args);
    assert!(text.starts_with("matrix,variable,iteration,bit,position,original,flipped,first_alarm,alarms,iterations,converged,outcome\n"));
    assert!(text.lines().nth(1).unwrap().contains(",8,"));
    let ft = stdout_of(&[&args[..], &["--mode", "ft"]].concat());
    let row: Vec<&str> = ft.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[7], "8");
    assert_eq!(row[10], "true");
}

#[test]
fn trace_and_campaigns_write_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let trace = path("trace.csv");
    stdout_of(&["trace", "--matrix", "gallery:grid9-12", "--mode", "aft", "--threshold", "0.5", "--out", &trace]);
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("k,rel_residual,nu_gap,nu_bound"));

    let cfg = path("cfg.json");
    std::fs::write(&cfg, r#"{"matrices": ["gallery:grid9-12"], "tainted_runs": 2, "untainted_runs": 1, "aft_runs": 2, "variables": ["nu", "p"]}"#)
        .unwrap();
    let det = path("det.csv");
    stdout_of(&["campaign-detect", "--config", &cfg, "--threshold", "1e-4", "--out", &det]);
    let det_text = std::fs::read_to_string(&det).unwrap();
    assert_eq!(det_text.lines().count(), 1 + 3);
    let again = path("det2.csv");
    stdout_of(&["campaign-detect", "--config", &cfg, "--threshold", "1e-4", "--out", &again]);
    assert_eq!(det_text, std::fs::read_to_string(&again).unwrap());

    let aft = path("aft.csv");
    stdout_of(&["campaign-aft", "--config", &cfg, "--adapt", "0.5", "--adapt", "0.1", "--out", &aft]);
    assert!(std::fs::read_to_string(&aft).unwrap().starts_with("matrix,a,variable,positive,sn,fn,overflow_excluded,alarms\n"));

    let sweep = stdout_of(&["sweep-bits", "--config", &cfg, "--bits", "60..64", "--trials", "1", "--profile"]);
    assert_eq!(sweep.lines().next(), Some("bit,converged_pct"));
    assert_eq!(sweep.lines().count(), 1 + 5);
}

#[test]
fn bad_input_fails_with_nonzero_exit() {
    for args in [
        &["solve", "--matrix", "/no/such/file.mtx"][..],
        &["solve", "--matrix", "gallery:unknown"],
        &["inject", "--matrix", "gallery:grid9-12", "--variable", "p", "--bit", "65"],
        &["inject", "--matrix", "gallery:grid9-12"],
        &["sweep-bits", "--matrix", "gallery:grid9-12", "--bits", "0..3"],
        &["campaign-detect", "--config", "/no/such/config.json"],
        &["solve", "--tol", "-1"],
    ] {
        let out = ftcg(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn help_lists_every_subcommand() {
    let text = stdout_of(&["--help"]);
    for cmd in ["solve", "inject", "sweep-bits", "campaign-detect", "campaign-aft", "trace"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(stdout_of(&["campaign-detect", "--help"]).contains("--paper-scale"));
}
