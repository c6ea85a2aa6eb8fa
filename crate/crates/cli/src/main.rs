use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ftcg::faults::{FaultInjector, FaultSpec};
use ftcg::ft::{aft_solve, ft_solve, FtConfig};
use ftcg::harness::{
    aft_campaign, detection_campaign, emit_trace, monitored_run, run_rng, sensitivity_sweep, sweep_profile, trace_rows, AftTally,
    DetectionTally, ExperimentConfig, MatrixCase, RhsMode, TraceMode,
};
use ftcg::solvers::{run_hscg, run_to_convergence, Identity, Jacobi, NoHook, Preconditioner, SolveConfig, Variable};

/// Pipelined CG with silent-error detection, fault injection and rollback.
#[derive(Parser)]
#[command(name = "ftcg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one system and write the residual history.
    Solve(SolveArgs),
    /// Flip one bit in one run and report what happened.
    Inject(InjectArgs),
    /// Convergence after a flip, for every variable, bit and flip point.
    SweepBits(CampaignArgs),
    /// Detection-performance campaign at one or more thresholds.
    CampaignDetect(CampaignArgs),
    /// Adaptive-threshold campaign over one or more adaptation factors.
    CampaignAft(CampaignArgs),
    /// Per-iteration gaps, bounds and alarms for one run.
    Trace(TraceArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Matrix Market file or `gallery:NAME` (grid9-30, graded-420, jump3d-9, grid9-12).
    #[arg(long, default_value = "gallery:grid9-30")]
    matrix: String,
    #[arg(long, default_value = "ae")]
    rhs: RhsMode,
    /// Seed for `--rhs uniform`.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SystemArgs {
    fn load(&self) -> Result<(MatrixCase, Vec<f64>, SolveConfig)> {
        let case = MatrixCase::load(&self.matrix)?;
        let b = self.rhs.build(&case.a, &mut run_rng(self.seed, 0, 0, 0, 0));
        let solve = SolveConfig { tol: self.tol, max_iters: self.max_iters };
        solve.validate()?;
        Ok((case, b, solve))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Piped,
    Hscg,
    Ft,
    Aft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precond {
    None,
    Jacobi,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_enum, default_value = "piped")]
    method: Method,
    /// Only for the plain solvers.
    #[arg(long, value_enum, default_value = "none")]
    precond: Precond,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    adapt: f64,
}

#[derive(Args)]
struct FaultArgs {
    /// Variable to corrupt (x, r, w_prime, nu_prime, beta, p, s, u, w, mu, sigma, gamma, nu, alpha).
    #[arg(long)]
    variable: Option<Variable>,
    #[arg(long, default_value_t = 1)]
    iteration: usize,
    /// 1 is the sign bit, 2-12 the exponent, 13-64 the mantissa.
    #[arg(long, default_value_t = 20)]
    bit: u32,
    /// Entry index for vector variables.
    #[arg(long, default_value_t = 0)]
    position: usize,
}

impl FaultArgs {
    fn spec(&self) -> Option<FaultSpec> {
        self.variable.map(|target| FaultSpec { target, iteration: self.iteration, bit: self.bit, position: self.position })
    }
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    fault: FaultArgs,
    #[arg(long, value_enum, default_value = "plain")]
    mode: Mode,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    adapt: f64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    fault: FaultArgs,
    #[arg(long, value_enum, default_value = "plain")]
    mode: Mode,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    adapt: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Plain,
    Ft,
    Aft,
}

impl From<Mode> for TraceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Plain => TraceMode::Plain,
            Mode::Ft => TraceMode::Ft,
            Mode::Aft => TraceMode::Aft,
        }
    }
}

/// Flags override the JSON config, which overrides the defaults.
#[derive(Args)]
struct CampaignArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeat for several matrices.
    #[arg(long)]
    matrix: Vec<String>,
    #[arg(long)]
    rhs: Option<RhsMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Detection thresholds (campaign-detect) or the initial threshold (campaign-aft).
    #[arg(long)]
    threshold: Vec<f64>,
    /// Adaptation factors for campaign-aft.
    #[arg(long)]
    adapt: Vec<f64>,
    /// Inclusive bit range, e.g. 1..64.
    #[arg(long, value_parser = parse_bits)]
    bits: Option<(u32, u32)>,
    /// Sweep trials per cell for vector variables.
    #[arg(long)]
    trials: Option<usize>,
    /// Tainted runs per variable (campaign-aft: runs per variable).
    #[arg(long)]
    runs: Option<usize>,
    /// Full run counts (20 trials, 800 + 200 detection runs, 500 AFT runs).
    #[arg(long = "paper-scale")]
    full_scale: bool,
    /// sweep-bits: write the per-bit convergence percentage instead of cells.
    #[arg(long)]
    profile: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_bits(s: &str) -> Result<(u32, u32), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad bit '{v}': {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

impl CampaignArgs {
    fn config(&self, command: &Command) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig { rhs: sweep_default_rhs(command), ..ExperimentConfig::default() },
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if !self.matrix.is_empty() {
            cfg.matrices = self.matrix.clone();
        }
        if let Some(v) = self.rhs {
            cfg.rhs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.bits {
            cfg.bits = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        match command {
            Command::CampaignAft(_) => {
                match self.threshold.as_slice() {
                    [] => {}
                    [t] => cfg.aft_threshold = *t,
                    _ => bail!("campaign-aft takes a single --threshold"),
                }
                if !self.adapt.is_empty() {
                    cfg.adaptations = self.adapt.clone();
                }
                if let Some(v) = self.runs {
                    cfg.aft_runs = v;
                }
            }
            _ => {
                if !self.threshold.is_empty() {
                    cfg.thresholds = self.threshold.clone();
                }
                if let Some(v) = self.runs {
                    cfg.tainted_runs = v;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The sweep solves for a known all-ones solution; campaigns draw `b`.
fn sweep_default_rhs(command: &Command) -> RhsMode {
    match command {
        Command::SweepBits(_) => RhsMode::Ae,
        _ => RhsMode::Uniform,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct ResidualRow {
    k: usize,
    rel_residual: f64,
}

fn residual_rows(history: &[f64]) -> Vec<ResidualRow> {
    history.iter().enumerate().map(|(k, &r)| ResidualRow { k, rel_residual: r }).collect()
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    matrix: &'a str,
    n: usize,
    iterations: usize,
    converged: bool,
    alarms: usize,
}

fn solve(args: &SolveArgs) -> Result<()> {
    let (case, b, solve) = args.system.load()?;
    let n = case.n();
    let x0 = vec![0.0; n];
    let jacobi;
    let m: &dyn Preconditioner<f64> = match args.precond {
        Precond::None => &Identity,
        Precond::Jacobi => {
            jacobi = Jacobi::new(&case.a);
            &jacobi
        }
    };
    let (history, iterations, converged, alarms) = match args.method {
        Method::Piped => {
            let s = run_to_convergence(&case.a, m, &b, &x0, &solve)?;
            (s.residual_history, s.iterations, s.converged, 0)
        }
        Method::Hscg => {
            let s = run_hscg(&case.a, m, &b, &x0, &solve)?;
            (s.residual_history, s.iterations, s.converged, 0)
        }
        Method::Ft | Method::Aft => {
            if matches!(args.precond, Precond::Jacobi) {
                bail!("the fault-tolerant solvers run unpreconditioned");
            }
            let mut cfg = FtConfig::new(args.threshold, case.consts, solve);
            cfg.adaptation = args.adapt;
            let out = if matches!(args.method, Method::Ft) {
                ft_solve(&case.a, &b, &x0, &cfg, &mut NoHook)?
            } else {
                aft_solve(&case.a, &b, &x0, &cfg, &mut NoHook)?
            };
            (out.residual_history, out.iterations, out.converged, out.alarms.count())
        }
    };
    emit_trace(&residual_rows(&history), output(args.system.out.as_deref())?)?;
    let summary = SolveSummary { matrix: &case.name, n, iterations, converged, alarms };
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct InjectRow {
    matrix: String,
    variable: Variable,
    iteration: usize,
    bit: u32,
    position: usize,
    original: Option<f64>,
    flipped: Option<f64>,
    first_alarm: Option<usize>,
    alarms: usize,
    iterations: usize,
    converged: bool,
    outcome: String,
}

fn inject(args: &InjectArgs) -> Result<()> {
    let Some(spec) = args.fault.spec() else { bail!("inject needs --variable") };
    let (case, b, solve) = args.system.load()?;
    spec.validate(case.n())?;
    let mut injector = FaultInjector::single(spec);
    let x0 = vec![0.0; case.n()];
    let mut row = InjectRow {
        matrix: case.name.clone(),
        variable: spec.target,
        iteration: spec.iteration,
        bit: spec.bit,
        position: spec.position,
        original: None,
        flipped: None,
        first_alarm: None,
        alarms: 0,
        iterations: 0,
        converged: false,
        outcome: String::new(),
    };
    let result = match args.mode {
        Mode::Plain => {
            monitored_run(&case.a, &case.consts, &b, Some(spec), &[args.threshold], &solve, true, false).map(|run| {
                if let Some(log) = run.injection {
                    row.original = Some(log.original_value);
                    row.flipped = Some(log.flipped_value);
                }
                row.first_alarm = run.first_alarm[0];
                row.alarms = run.first_alarm[0].is_some() as usize;
                (run.iterations, run.converged)
            })
        }
        Mode::Ft | Mode::Aft => {
            let mut cfg = FtConfig::new(args.threshold, case.consts, solve);
            cfg.adaptation = args.adapt;
            let out = if matches!(args.mode, Mode::Ft) {
                ft_solve(&case.a, &b, &x0, &cfg, &mut injector)
            } else {
                aft_solve(&case.a, &b, &x0, &cfg, &mut injector)
            };
            out.map(|o| {
                row.first_alarm = o.alarms.entries.first().map(|e| e.iteration);
                row.alarms = o.alarms.count();
                (o.iterations, o.converged)
            })
        }
    };
    if let Some((_, log)) = injector.logs().next().filter(|(_, l)| l.applied) {
        row.original = Some(log.original_value);
        row.flipped = Some(log.flipped_value);
    }
    match result {
        Ok((iterations, converged)) => {
            row.iterations = iterations;
            row.converged = converged;
            row.outcome = if converged { "converged" } else { "not converged" }.into();
        }
        Err(e) if e.is_overflow_like() => row.outcome = format!("overflow: {e}"),
        Err(e) => return Err(e.into()),
    }
    emit_trace(&[row], output(args.system.out.as_deref())?)?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    bit: u32,
    converged_pct: f64,
}

fn run_campaign(command: &Command, args: &CampaignArgs) -> Result<()> {
    let cfg = args.config(command)?;
    let out = output(args.out.as_deref())?;
    match command {
        Command::SweepBits(_) => {
            let cells = sensitivity_sweep(&cfg)?;
            if args.profile {
                let rows: Vec<ProfileRow> =
                    sweep_profile(&cells).into_iter().map(|(bit, converged_pct)| ProfileRow { bit, converged_pct }).collect();
                emit_trace(&rows, out)?;
            } else {
                emit_trace(&cells, out)?;
            }
        }
        Command::CampaignDetect(_) => DetectionTally::write_csv(&detection_campaign(&cfg)?, out)?,
        Command::CampaignAft(_) => AftTally::write_csv(&aft_campaign(&cfg)?, out)?,
        _ => unreachable!("not a campaign command"),
    }
    Ok(())
}

fn trace(args: &TraceArgs) -> Result<()> {
    let (case, b, solve) = args.system.load()?;
    let spec = args.fault.spec();
    if let Some(s) = &spec {
        s.validate(case.n())?;
    }
    let rows = trace_rows(&case, &b, args.mode.into(), spec, args.threshold, args.adapt, &solve)?;
    emit_trace(&rows, output(args.system.out.as_deref())?)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Inject(a) => inject(a),
        Command::Trace(a) => trace(a),
        Command::SweepBits(a) | Command::CampaignDetect(a) | Command::CampaignAft(a) => run_campaign(&cli.command, a),
    }
}
