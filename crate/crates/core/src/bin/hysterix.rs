use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hysterix::scenario::{
    run, BoundsSpec, GridSpec, ObjectiveSpec, Overrides, RunOutput, Scenario, ScenarioKind, SignalSpec,
};
use hysterix::selftest::{ks_identity_suite, stop_property_suite, SuiteReport};
use hysterix::{Error, Result};

#[derive(Parser)]
#[command(name = "hysterix", version, about = "Stop operator evaluation, derivatives and stationarity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Number of grid intervals.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Half-width of the admissible interval [-r, r].
    #[arg(long, global = true)]
    r: Option<f64>,
    /// Initial state.
    #[arg(long, global = true)]
    y0: Option<f64>,
    /// Pass threshold of the main check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for random instances; HYSTERIX_SEED is used when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; CSV goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalKind {
    Zero,
    Constant,
    Sin,
    Triangle,
    RandomWalk,
    RandomSmooth,
}

#[derive(Args)]
struct SignalArgs {
    #[arg(long, value_enum, default_value = "sin")]
    signal: SignalKind,
    /// Amplitude, or the value of a constant signal.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    frequency: f64,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    /// Step bound of a random walk.
    #[arg(long, default_value_t = 0.3)]
    step: f64,
}

#[derive(Args)]
struct ProblemArgs {
    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.5)]
    y_target: f64,
    #[arg(long, default_value_t = 1.0)]
    w_term: f64,
    #[arg(long, default_value_t = 0.0)]
    w_track: f64,
    #[arg(long, default_value_t = 1e-3)]
    nu: f64,
    /// Tracks this sine amplitude when `--w-track` is positive.
    #[arg(long)]
    track_sin: Option<f64>,
    #[arg(long, requires = "upper")]
    lower: Option<f64>,
    #[arg(long, requires = "lower")]
    upper: Option<f64>,
    /// Random certification directions on top of the structured family.
    #[arg(long, default_value_t = 64)]
    directions: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluates the stop operator on a signal.
    #[command(allow_negative_numbers = true)]
    StopEval {
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long = "T", default_value_t = std::f64::consts::FRAC_PI_2)]
        horizon: f64,
    },
    /// Directional derivative with a finite-difference comparison.
    #[command(allow_negative_numbers = true)]
    Derivative {
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value = "constant")]
        direction: SignalKind,
        #[arg(long, default_value_t = 1.0)]
        dir_amplitude: f64,
        #[arg(long, default_value_t = 1.0)]
        dir_frequency: f64,
        #[arg(long, default_value_t = 1e-6)]
        alpha: f64,
    },
    /// Bouligand residual and strong stationarity of a control (solved for when absent).
    #[command(allow_negative_numbers = true)]
    CheckStationarity {
        #[command(flatten)]
        problem: ProblemArgs,
        /// CSV file with a `u` column, one row per grid node.
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Solves the control problem and certifies the result.
    #[command(allow_negative_numbers = true)]
    Optimize {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Initial guess as CSV with a `u` column.
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// Tabulates the bump sequence that converges weakly-* without output convergence.
    #[command(allow_negative_numbers = true)]
    DemoCounterexample {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        ns: Vec<usize>,
    },
    /// Randomized identity suites for the integral and the stop operator.
    #[command(allow_negative_numbers = true)]
    Selftest {
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
    /// Runs a JSON scenario.
    #[command(allow_negative_numbers = true)]
    Run { scenario: PathBuf },
}

fn signal(kind: SignalKind, amplitude: f64, frequency: f64, period: f64, step: f64) -> SignalSpec {
    match kind {
        SignalKind::Zero => SignalSpec::Zero,
        SignalKind::Constant => SignalSpec::Constant { value: amplitude },
        SignalKind::Sin => SignalSpec::Sin { amplitude, frequency, phase: 0.0, offset: 0.0 },
        SignalKind::Triangle => SignalSpec::Triangle { amplitude, period },
        SignalKind::RandomWalk => SignalSpec::RandomWalk { start: 0.0, step },
        SignalKind::RandomSmooth => SignalSpec::RandomSmooth { amplitude },
    }
}

/// Reads `u` and, when present, `t` columns; repeated times keep their first row.
fn read_control(path: &Path) -> Result<SignalSpec> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let u_col = find("u").ok_or_else(|| Error::Scenario(format!("{}: no `u` column", path.display())))?;
    let t_col = find("t");
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |c: usize| -> Result<f64> {
            rec.get(c)
                .unwrap_or_default()
                .parse::<f64>()
                .map_err(|e| Error::Scenario(format!("{}: line {line}: {e}", path.display())))
        };
        let u = cell(u_col)?;
        if let Some(tc) = t_col {
            let t = cell(tc)?;
            if times.last() == Some(&t) {
                continue;
            }
            times.push(t);
        }
        values.push(u);
    }
    Ok(if t_col.is_some() { SignalSpec::Samples { times, values } } else { SignalSpec::Values { values } })
}

fn problem_scenario(kind: ScenarioKind, p: &ProblemArgs, control: Option<SignalSpec>) -> Scenario {
    let mut sc = Scenario::new(kind);
    sc.grid = Some(GridSpec::uniform(p.horizon, 100));
    sc.objective = Some(ObjectiveSpec {
        y_target: p.y_target,
        w_track: p.w_track,
        w_term: p.w_term,
        nu: p.nu,
        tracking: p.track_sin.map(|a| SignalSpec::Sin { amplitude: a, frequency: 1.0, phase: 0.0, offset: 0.0 }),
    });
    sc.bounds = p.lower.zip(p.upper).map(|(lower, upper)| BoundsSpec { lower, upper });
    sc.directions = Some(p.directions);
    sc.control = control;
    sc.seed = Some(0);
    sc
}

fn build(command: &Command) -> Result<Option<Scenario>> {
    Ok(Some(match command {
        Command::StopEval { signal: s, horizon } => {
            let mut sc = Scenario::new(ScenarioKind::Stop);
            sc.grid = Some(GridSpec::uniform(*horizon, 100));
            sc.signal = Some(signal(s.signal, s.amplitude, s.frequency, s.period, s.step));
            sc.seed = Some(0);
            sc
        }
        Command::Derivative { signal: s, horizon, direction, dir_amplitude, dir_frequency, alpha } => {
            let mut sc = Scenario::new(ScenarioKind::Derivative);
            sc.grid = Some(GridSpec::uniform(*horizon, 200));
            sc.signal = Some(signal(s.signal, s.amplitude, s.frequency, s.period, s.step));
            sc.direction = Some(signal(*direction, *dir_amplitude, *dir_frequency, s.period, s.step));
            sc.alpha = Some(*alpha);
            sc.seed = Some(0);
            sc
        }
        Command::CheckStationarity { problem, control } => {
            let control = control.as_deref().map(read_control).transpose()?;
            problem_scenario(ScenarioKind::Stationarity, problem, control)
        }
        Command::Optimize { problem, initial } => {
            let initial = initial.as_deref().map(read_control).transpose()?;
            problem_scenario(ScenarioKind::Optimize, problem, initial)
        }
        Command::DemoCounterexample { ns } => {
            let mut sc = Scenario::new(ScenarioKind::Counterexample);
            sc.ns = Some(ns.clone());
            sc
        }
        Command::Selftest { .. } => return Ok(None),
        Command::Run { scenario } => Scenario::load(scenario)?,
    }))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("HYSTERIX_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Error::Scenario(format!("HYSTERIX_SEED={v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn print_suite(rep: &SuiteReport) {
    for c in &rep.checks {
        println!(
            "{} {:<44} max error {:.3e} tol {:e} ({} instances)",
            if c.pass { "PASS" } else { "FAIL" },
            format!("{}/{}", rep.suite, c.name),
            c.max_error,
            c.tol,
            c.instances
        );
    }
}

fn emit(out: &RunOutput, dir: Option<&Path>) -> Result<()> {
    match dir {
        Some(d) => {
            out.write_to(d)?;
            for line in &out.summary {
                println!("{line}");
            }
            println!("wrote {} files to {}", out.files.len(), d.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&out.files[out.primary].contents)?;
            for line in &out.summary {
                writeln!(stdout, "# {line}")?;
            }
        }
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<i32> {
    let seed = cli.common.seed.or(env_seed()?);
    if let Command::Selftest { instances } = cli.command {
        let seed = seed.unwrap_or(0);
        let ks = ks_identity_suite(instances, seed, 12)?;
        let st = stop_property_suite(instances, seed)?;
        print_suite(&ks);
        print_suite(&st);
        let pass = ks.pass() && st.pass();
        println!("selftest {} (seed {seed})", if pass { "passed" } else { "FAILED" });
        return Ok(if pass { 0 } else { 2 });
    }
    if matches!(cli.command, Command::Run { .. }) && cli.common.out.is_none() {
        return Err(Error::Scenario("run needs --out <dir>".into()));
    }
    let mut sc = build(&cli.command)?.expect("scenario commands");
    let c = &cli.common;
    sc.apply(&Overrides { grid_n: c.grid_n, r: c.r, y0: c.y0, tol: c.tol, seed })?;
    let out = run(&sc)?;
    emit(&out, c.out.as_deref())?;
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
