//! JSON scenarios and their deterministic file outputs.
//!
//! A scenario is one flat JSON object. `kind` selects the computation, the
//! other keys supply its data:
//!
//! | kind             | required                                   | optional                                             |
//! |------------------|--------------------------------------------|------------------------------------------------------|
//! | `stop`           | `grid`, `signal`                           | `config`, `tol`                                      |
//! | `derivative`     | `grid`, `signal`, `direction`              | `config`, `alpha`, `tol`                             |
//! | `stationarity`   | `grid`, `objective`, `seed`                | `config`, `bounds`, `control`, `directions`, `tol`, `solver` |
//! | `optimize`       | `grid`, `objective`, `seed`                | `config`, `bounds`, `control`, `directions`, `tol`, `solver` |
//! | `counterexample` |                                            | `ns`, `tol`                                          |
//! | `ks-selftest`    | `seed`                                     | `instances`, `depth`                                 |
//!
//! Any signal of type `random_walk` or `random_smooth` also requires `seed`.
//! The JSON schema ships as `docs/scenario.schema.json`.
//!
//! Every run produces `result.json`, one or more CSV files and
//! `metadata.json`, which lists the columns and units of each CSV. Outputs
//! contain no timings, so equal inputs give byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::counterexample::counterexample_demo;
use crate::control::solver::{solve, SolverOptions};
use crate::control::{objective_eval, Admissible, ControlProblem, Objective};
use crate::error::{Error, Result};
use crate::grid::{GridRegulated, HysteresisConfig, PLFunction, TimeGrid, TOL_EQ};
use crate::hysteresis::{stop, tol_act, vi_residual};
use crate::instances::{random_smooth, random_walk, rng};
use crate::selftest::ks_identity_suite;
use crate::sensitivity::{compare_with_fd, dirdiff_vi};
use crate::stationarity::{
    bouligand_residual, build_adjoint, check_strong_stationarity, direction_family, tangent_directions,
    StationaritySamples,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Stop,
    Derivative,
    Stationarity,
    Optimize,
    Counterexample,
    KsSelftest,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Stop => "stop",
            ScenarioKind::Derivative => "derivative",
            ScenarioKind::Stationarity => "stationarity",
            ScenarioKind::Optimize => "optimize",
            ScenarioKind::Counterexample => "counterexample",
            ScenarioKind::KsSelftest => "ks-selftest",
        }
    }
}

/// Uniform grid from `horizon` and `n`, or explicit `nodes`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn uniform(horizon: f64, n: usize) -> Self {
        GridSpec { horizon: Some(horizon), n: Some(n), nodes: None }
    }

    pub fn build(&self) -> Result<TimeGrid> {
        match (&self.nodes, self.horizon, self.n) {
            (Some(nodes), None, None) => TimeGrid::new(nodes.clone()),
            (None, Some(horizon), Some(n)) => TimeGrid::uniform(horizon, n),
            _ => Err(Error::Scenario("grid needs either `nodes` or both `horizon` and `n`".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub r: f64,
    pub y0: f64,
}

impl Default for ConfigSpec {
    fn default() -> Self {
        ConfigSpec { r: 1.0, y0: 0.0 }
    }
}

fn one() -> f64 {
    1.0
}

/// Input signals sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude sin(frequency t + phase) + offset`.
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Zero-mean triangle wave starting at 0 and rising.
    Triangle {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        period: f64,
    },
    /// One value per grid node.
    Values {
        values: Vec<f64>,
    },
    /// Piecewise linear interpolant of `(times, values)`, on its own nodes.
    Samples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    RandomWalk {
        #[serde(default)]
        start: f64,
        step: f64,
    },
    RandomSmooth {
        #[serde(default = "one")]
        amplitude: f64,
    },
}

impl SignalSpec {
    pub fn is_random(&self) -> bool {
        matches!(self, SignalSpec::RandomWalk { .. } | SignalSpec::RandomSmooth { .. })
    }

    /// Samples the signal; `stream` separates the random streams of different roles.
    pub fn sample(&self, grid: &TimeGrid, seed: Option<u64>, stream: u64) -> Result<PLFunction> {
        let seeded = || {
            seed.map(|s| rng(s.wrapping_mul(0x9e37_79b9).wrapping_add(stream)))
                .ok_or_else(|| Error::Scenario("random signals need a `seed`".into()))
        };
        Ok(match self {
            SignalSpec::Zero => PLFunction::zero(grid),
            SignalSpec::Constant { value } => PLFunction::constant(grid, *value),
            SignalSpec::Sin { amplitude, frequency, phase, offset } => {
                PLFunction::from_fn(grid, |t| amplitude * (frequency * t + phase).sin() + offset)
            }
            SignalSpec::Triangle { amplitude, period } => {
                if !(*period > 0.0) {
                    return Err(Error::Scenario("triangle period must be positive".into()));
                }
                let (a, p) = (*amplitude, *period);
                let tri = |t: f64| {
                    let x = (t / p + 0.25).rem_euclid(1.0);
                    a * (1.0 - 4.0 * (x - 0.5).abs())
                };
                // add the corners so the wave is exact
                let corners: Vec<f64> =
                    (0..).map(|k| p * (0.25 + 0.5 * k as f64)).take_while(|&t| t < grid.horizon()).collect();
                PLFunction::from_fn(&grid.with_points(&corners), tri)
            }
            SignalSpec::Values { values } => PLFunction::new(grid.clone(), values.clone())?,
            SignalSpec::Samples { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::LengthMismatch { expected: times.len(), got: values.len() });
                }
                PLFunction::new(TimeGrid::new(times.clone())?, values.clone())?
            }
            SignalSpec::RandomWalk { start, step } => random_walk(&mut seeded()?, grid, *start, *step),
            SignalSpec::RandomSmooth { amplitude } => random_smooth(&mut seeded()?, grid, *amplitude),
        })
    }
}

/// Objective weights and targets; `tracking` defaults to the zero trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(default)]
    pub y_target: f64,
    #[serde(default)]
    pub w_track: f64,
    #[serde(default = "one")]
    pub w_term: f64,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<SignalSpec>,
}

/// Constant box bounds on the control.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub lower: f64,
    pub upper: f64,
}

/// Overrides of [`SolverOptions`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descent_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<SignalSpec>,
    /// FD step of `derivative`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Pass threshold of the kind's main check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    /// Control to certify (`stationarity`) or initial guess (`optimize`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<SignalSpec>,
    /// Random directions added to the structured certification family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
}

/// Command-line values that replace scenario values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub r: Option<f64>,
    pub y0: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Scenario {
            kind,
            seed: None,
            grid: None,
            config: None,
            signal: None,
            direction: None,
            alpha: None,
            tol: None,
            objective: None,
            bounds: None,
            control: None,
            directions: None,
            solver: None,
            ns: None,
            instances: None,
            depth: None,
        }
    }

    /// Parses and validates; messages carry the line of the offending input.
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Scenario(format!("line {}: {e}", e.line())))?;
        sc.validate().map_err(|e| {
            let line = text.lines().position(|l| l.contains("\"kind\"")).map_or(1, |i| i + 1);
            Error::Scenario(format!("line {line}: {}", e.message()))
        })?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text).map_err(|e| Error::Scenario(format!("{}: {}", path.display(), e.message())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(n) = o.grid_n {
            let grid = self.grid.get_or_insert_with(GridSpec::default);
            if grid.nodes.is_some() {
                return Err(Error::Scenario("--grid-n conflicts with explicit grid nodes".into()));
            }
            grid.n = Some(n);
        }
        if o.r.is_some() || o.y0.is_some() {
            let cfg = self.config.get_or_insert_with(ConfigSpec::default);
            cfg.r = o.r.unwrap_or(cfg.r);
            cfg.y0 = o.y0.unwrap_or(cfg.y0);
        }
        self.tol = o.tol.or(self.tol);
        self.seed = o.seed.or(self.seed);
        self.validate()
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, ScenarioKind::Stationarity | ScenarioKind::Optimize | ScenarioKind::KsSelftest)
            || [&self.signal, &self.direction, &self.control]
                .into_iter()
                .flatten()
                .any(SignalSpec::is_random)
            || self.objective.as_ref().and_then(|o| o.tracking.as_ref()).is_some_and(SignalSpec::is_random)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind.name();
        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Scenario(format!("kind `{kind}` requires field `{field}`")))
            }
        };
        match self.kind {
            ScenarioKind::Stop => {
                need(self.grid.is_some(), "grid")?;
                need(self.signal.is_some(), "signal")?;
            }
            ScenarioKind::Derivative => {
                need(self.grid.is_some(), "grid")?;
                need(self.signal.is_some(), "signal")?;
                need(self.direction.is_some(), "direction")?;
            }
            ScenarioKind::Stationarity | ScenarioKind::Optimize => {
                need(self.grid.is_some(), "grid")?;
                need(self.objective.is_some(), "objective")?;
            }
            ScenarioKind::Counterexample | ScenarioKind::KsSelftest => {}
        }
        if self.is_randomized() {
            need(self.seed.is_some(), "seed")?;
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha <= 1e-6) {
                return Err(Error::Scenario(format!("alpha must lie in (0, 1e-6], got {alpha}")));
            }
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::Scenario(format!("tol must be positive, got {tol}")));
            }
        }
        if self.ns.as_ref().is_some_and(|ns| ns.is_empty() || ns.contains(&0)) {
            return Err(Error::Scenario("ns must be a nonempty list of positive integers".into()));
        }
        if self.depth == Some(0) {
            return Err(Error::Scenario("depth must be at least 1".into()));
        }
        Ok(())
    }

    fn cfg(&self) -> Result<HysteresisConfig> {
        let c = self.config.unwrap_or_default();
        HysteresisConfig::new(c.r, c.y0)
    }

    fn grid(&self) -> Result<TimeGrid> {
        self.grid.as_ref().ok_or_else(|| Error::Scenario("missing grid".into()))?.build()
    }

    fn problem(&self) -> Result<ControlProblem> {
        let grid = self.grid()?;
        let spec = self.objective.as_ref().ok_or_else(|| Error::Scenario("missing objective".into()))?;
        let y_d = match &spec.tracking {
            Some(s) => s.sample(&grid, self.seed, 3)?.sample_onto(&grid)?,
            None => PLFunction::zero(&grid),
        };
        let objective =
            Objective { y_d, y_target: spec.y_target, w_track: spec.w_track, w_term: spec.w_term, nu: spec.nu };
        let admissible = match self.bounds {
            None => Admissible::Unconstrained,
            Some(b) => Admissible::Box {
                lower: PLFunction::constant(&grid, b.lower),
                upper: PLFunction::constant(&grid, b.upper),
            },
        };
        ControlProblem::new(self.cfg()?, grid, objective, admissible)
    }

    fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions { seed: self.seed.unwrap_or(0), ..SolverOptions::default() };
        if let Some(n) = self.directions {
            o.certify_random = n;
        }
        o.stationarity_tol = Some(self.tol.unwrap_or(1e-6));
        if let Some(s) = &self.solver {
            if let Some(v) = &s.sigmas {
                o.sigmas = v.clone();
            }
            o.max_iter = s.max_iter.unwrap_or(o.max_iter);
            o.exact_iter = s.exact_iter.unwrap_or(o.exact_iter);
            o.polish_iter = s.polish_iter.unwrap_or(o.polish_iter);
            o.descent_iter = s.descent_iter.unwrap_or(o.descent_iter);
            o.memory = s.memory.unwrap_or(o.memory);
        }
        o
    }
}

impl Error {
    fn message(&self) -> String {
        match self {
            Error::Scenario(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

/// Column of a CSV file with its unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub unit: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub file: String,
    pub description: String,
    pub columns: Vec<ColumnMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ScenarioKind,
    pub seed: Option<u64>,
    pub pass: bool,
    pub files: Vec<FileMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

/// Files and verdict of one scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub pass: bool,
    pub summary: Vec<String>,
    pub files: Vec<OutputFile>,
    /// Index of the main CSV in `files`.
    pub primary: usize,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            2
        }
    }

    pub fn file(&self, name: &str) -> Option<&OutputFile> {
        self.files.iter().find(|f| f.name == name)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for f in &self.files {
            std::fs::write(dir.join(&f.name), &f.contents)?;
        }
        Ok(())
    }
}

fn col(name: &str, unit: &str, description: &str) -> ColumnMeta {
    ColumnMeta { name: name.into(), unit: unit.into(), description: description.into() }
}

fn series_meta() -> FileMeta {
    FileMeta {
        file: "series.csv".into(),
        description: "time series on the solution grid; a node where a column jumps gets a row with left limits \
                      followed by a row with values; empty cells mean the column does not apply"
            .into(),
        columns: vec![
            col("t", "s", "time"),
            col("y", "signal", "stop output S(u)"),
            col("u", "signal", "input"),
            col("eta", "signal per unit direction", "right-continuous directional derivative S'(u; h)"),
            col("p", "objective per signal", "adjoint state"),
        ],
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `t,y,u,eta,p` rows on the union of the grids of the present columns.
fn series_csv(
    y: Option<&PLFunction>,
    u: Option<&PLFunction>,
    eta: Option<&GridRegulated>,
    p: Option<&GridRegulated>,
) -> Result<Vec<u8>> {
    let cols: Vec<Option<GridRegulated>> = vec![
        y.map(GridRegulated::from_pl),
        u.map(GridRegulated::from_pl),
        eta.cloned(),
        p.cloned(),
    ];
    let mut grid: Option<TimeGrid> = None;
    for c in cols.iter().flatten() {
        grid = Some(match grid {
            None => c.grid().clone(),
            Some(g) => g.merge(c.grid())?,
        });
    }
    let grid = grid.ok_or_else(|| Error::Domain("series needs at least one column".into()))?;
    let cols: Vec<Option<GridRegulated>> =
        cols.into_iter().map(|c| c.map(|c| c.resample(&grid)).transpose()).collect::<Result<_>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "y", "u", "eta", "p"])?;
    for (k, &t) in grid.nodes().iter().enumerate() {
        let jumps = cols.iter().flatten().any(|c| (c.left()[k] - c.value()[k]).abs() > TOL_EQ);
        let mut row = |pick: fn(&GridRegulated, usize) -> f64| -> Result<()> {
            let mut rec = vec![fmt(t)];
            rec.extend(cols.iter().map(|c| c.as_ref().map_or(String::new(), |c| fmt(pick(c, k)))));
            w.write_record(&rec)?;
            Ok(())
        };
        if jumps {
            row(|c, k| c.left()[k])?;
        }
        row(|c, k| c.value()[k])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
struct ResultFile<'a, T: Serialize> {
    kind: ScenarioKind,
    seed: Option<u64>,
    pass: bool,
    scenario: &'a Scenario,
    report: T,
}

fn finish<T: Serialize>(
    sc: &Scenario,
    pass: bool,
    report: T,
    summary: Vec<String>,
    tables: Vec<(FileMeta, Vec<u8>)>,
) -> Result<RunOutput> {
    let mut files = vec![OutputFile {
        name: "result.json".into(),
        contents: json_bytes(&ResultFile { kind: sc.kind, seed: sc.seed, pass, scenario: sc, report })?,
    }];
    let mut metas = Vec::new();
    for (meta, contents) in tables {
        files.push(OutputFile { name: meta.file.clone(), contents });
        metas.push(meta);
    }
    let meta = Metadata { kind: sc.kind, seed: sc.seed, pass, files: metas };
    files.push(OutputFile { name: "metadata.json".into(), contents: json_bytes(&meta)? });
    Ok(RunOutput { pass, summary, files, primary: 1 })
}

#[derive(Serialize)]
struct StopReport {
    r: f64,
    y0: f64,
    nodes: usize,
    y_min: f64,
    y_max: f64,
    vi_residual: f64,
    vi_tests: usize,
}

fn run_stop(sc: &Scenario) -> Result<RunOutput> {
    let cfg = sc.cfg()?;
    let grid = sc.grid()?;
    let u = sc.signal.as_ref().expect("validated").sample(&grid, sc.seed, 0)?;
    let sol = stop(&u, &cfg)?;
    let g = sol.grid();
    // +-r, 0, and +-r steps at up to 64 nodes
    let stride = (g.len() / 64).max(1);
    let mut tests: Vec<GridRegulated> = [-cfg.r, 0.0, cfg.r].iter().map(|&c| GridRegulated::constant(g, c)).collect();
    for k in (1..g.len()).step_by(stride) {
        let step = GridRegulated::step_from(g, k);
        tests.push(step.scale(cfg.r));
        tests.push(step.scale(-cfg.r));
    }
    let vi = vi_residual(&sol, &tests, 0.0, g.horizon())?;
    let (y_min, y_max) = sol.y.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let tol = sc.tol.unwrap_or(1e-10);
    let pass = vi >= -tol && y_max <= cfg.r + tol_act(cfg.r) && y_min >= -cfg.r - tol_act(cfg.r);
    let report =
        StopReport { r: cfg.r, y0: cfg.y0, nodes: g.len(), y_min, y_max, vi_residual: vi, vi_tests: tests.len() };
    let summary = vec![
        format!("stop: {} nodes, y in [{y_min}, {y_max}], r = {}", g.len(), cfg.r),
        format!("vi residual {vi:.3e} over {} test functions (tol {tol:e})", tests.len()),
    ];
    finish(sc, pass, report, summary, vec![(series_meta(), series_csv(Some(&sol.y), Some(&sol.u), None, None)?)])
}

#[derive(Serialize)]
struct DerivativeReport {
    alpha: f64,
    fd_max_deviation: f64,
    fd_worst_time: f64,
    fd_checked: usize,
    fd_skipped: usize,
    jump_nodes: usize,
    jump_law_max: f64,
    var_eta: f64,
    var_h: f64,
    unstable_nodes: usize,
}

fn run_derivative(sc: &Scenario) -> Result<RunOutput> {
    let cfg = sc.cfg()?;
    let grid = sc.grid()?;
    let u = sc.signal.as_ref().expect("validated").sample(&grid, sc.seed, 0)?;
    let h = sc.direction.as_ref().expect("validated").sample(&grid, sc.seed, 1)?;
    let alpha = sc.alpha.unwrap_or(1e-6);
    let res = dirdiff_vi(&u, &h, &cfg)?;
    let fd = compare_with_fd(&res, &u, &cfg, alpha)?;
    let jumps = res.jump_nodes();
    let jump_law_max = jumps.iter().fold(0.0f64, |m, &k| m.max(res.eta.value()[k].abs()));
    let (var_eta, var_h) = (res.eta.total_variation(), res.h.total_variation());
    let tol = sc.tol.unwrap_or(5e-4);
    let pass = fd.max_deviation <= tol && jump_law_max <= TOL_EQ && var_eta <= 2.0 * var_h + 1e-9;
    let report = DerivativeReport {
        alpha,
        fd_max_deviation: fd.max_deviation,
        fd_worst_time: fd.worst_time,
        fd_checked: fd.checked,
        fd_skipped: fd.skipped,
        jump_nodes: jumps.len(),
        jump_law_max,
        var_eta,
        var_h,
        unstable_nodes: res.regimes.unstable_nodes().len(),
    };
    let summary = vec![
        format!(
            "fd vs vi max deviation {:.3e} at t = {} over {} stable nodes ({} skipped), alpha = {alpha:e}, tol {tol:e}",
            fd.max_deviation, fd.worst_time, fd.checked, fd.skipped
        ),
        format!("{} jumps, max |eta(t)| at jumps {jump_law_max:.3e}, var eta {var_eta:.6} <= 2 var h {:.6}", jumps.len(), 2.0 * var_h),
    ];
    let series = series_csv(Some(&res.sol.y), Some(&res.sol.u), Some(&res.eta), None)?;
    finish(sc, pass, report, summary, vec![(series_meta(), series)])
}

#[derive(Serialize)]
struct CertifyReport {
    j: f64,
    bouligand: crate::stationarity::BouligandReport,
    stationarity: Option<crate::stationarity::StationarityReport>,
    solved: bool,
    stage_increases: Vec<String>,
    iterations: usize,
}

fn trace_meta() -> FileMeta {
    FileMeta {
        file: "trace.csv".into(),
        description: "exact objective after each accepted solver step".into(),
        columns: vec![
            col("step", "1", "accepted step index"),
            col("stage", "label", "solver stage"),
            col("j", "objective", "exact objective value"),
        ],
    }
}

fn run_certify(sc: &Scenario) -> Result<RunOutput> {
    let problem = sc.problem()?;
    let opts = sc.solver_options();
    let tol = opts.stationarity_tol.expect("set");
    let initial = sc.control.as_ref().map(|c| c.sample(&problem.grid, sc.seed, 2)).transpose()?;
    let solve_first = sc.kind == ScenarioKind::Optimize || initial.is_none();

    let solved = if solve_first {
        Some(solve(&problem, initial.as_ref(), &SolverOptions { stationarity_tol: None, ..opts.clone() })?)
    } else {
        None
    };
    let u = match (&solved, initial) {
        (Some(res), _) => res.u.clone(),
        (None, Some(u)) => u.sample_onto(&problem.grid)?,
        (None, None) => unreachable!("solve_first covers a missing control"),
    };
    let eval = objective_eval(&problem, &u)?;
    let dirs = tangent_directions(&problem, &u, &direction_family(&problem.grid, opts.certify_random, opts.seed))?;
    let bouligand = bouligand_residual(&eval, &dirs)?;
    let (adj, mu) = build_adjoint(&eval)?;
    let stationarity = if problem.bounds()?.is_none() {
        let samples = StationaritySamples::standard(&eval, &dirs, 16, opts.seed)?;
        Some(check_strong_stationarity(&eval, &adj, &mu, &samples, tol)?)
    } else {
        None
    };
    let pass = bouligand.min_residual >= -tol && stationarity.as_ref().is_none_or(|s| s.pass);

    let mut summary = vec![
        format!("J = {:.10e}", eval.j),
        format!("bouligand residual {:.3e} over {} directions (tol {tol:e})", bouligand.min_residual, bouligand.count),
    ];
    if let Some(s) = &stationarity {
        for line in &s.lines {
            summary.push(format!(
                "{}: residual {:.3e} {}",
                line.name,
                line.residual,
                if line.pass { "ok" } else { "FAIL" }
            ));
        }
        summary.push(format!("strong stationarity {}", if s.pass { "holds" } else { "fails" }));
    } else {
        summary.push("strong stationarity not checked for box-constrained controls".into());
    }
    let series = series_csv(Some(&eval.sol.y), Some(&eval.sol.u), None, Some(&adj.p))?;
    let mut tables = vec![(series_meta(), series)];
    if let Some(res) = &solved {
        let rows = res.trace.iter().enumerate().map(|(i, e)| vec![i.to_string(), e.stage.clone(), fmt(e.j)]);
        tables.push((trace_meta(), table_csv(&["step", "stage", "j"], rows)?));
    }
    let report = CertifyReport {
        j: eval.j,
        bouligand,
        stationarity,
        solved: solved.is_some(),
        stage_increases: solved.as_ref().map_or_else(Vec::new, |r| r.stage_increases.clone()),
        iterations: solved.as_ref().map_or(0, |r| r.trace.len()),
    };
    finish(sc, pass, report, summary, tables)
}

fn run_counterexample(sc: &Scenario) -> Result<RunOutput> {
    let ns = sc.ns.clone().unwrap_or_else(|| vec![1, 2, 4, 8, 16, 32, 64]);
    let rep = counterexample_demo(&ns)?;
    let tol = sc.tol.unwrap_or(1e-9);
    let pass = rep.limit_terminal == 1.0
        && rep.rows.iter().all(|r| {
            (r.u_bv - 4.0).abs() <= tol && (r.y_bv - 3.0).abs() <= tol && (r.n < 16 || r.tail_deviation <= tol)
        });
    let mut summary = vec![format!("r = {}, y0 = {}, S(0)(T) = {}", rep.r, rep.y0, rep.limit_terminal)];
    summary.extend(rep.rows.iter().map(|r| {
        format!(
            "n = {:>3}: |u|_BV = {:.12}, |u|_L1 = {:.6e}, |S(u)|_BV = {:.12}, S(u)(T) = {}",
            r.n, r.u_bv, r.u_l1, r.y_bv, r.y_terminal
        )
    }));
    let rows = rep.rows.iter().map(|r| {
        vec![r.n.to_string(), fmt(r.u_bv), fmt(r.u_l1), fmt(r.y_bv), fmt(r.y_terminal), fmt(r.tail_deviation)]
    });
    let table = table_csv(&["n", "u_bv", "u_l1", "y_bv", "y_terminal", "tail_deviation"], rows)?;
    let meta = FileMeta {
        file: "counterexample.csv".into(),
        description: "norms of the bump controls u_n and their stop outputs on [0, 2] with r = y0 = 1".into(),
        columns: vec![
            col("n", "1", "bump compression factor"),
            col("u_bv", "signal", "|u_n(0)| + var(u_n)"),
            col("u_l1", "signal s", "integral of |u_n|"),
            col("y_bv", "signal", "|y_n(0)| + var(y_n)"),
            col("y_terminal", "signal", "y_n(T)"),
            col("tail_deviation", "signal", "max of |y_n + 1| after the bump"),
        ],
    };
    finish(sc, pass, rep, summary, vec![(meta, table)])
}

fn run_ks_selftest(sc: &Scenario) -> Result<RunOutput> {
    let seed = sc.seed.expect("validated");
    let rep = ks_identity_suite(sc.instances.unwrap_or(500), seed, sc.depth.unwrap_or(12))?;
    let summary = rep
        .checks
        .iter()
        .map(|c| {
            format!(
                "{:<28} max error {:.3e} (tol {:e}) over {} instances: {}",
                c.name,
                c.max_error,
                c.tol,
                c.instances,
                if c.pass { "PASS" } else { "FAIL" }
            )
        })
        .collect();
    let rows = rep
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), c.instances.to_string(), fmt(c.max_error), fmt(c.tol), c.pass.to_string()]);
    let table = table_csv(&["name", "instances", "max_error", "tol", "pass"], rows)?;
    let meta = FileMeta {
        file: "checks.csv".into(),
        description: "worst error per integral identity".into(),
        columns: vec![
            col("name", "label", "identity"),
            col("instances", "1", "random instances checked"),
            col("max_error", "integral", "worst absolute error"),
            col("tol", "integral", "pass threshold"),
            col("pass", "bool", "max_error <= tol"),
        ],
    };
    finish(sc, rep.pass(), rep, summary, vec![(meta, table)])
}

/// Runs a validated scenario.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    match sc.kind {
        ScenarioKind::Stop => run_stop(sc),
        ScenarioKind::Derivative => run_derivative(sc),
        ScenarioKind::Stationarity | ScenarioKind::Optimize => run_certify(sc),
        ScenarioKind::Counterexample => run_counterexample(sc),
        ScenarioKind::KsSelftest => run_ks_selftest(sc),
    }
}
