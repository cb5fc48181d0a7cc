//! The `bnlab` command line: configuration, commands and result files.
//!
//! A run is described by a [`RunConfig`], read from a TOML file and then
//! overridden by flags. Every result file starts with `#` header lines
//! carrying the tool version, the full configuration as JSON, its SHA-256
//! and the master seed, so a file can be traced back to (and re-validated
//! against) the run that produced it.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diffusion_analysis::{
    c_of_q, classify_boundaries, mean_exit_time, smoluchowski_margin, speed_density, QuadratureConfig,
    ScaleFunction,
};
use crate::error::{Error, Result};
use crate::monte_carlo::{path_rng, run_exit_ensemble, sweep_c_of_q, EnsembleSpec};
use crate::noise_models::{ForceField, NoiseModel};
use crate::sde_integrators::{
    simulate_path, write_trajectory_csv, Dynamics, ExitRule, Recording, Scheme, StepConfig,
};
use crate::stationary_densities::{write_density_csv, DensityFamily, DensitySpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    #[default]
    Analyze,
    ExitTime,
    Simulate,
    Density,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Tsb,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    #[default]
    Overdamped,
    Underdamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub family: Family,
    pub q: f64,
    /// Exponent of the α-family (ignored for TSB).
    pub alpha: f64,
    /// Mass (underdamped only).
    pub m: f64,
    pub dynamics: DynamicsKind,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            family: Family::Tsb,
            q: -1.0,
            alpha: 1.0,
            m: 1.0,
            dynamics: DynamicsKind::Overdamped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub dt: f64,
    pub dt_min: f64,
    pub boundary_guard: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub v0: f64,
    /// Sub-interval `(a, b)` for exit times; the whole interval if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    pub control_variate: bool,
    /// Trajectory sampling interval for `simulate` (default `horizon/1000`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<f64>,
    /// `q` values for `sweep`.
    pub q_values: Vec<f64>,
    /// Run simulations in `sweep` as well as quadrature.
    pub sweep_mc: bool,
    pub quadrature: QuadratureConfig,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        let step = StepConfig::default();
        Self {
            dt: step.dt,
            dt_min: step.dt_min,
            boundary_guard: step.boundary_guard,
            horizon: step.horizon,
            scheme: step.scheme,
            n_paths: 1000,
            seed: 1,
            x0: 0.0,
            v0: 0.0,
            interval: None,
            control_variate: true,
            record_every: None,
            q_values: vec![-0.25, -0.5, -1.0, -2.0, -4.0, -8.0],
            sweep_mc: false,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: -0.999,
            hi: 0.999,
            points: 101,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub format: Format,
    /// Output file; standard output if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub grid: GridSpec,
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelBlock,
    pub numerics: NumericsBlock,
    pub output: OutputBlock,
}

fn field(name: &str, e: Error) -> Error {
    Error::Config(format!("{name}: {e}"))
}

fn bad(name: &str, value: impl std::fmt::Display, constraint: &str) -> Error {
    Error::Config(format!("{name} = {value}: {constraint}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every constraint of the modules the run will use, naming the
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        self.model().map_err(|e| field("model", e))?;
        if self.model.dynamics == DynamicsKind::Underdamped && !(self.model.m > 0.0 && self.model.m.is_finite()) {
            return Err(bad("model.m", self.model.m, "must be finite and > 0"));
        }
        self.step().validate().map_err(|e| field("numerics", e))?;
        self.numerics
            .quadrature
            .validate()
            .map_err(|e| field("numerics.quadrature", e))?;
        let n = &self.numerics;
        if n.n_paths == 0 {
            return Err(bad("numerics.n_paths", 0, "must be >= 1"));
        }
        let (a, b) = self.interval();
        if !(a >= -1.0 && b <= 1.0 && a < b) {
            return Err(bad("numerics.interval", format!("[{a}, {b}]"), "need -1 <= a < b <= 1"));
        }
        if !(a < n.x0 && n.x0 < b) {
            return Err(bad("numerics.x0", n.x0, "must lie inside the interval"));
        }
        if !n.v0.is_finite() {
            return Err(bad("numerics.v0", n.v0, "must be finite"));
        }
        if let Some(r) = n.record_every {
            if !(r > 0.0 && r.is_finite()) {
                return Err(bad("numerics.record_every", r, "must be finite and > 0"));
            }
        }
        if let Some(q) = n.q_values.iter().find(|&&q| !(q < 0.0 && q.is_finite())) {
            return Err(bad("numerics.q_values", q, "every value must be finite and < 0"));
        }
        let g = &self.output.grid;
        if g.points < 2 || !(g.lo < g.hi) || !g.lo.is_finite() || !g.hi.is_finite() {
            return Err(bad(
                "output.grid",
                format!("[{}, {}] x {}", g.lo, g.hi, g.points),
                "need finite lo < hi and at least 2 points",
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<NoiseModel> {
        match self.model.family {
            Family::Tsb => NoiseModel::tsb(self.model.q),
            Family::Alpha => NoiseModel::alpha(self.model.alpha, self.model.q),
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        match self.model.dynamics {
            DynamicsKind::Overdamped => Dynamics::Overdamped,
            DynamicsKind::Underdamped => Dynamics::Underdamped { m: self.model.m },
        }
    }

    pub fn step(&self) -> StepConfig {
        let n = &self.numerics;
        StepConfig {
            dt: n.dt,
            dt_min: n.dt_min,
            boundary_guard: n.boundary_guard,
            horizon: n.horizon,
            scheme: n.scheme,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        self.numerics.interval.map_or((-1.0, 1.0), |[a, b]| (a, b))
    }

    /// Canonical JSON form, the input of [`hash`](Self::hash).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Parser)]
#[command(name = "bnlab", version, about = "Exit times, boundary behaviour and stationary densities of bounded noises")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Boundary classification with scale, speed and Smoluchowski tables.
    Analyze(Flags),
    /// Monte Carlo mean exit time next to the quadrature value.
    ExitTime(Flags),
    /// One path, written as a trajectory.
    Simulate(Flags),
    /// Stationary density on a grid.
    Density(Flags),
    /// C(q) and E[T(0)] over a list of negative q.
    Sweep(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    #[arg(long, value_enum)]
    pub dynamics: Option<DynamicsKind>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Left end of the exit interval.
    #[arg(long, allow_negative_numbers = true, requires = "b")]
    pub a: Option<f64>,
    /// Right end of the exit interval.
    #[arg(long, allow_negative_numbers = true, requires = "a")]
    pub b: Option<f64>,
    /// Comma-separated q values for `sweep`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub q_values: Option<Vec<f64>>,
    /// Also simulate in `sweep`.
    #[arg(long)]
    pub mc: bool,
    /// Grid points for tables.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Flags {
    /// Loads the configuration file (if any) and applies the flags on top.
    pub fn resolve(&self, command: CommandKind) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        cfg.command = command;
        let (m, n, o) = (&mut cfg.model, &mut cfg.numerics, &mut cfg.output);
        if let Some(v) = self.q {
            m.q = v;
        }
        if let Some(v) = self.alpha {
            m.alpha = v;
            if self.family.is_none() {
                m.family = Family::Alpha;
            }
        }
        if let Some(v) = self.family {
            m.family = v;
        }
        if let Some(v) = self.m {
            m.m = v;
            if self.dynamics.is_none() {
                m.dynamics = DynamicsKind::Underdamped;
            }
        }
        if let Some(v) = self.dynamics {
            m.dynamics = v;
        }
        if let Some(v) = self.dt {
            n.dt = v;
        }
        if let Some(v) = self.horizon {
            n.horizon = v;
        }
        if let Some(v) = self.paths {
            n.n_paths = v;
        }
        if let Some(v) = self.seed {
            n.seed = v;
        }
        if let Some(v) = self.x0 {
            n.x0 = v;
        }
        if let (Some(a), Some(b)) = (self.a, self.b) {
            n.interval = Some([a, b]);
        }
        if let Some(v) = &self.q_values {
            n.q_values = v.clone();
        }
        if self.mc {
            n.sweep_mc = true;
        }
        if let Some(v) = self.points {
            o.grid.points = v;
        }
        if let Some(v) = &self.out {
            o.path = Some(v.clone());
        }
        if let Some(v) = self.format {
            o.format = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Result of a command before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Extra `# key: value` lines after the standard header.
    pub notes: Vec<(String, String)>,
    /// CSV body including its column header.
    pub csv: String,
    pub json: Value,
}

/// `{:.16e}`: 17 significant digits, exact round trip for doubles.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    fmt_num(x.unwrap_or(f64::NAN))
}

pub fn execute(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    match cfg.command {
        CommandKind::Analyze => cmd_analyze(cfg),
        CommandKind::ExitTime => cmd_exit_time(cfg),
        CommandKind::Simulate => cmd_simulate(cfg),
        CommandKind::Density => cmd_density(cfg),
        CommandKind::Sweep => cmd_sweep(cfg),
    }
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Report> {
    let model = cfg.model()?;
    let qc = &cfg.numerics.quadrature;
    let report = classify_boundaries(&model, qc)?;
    let sf = ScaleFunction::new(&model, qc)?;
    let tsb = model.alpha_exponent() == 1.0;
    let mut csv = String::from(if tsb {
        "x,scale,speed,smoluchowski_margin\n"
    } else {
        "x,scale,speed\n"
    });
    let mut rows = Vec::new();
    for x in cfg.output.grid.points() {
        let s = sf.eval(x)?.finite().unwrap_or(if x < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY });
        let m = speed_density(x, &model)?;
        let mut row = vec![x, s, m];
        if tsb {
            row.push(if x.abs() < 1.0 { smoluchowski_margin(x, model.q())? } else { f64::NAN });
        }
        csv.push_str(&row.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","));
        csv.push('\n');
        rows.push(row);
    }
    Ok(Report {
        notes: vec![
            ("model".into(), model.label()),
            ("report".into(), report.summary()),
            ("regime".into(), report.regime.describe().into()),
        ],
        csv,
        json: json!({ "model": model.label(), "boundaries": report, "summary": report.summary(), "table": rows }),
    })
}

pub fn cmd_exit_time(cfg: &RunConfig) -> Result<Report> {
    let model = cfg.model()?;
    if cfg.numerics.interval.is_none() && !model.boundary_attainable() {
        return Err(Error::Contract {
            operation: "exit-time",
            detail: format!(
                "{}: the boundaries ±1 are unattainable, so the exit time from (-1, 1) is infinite with probability one; \
                 give a sub-interval with --a and --b",
                model.label()
            ),
        });
    }
    let (a, b) = cfg.interval();
    let n = &cfg.numerics;
    let mut spec = EnsembleSpec::new(model, cfg.dynamics(), n.n_paths, cfg.step(), n.seed);
    spec.x0 = n.x0;
    spec.v0 = n.v0;
    spec.interval = n.interval.map(|[a, b]| (a, b));
    spec.control_variate = n.control_variate;
    let stats = run_exit_ensemble(&spec)?;
    let quad = if cfg.model.dynamics == DynamicsKind::Overdamped {
        mean_exit_time(n.x0, a, b, &model, &n.quadrature)?
    } else {
        f64::NAN
    };
    let c = match model {
        NoiseModel::Tsb(_) if model.q() < 0.0 => c_of_q(model.q(), &n.quadrature)?,
        _ => f64::NAN,
    };
    let header = "q,alpha,a,b,x0,n_paths,n_exited,n_censored,exits_left,exits_right,mc_mean,mc_se,cv_mean,cv_se,quad_value,c";
    let row = [
        fmt_num(model.q()),
        fmt_num(model.alpha_exponent()),
        fmt_num(a),
        fmt_num(b),
        fmt_num(n.x0),
        stats.n_paths.to_string(),
        stats.n_exited.to_string(),
        stats.n_censored.to_string(),
        stats.side_counts.0.to_string(),
        stats.side_counts.1.to_string(),
        opt_num(stats.mean_exit_time),
        opt_num(stats.std_error),
        opt_num(stats.cv_mean),
        opt_num(stats.cv_std_error),
        fmt_num(quad),
        fmt_num(c),
    ]
    .join(",");
    let notes = stats.warnings.iter().map(|w| ("warning".to_string(), w.clone())).collect();
    Ok(Report {
        notes,
        csv: format!("{header}\n{row}\n"),
        json: json!({ "stats": stats, "quad_value": quad, "c": c }),
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Report> {
    let model = cfg.model()?;
    let n = &cfg.numerics;
    let step = cfg.step();
    let (a, b) = cfg.interval();
    let rule = ExitRule::new(a, b, &model, &step)?;
    let every = n.record_every.unwrap_or(if step.horizon > 0.0 { step.horizon / 1000.0 } else { step.dt });
    let recording = Recording {
        every: Some(every),
        ..Recording::default()
    };
    let mut rng = path_rng(n.seed, 0);
    let out = simulate_path(n.x0, n.v0, cfg.dynamics(), &model, &step, &rule, &recording, &mut rng)?;
    let mut body = Vec::new();
    write_trajectory_csv(&mut body, &out.trajectory)?;
    let r = &out.result;
    let notes = vec![
        ("exited".into(), r.exited.to_string()),
        ("exit_time".into(), opt_num(r.exit_time)),
        ("steps".into(), r.steps_taken.to_string()),
        ("max_abs_x".into(), fmt_num(r.max_abs_x)),
        ("min_log_gap".into(), fmt_num(r.min_log_gap)),
    ];
    Ok(Report {
        notes,
        csv: String::from_utf8(body).expect("CSV is UTF-8"),
        json: json!({ "result": out.result, "trajectory": out.trajectory }),
    })
}

/// Stationary density family matching the configured model and dynamics.
pub fn density_family(cfg: &RunConfig) -> Result<DensityFamily> {
    let q = cfg.model.q;
    let alpha = match cfg.model.family {
        Family::Tsb => 1.0,
        Family::Alpha => cfg.model.alpha,
    };
    if alpha < 1.0 {
        return Err(Error::Unsupported(format!(
            "alpha = {alpha} < 1 forms no potential well; there is no stationary density on (-1, 1)"
        )));
    }
    Ok(match (cfg.model.dynamics, alpha == 1.0) {
        (DynamicsKind::Underdamped, true) => DensityFamily::PhaseSpace { q, m: cfg.model.m },
        (DynamicsKind::Overdamped, true) => DensityFamily::TsbOverdamped { q },
        (_, false) => DensityFamily::AlphaFamily { alpha, q },
    })
}

pub fn cmd_density(cfg: &RunConfig) -> Result<Report> {
    let family = density_family(cfg)?;
    let d = DensitySpec::new(family, &cfg.numerics.quadrature)?;
    let grid = cfg.output.grid.points();
    let mut body = Vec::new();
    write_density_csv(&mut body, &d, &grid)?;
    let values: Vec<[f64; 2]> = grid.iter().map(|&x| [x, d.pdf(x)]).collect();
    Ok(Report {
        notes: vec![("normalization".into(), fmt_num(d.normalization()))],
        csv: String::from_utf8(body).expect("CSV is UTF-8"),
        json: json!({ "family": family, "normalization": d.normalization(), "density": values }),
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Report> {
    let n = &cfg.numerics;
    let template = if n.sweep_mc {
        let mut t = EnsembleSpec::new(NoiseModel::tsb(-1.0)?, Dynamics::Overdamped, n.n_paths, cfg.step(), n.seed);
        t.control_variate = n.control_variate;
        Some(t)
    } else {
        None
    };
    let rows = sweep_c_of_q(&n.q_values, template.as_ref(), &n.quadrature)?;
    let mut csv = String::from("q,mc_mean,mc_se,quad_value,c\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_num(r.q),
            opt_num(r.mc_mean),
            opt_num(r.mc_se),
            fmt_num(r.quad_value),
            fmt_num(r.c)
        ));
    }
    Ok(Report {
        notes: Vec::new(),
        csv,
        json: json!({ "rows": rows }),
    })
}

/// Renders a report with its provenance header.
pub fn render(cfg: &RunConfig, report: &Report) -> String {
    match cfg.output.format {
        Format::Csv => {
            let mut s = format!(
                "# bnlab {VERSION}\n# config: {}\n# config_sha256: {}\n# seed: {}\n",
                cfg.canonical_json(),
                cfg.hash(),
                cfg.numerics.seed
            );
            for (k, v) in &report.notes {
                s.push_str(&format!("# {k}: {v}\n"));
            }
            s.push_str(&report.csv);
            s
        }
        Format::Json => {
            let notes: serde_json::Map<String, Value> =
                report.notes.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
            let doc = json!({
                "bnlab": VERSION,
                "config": cfg,
                "config_sha256": cfg.hash(),
                "seed": cfg.numerics.seed,
                "notes": notes,
                "result": report.json,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("report serialises");
            s.push('\n');
            s
        }
    }
}

/// A result file read back.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    /// CSV rows after the column header (CSV files only).
    pub rows: Vec<Vec<String>>,
    pub columns: Vec<String>,
}

/// Parses a result file and checks its embedded hash and configuration.
pub fn parse_output(text: &str) -> Result<ParsedOutput> {
    let (version, config_json, hash, seed, columns, rows) = if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("result JSON: {e}")))?;
        let get = |k: &str| doc.get(k).cloned().ok_or_else(|| Error::Config(format!("result JSON lacks `{k}`")));
        (
            get("bnlab")?.as_str().unwrap_or_default().to_string(),
            get("config")?.to_string(),
            get("config_sha256")?.as_str().unwrap_or_default().to_string(),
            get("seed")?.as_u64().unwrap_or(u64::MAX),
            Vec::new(),
            Vec::new(),
        )
    } else {
        let mut version = None;
        let mut config = None;
        let mut hash = None;
        let mut seed = None;
        let mut body = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# ") {
                if let Some(v) = h.strip_prefix("bnlab ") {
                    version.get_or_insert(v.to_string());
                } else if let Some(v) = h.strip_prefix("config: ") {
                    config.get_or_insert(v.to_string());
                } else if let Some(v) = h.strip_prefix("config_sha256: ") {
                    hash.get_or_insert(v.to_string());
                } else if let Some(v) = h.strip_prefix("seed: ") {
                    seed = v.parse().ok();
                }
            } else if !line.is_empty() {
                body.push(line.split(',').map(str::to_string).collect::<Vec<_>>());
            }
        }
        let missing = |k: &str| Error::Config(format!("result file lacks the `{k}` header"));
        let mut body = body.into_iter();
        (
            version.ok_or_else(|| missing("bnlab"))?,
            config.ok_or_else(|| missing("config"))?,
            hash.ok_or_else(|| missing("config_sha256"))?,
            seed.ok_or_else(|| missing("seed"))?,
            body.next().unwrap_or_default(),
            body.collect(),
        )
    };
    let config: RunConfig =
        serde_json::from_str(&config_json).map_err(|e| Error::Config(format!("embedded config: {e}")))?;
    if config.hash() != hash {
        return Err(Error::Config(format!(
            "config hash mismatch: header says {hash}, config hashes to {}",
            config.hash()
        )));
    }
    if seed != config.numerics.seed {
        return Err(Error::Config(format!("seed header {seed} disagrees with the config")));
    }
    config.validate()?;
    Ok(ParsedOutput {
        version,
        config,
        seed,
        rows,
        columns,
    })
}

fn write_report(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.output.path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (kind, flags) = match &cli.command {
        CliCommand::Analyze(f) => (CommandKind::Analyze, f),
        CliCommand::ExitTime(f) => (CommandKind::ExitTime, f),
        CliCommand::Simulate(f) => (CommandKind::Simulate, f),
        CliCommand::Density(f) => (CommandKind::Density, f),
        CliCommand::Sweep(f) => (CommandKind::Sweep, f),
    };
    let result = flags
        .resolve(kind)
        .and_then(|cfg| execute(&cfg).and_then(|r| write_report(&cfg, &render(&cfg, &r))));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bnlab: {e}");
            e.exit_code()
        }
    }
}
