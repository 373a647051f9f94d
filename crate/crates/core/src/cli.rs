//! Command-line front end: `generate`, `train`, `forecast`, `verify`, `acf`.
//!
//! Exit codes: 0 success, 1 verification threshold exceeded, 2 invalid input
//! or IO, 3 numerical failure or corrupt model, 4 forecast divergence.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::embedding::{DelayWindow, SeriesSample};
use crate::error::EarcError;
use crate::groups::{window_action, GroupRep};
use crate::model::{self, EarcModel, RolloutMode, TrainOptions};
use crate::solver;
use crate::systems::{self, CompetitionConfig, HamiltonianConfig};
use crate::tensorops::{DenseMatrix, DEFAULT_LSTSQ_TOL, DEFAULT_NULL_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

const DEFAULT_MAX_LAG: usize = 10;
const DEFAULT_VERIFY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "earc", version, about = "Equivariant reservoir identification of symmetric dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic benchmark series as CSV.
    Generate(GenerateArgs),
    /// Fit an equivariant model to a CSV series.
    Train(TrainArgs),
    /// Roll a trained model forward.
    Forecast(ForecastArgs),
    /// Report the equivariance residual of a model file.
    Verify(VerifyArgs),
    /// Autocorrelation table and delay-depth recommendation.
    Acf(AcfArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// hamiltonian, competition or linear.
    #[arg(long)]
    system: String,
    #[arg(long)]
    steps: Option<usize>,
    /// RK4 step of the Hamiltonian system.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    initial: Option<Vec<f64>>,
    /// Use the Hamiltonian initial condition (1, 0), which is an equilibrium.
    #[arg(long)]
    printed_ic: bool,
    /// Uniform growth rate of the competition map.
    #[arg(long, default_value_t = systems::DEFAULT_GROWTH_RATE)]
    growth_rate: f64,
    /// Linear map: `I<n>` or rows separated by `;` with comma-separated entries.
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// Output CSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON experiment config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// k4, z5, identity:<n>, or a group JSON file.
    #[arg(long)]
    group: Option<String>,
    /// Delay depth, or `auto` for ACF-based selection.
    #[arg(long = "L")]
    lag: Option<String>,
    /// Embedding order.
    #[arg(long = "p")]
    order: Option<usize>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Upper bound for `--L auto`.
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    null_tol: Option<f64>,
    #[arg(long)]
    lstsq_tol: Option<f64>,
    /// Keep at most this many basis coefficients (matching pursuit).
    #[arg(long)]
    sparsify: Option<usize>,
    /// Model file to write.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training CSV; the seed is its last `L` training rows.
    #[arg(long, conflicts_with = "seed")]
    data: Option<PathBuf>,
    /// CSV whose last `L` rows form the seed.
    #[arg(long)]
    seed: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// consistent or free.
    #[arg(long, default_value = "consistent")]
    mode: RolloutMode,
    /// Map the seed by group element `j` (0 is the identity).
    #[arg(long)]
    apply_group_element: Option<usize>,
    /// Series CSV indexed like the seed source, for error columns.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output CSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VERIFY_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct AcfArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
    /// ACF table CSV; printed after the recommendation when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Experiment settings readable from a JSON file. Every field is optional.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub group: Option<String>,
    #[serde(rename = "L")]
    pub lag: Option<LagChoice>,
    #[serde(rename = "p")]
    pub order: Option<usize>,
    pub train_count: Option<usize>,
    pub train_fraction: Option<f64>,
    pub max_lag: Option<usize>,
    pub null_tol: Option<f64>,
    pub lstsq_tol: Option<f64>,
    pub sparsify: Option<usize>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(try_from = "RawLag")]
pub enum LagChoice {
    Fixed(usize),
    Auto,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLag {
    Int(usize),
    Text(String),
}

impl TryFrom<RawLag> for LagChoice {
    type Error = EarcError;

    fn try_from(raw: RawLag) -> crate::Result<Self> {
        match raw {
            RawLag::Int(l) => Ok(LagChoice::Fixed(l)),
            RawLag::Text(s) => s.parse(),
        }
    }
}

impl std::str::FromStr for LagChoice {
    type Err = EarcError;

    fn from_str(s: &str) -> crate::Result<Self> {
        if s == "auto" {
            return Ok(LagChoice::Auto);
        }
        s.parse()
            .map(LagChoice::Fixed)
            .map_err(|_| EarcError::Validation(format!("L must be a positive integer or `auto`, got `{s}`")))
    }
}

/// Failure tagged with the stage that produced it.
#[derive(Debug)]
pub struct CliError {
    stage: &'static str,
    code: i32,
    message: String,
}

impl CliError {
    fn new(stage: &'static str, err: EarcError) -> Self {
        CliError {
            stage,
            code: exit_code(&err),
            message: err.to_string(),
        }
    }

    pub fn code(&self) -> i32 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(stage, e))
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &EarcError) -> i32 {
    match err {
        EarcError::NumericalFailure { .. } | EarcError::NoFeasibleModel | EarcError::CorruptModel(_) => {
            EXIT_NUMERICAL
        }
        EarcError::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a, &mut out),
        Command::Forecast(a) => cmd_forecast(&a, &mut out),
        Command::Verify(a) => cmd_verify(&a, &mut out),
        Command::Acf(a) => cmd_acf(&a, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<i32, CliError> {
    let series = match a.system.as_str() {
        "hamiltonian" => {
            let mut cfg = if a.printed_ic {
                HamiltonianConfig::printed_initial_condition()
            } else {
                HamiltonianConfig::default()
            };
            cfg.dt = a.dt;
            if let Some(steps) = a.steps {
                cfg.steps = steps;
            }
            if let Some(init) = &a.initial {
                let [q0, p0] = init[..] else {
                    return Err(CliError::new(
                        "generate",
                        EarcError::Validation(format!("hamiltonian needs 2 initial values, got {}", init.len())),
                    ));
                };
                cfg.q0 = q0;
                cfg.p0 = p0;
            }
            systems::hamiltonian_generate(&cfg)
        }
        "competition" => {
            let mut cfg = CompetitionConfig::default();
            if let Some(steps) = a.steps {
                cfg.steps = steps;
            }
            if let Some(init) = &a.initial {
                cfg.p0 = init.clone();
            }
            cfg.r = vec![a.growth_rate; cfg.p0.len()];
            systems::competition_generate(&cfg)
        }
        "linear" => {
            let spec = a.matrix.as_deref().unwrap_or("I2");
            let m = parse_matrix(spec).stage("parsing --matrix")?;
            let x0 = a.initial.clone().unwrap_or_else(|| vec![1.0; m.rows()]);
            systems::planted_linear(&m, &x0, a.steps.unwrap_or(100))
        }
        other => Err(EarcError::UnknownName(other.to_string())),
    }
    .stage("generate")?;
    write_output(a.output.as_deref(), |w| write_series(w, &series, 0)).stage("writing series")?;
    Ok(EXIT_OK)
}

/// `I<n>` or `a,b;c,d`.
fn parse_matrix(spec: &str) -> crate::Result<DenseMatrix> {
    if let Some(n) = spec.strip_prefix('I') {
        let n: usize = n
            .parse()
            .map_err(|_| EarcError::Validation(format!("bad identity size in `{spec}`")))?;
        return Ok(DenseMatrix::identity(n));
    }
    let rows = spec
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| EarcError::Validation(format!("bad matrix entry `{x}`")))
                })
                .collect::<crate::Result<Vec<f64>>>()
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let m = DenseMatrix::from_rows(&rows)?;
    if !m.is_square() {
        return Err(EarcError::Validation(format!("matrix must be square, got {:?}", m.shape())));
    }
    Ok(m)
}

fn read_config(path: &Path) -> crate::Result<ExperimentConfig> {
    let s = std::fs::read_to_string(path).map_err(|e| EarcError::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| EarcError::Parse {
        location: format!("{} line {} column {}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Overlays the explicit flags on the config file.
fn merged_config(a: &TrainArgs) -> crate::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! overlay {
        ($($f:ident),*) => {
            $(if a.$f.is_some() { cfg.$f = a.$f.clone(); })*
        };
    }
    overlay!(data, group, order, max_lag, null_tol, lstsq_tol, sparsify, output);
    if let Some(l) = &a.lag {
        cfg.lag = Some(l.parse()?);
    }
    // The two training-length settings exclude each other, so a flag for one
    // drops the config value of the other.
    if a.train_count.is_some() {
        cfg.train_count = a.train_count;
        if a.train_fraction.is_none() {
            cfg.train_fraction = None;
        }
    }
    if a.train_fraction.is_some() {
        cfg.train_fraction = a.train_fraction;
        if a.train_count.is_none() {
            cfg.train_count = None;
        }
    }
    Ok(cfg)
}

fn training_rows(cfg: &ExperimentConfig, available: usize) -> crate::Result<usize> {
    match (cfg.train_count, cfg.train_fraction) {
        (Some(_), Some(_)) => Err(EarcError::Validation(
            "set only one of train_count and train_fraction".into(),
        )),
        (Some(c), None) => {
            if c > available {
                Err(EarcError::InsufficientData {
                    needed: c,
                    got: available,
                })
            } else {
                Ok(c)
            }
        }
        (None, Some(f)) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(EarcError::Validation(format!("train_fraction must lie in (0, 1], got {f}")));
            }
            Ok(((available as f64) * f).floor() as usize)
        }
        (None, None) => Ok(available),
    }
}

/// `k4`, `z5`, `identity:<n>`, or a JSON file.
pub fn resolve_group(spec: &str) -> crate::Result<GroupRep> {
    if let Some(n) = spec.strip_prefix("identity:") {
        let n: usize = n
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| EarcError::Validation(format!("bad dimension in `{spec}`")))?;
        return Ok(GroupRep::trivial(n));
    }
    match systems::builtin_rep(spec) {
        Err(EarcError::UnknownName(_)) => {}
        other => return other,
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(EarcError::UnknownName(format!(
            "{spec} (not a builtin group or an existing JSON file)"
        )));
    }
    let s = std::fs::read_to_string(path).map_err(|e| EarcError::io(path, e))?;
    GroupRep::from_json_str(&s)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = merged_config(a).stage("reading config")?;
    let missing = |what: &str| CliError::new("reading config", EarcError::Validation(format!("{what} is required")));
    let data = cfg.data.clone().ok_or_else(|| missing("--data"))?;
    let group_spec = cfg.group.clone().ok_or_else(|| missing("--group"))?;
    let order = cfg.order.ok_or_else(|| missing("--p"))?;
    let output = cfg.output.clone().unwrap_or_else(|| PathBuf::from("model.json"));

    let series = read_series(&data).stage("reading series")?;
    let count = training_rows(&cfg, series.len()).stage("selecting training rows")?;
    let train_part = series.prefix(count).stage("selecting training rows")?;
    let group = resolve_group(&group_spec).stage("loading group")?;

    let lag = match cfg.lag.unwrap_or(LagChoice::Fixed(1)) {
        LagChoice::Fixed(l) => l,
        LagChoice::Auto => {
            let max_lag = cfg.max_lag.unwrap_or(DEFAULT_MAX_LAG);
            let l = model::estimate_lag(&train_part, max_lag).stage("estimating lag")?;
            writeln!(out, "chosen L: {l} (ACF below 1/e, max_lag {max_lag})").ok();
            l
        }
    };
    let opts = TrainOptions {
        null_tol: cfg.null_tol.unwrap_or(DEFAULT_NULL_TOL),
        lstsq_tol: cfg.lstsq_tol.unwrap_or(DEFAULT_LSTSQ_TOL),
        sparsify: cfg.sparsify,
        ..TrainOptions::default()
    };
    let m = model::train(&train_part, &group, lag, order, &opts).stage("training")?;
    m.save(&output).stage("writing model")?;

    let fit = m.fit();
    let report = format!(
        "training rows: {count}\nchannels: {}\nL: {lag}\np: {order}\ngroup order: {}\nM: {}\ndesign rank: {}\ntrain_residual: {:e}\ndelta_em: {:e}\nmodel: {}\n",
        m.channels(),
        m.group().order(),
        fit.basis_dim,
        fit.design_rank,
        fit.train_residual,
        fit.delta_em,
        output.display()
    );
    out.write_all(report.as_bytes())
        .map_err(|e| EarcError::io("<stdout>", e))
        .stage("printing report")?;
    Ok(EXIT_OK)
}

/// Model loading for commands that treat any unreadable content as corruption.
fn load_model(path: &Path, checked: bool) -> Result<EarcModel, CliError> {
    let loaded = if checked {
        EarcModel::load(path)
    } else {
        EarcModel::load_unchecked(path)
    };
    loaded
        .map_err(|e| match e {
            EarcError::Parse { location, message } => {
                EarcError::CorruptModel(format!("{}: {location}: {message}", path.display()))
            }
            other => other,
        })
        .stage("loading model")
}

fn cmd_forecast(a: &ForecastArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let m = load_model(&a.model, true)?;
    let lag = m.lag();
    let (source, from_training) = match (&a.seed, &a.data) {
        (Some(s), _) => (s, false),
        (None, Some(d)) => (d, true),
        (None, None) => {
            return Err(CliError::new(
                "reading seed",
                EarcError::Validation("pass --data or --seed".into()),
            ))
        }
    };
    let series = read_series(source).stage("reading seed")?;
    let seed_end = if from_training {
        m.metadata().training_len.min(series.len())
    } else {
        series.len()
    };
    if seed_end < lag {
        return Err(CliError::new(
            "reading seed",
            EarcError::InsufficientData {
                needed: lag,
                got: seed_end,
            },
        ));
    }
    let mut seed = series.window_ending_at(seed_end - 1, lag).stage("reading seed")?;
    if let Some(j) = a.apply_group_element {
        let g = m.group().elements().get(j).ok_or_else(|| {
            CliError::new(
                "mapping seed",
                EarcError::Validation(format!("group has {} elements, no element {j}", m.group().order())),
            )
        })?;
        let mapped = window_action(g, lag)
            .and_then(|gl| gl.matvec(seed.as_slice()))
            .and_then(|x| DelayWindow::new(m.channels(), lag, x))
            .stage("mapping seed")?;
        seed = mapped;
    }
    let reference = match &a.reference {
        Some(p) => Some(read_series(p).stage("reading reference")?),
        None => None,
    };
    if let Some(r) = &reference {
        if r.channels() != m.channels() {
            return Err(CliError::new(
                "reading reference",
                EarcError::Validation(format!(
                    "reference has {} channels, model predicts {}",
                    r.channels(),
                    m.channels()
                )),
            ));
        }
    }

    let fc = m.rollout(&seed, a.horizon, a.mode).stage("forecasting")?;
    let first_t = seed_end;
    let n = m.channels();
    let mut sq = vec![0.0; n];
    let mut compared = 0usize;
    write_output(a.output.as_deref(), |w| {
        let mut header = String::from("t");
        for j in 1..=n {
            header.push_str(&format!(",ch{j}"));
        }
        if reference.is_some() {
            for j in 1..=n {
                header.push_str(&format!(",err_ch{j}"));
            }
        }
        writeln!(w, "{header}")?;
        for k in 0..fc.steps() {
            let t = first_t + k;
            let row = fc.values.row(k);
            let mut line = t.to_string();
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            if let Some(r) = &reference {
                if t < r.len() {
                    compared += 1;
                    for (j, (v, e)) in row.iter().zip(r.sample(t)).enumerate() {
                        let d = (v - e).abs();
                        sq[j] += d * d;
                        line.push(',');
                        line.push_str(&fmt_f64(d));
                    }
                } else {
                    line.push_str(&",".repeat(n));
                }
            }
            writeln!(w, "{line}")?;
        }
        if let Some(step) = fc.diverged_at {
            writeln!(w, "# diverged_at={step}")?;
        }
        Ok(())
    })
    .stage("writing forecast")?;

    let mut summary = format!("steps: {}\n", fc.steps());
    if reference.is_some() {
        summary.push_str(&format!("compared steps: {compared}\n"));
        if compared > 0 {
            let per: Vec<f64> = sq.iter().map(|s| (s / compared as f64).sqrt()).collect();
            let total = (sq.iter().sum::<f64>() / (compared * n) as f64).sqrt();
            for (j, r) in per.iter().enumerate() {
                summary.push_str(&format!("rmse ch{}: {r:e}\n", j + 1));
            }
            summary.push_str(&format!("rmse: {total:e}\n"));
        }
    }
    if let Some(step) = fc.diverged_at {
        summary.push_str(&format!("diverged at step {step}\n"));
    }
    out.write_all(summary.as_bytes())
        .map_err(|e| EarcError::io("<stdout>", e))
        .stage("printing summary")?;
    Ok(if fc.diverged() { EXIT_DIVERGED } else { EXIT_OK })
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let m = load_model(&a.model, false)?;
    let delta = m.delta_em().stage("computing residual")?;
    let per_gen = solver::commutator_norms(m.coupling(), m.group().generators(), m.lag(), m.plan())
        .stage("computing residual")?;
    let pass = delta <= a.threshold;
    let mut s = format!("group order: {}\n", m.group().order());
    for (i, r) in per_gen.iter().enumerate() {
        s.push_str(&format!("generator {i}: {r:e}\n"));
    }
    s.push_str(&format!("delta_em: {delta:e}\n"));
    s.push_str(&format!(
        "threshold: {:e}\nresult: {}\n",
        a.threshold,
        if pass { "pass" } else { "fail" }
    ));
    out.write_all(s.as_bytes())
        .map_err(|e| EarcError::io("<stdout>", e))
        .stage("printing report")?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_acf(a: &AcfArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let series = read_series(&a.data).stage("reading series")?;
    let lag = model::estimate_lag(&series, a.max_lag).stage("estimating lag")?;
    let acf = model::autocorrelation(&series, a.max_lag);
    writeln!(out, "recommended L: {lag}").ok();
    let table = |w: &mut dyn Write| -> io::Result<()> {
        let mut header = String::from("lag");
        for j in 1..=acf.len() {
            header.push_str(&format!(",ch{j}"));
        }
        writeln!(w, "{header}")?;
        for l in 0..=a.max_lag {
            let mut line = l.to_string();
            for c in &acf {
                line.push(',');
                line.push_str(&fmt_f64(c[l]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    };
    match &a.output {
        Some(p) => write_output(Some(p), |w| table(w)),
        None => table(out).map_err(|e| EarcError::io("<stdout>", e)),
    }
    .stage("writing ACF table")?;
    Ok(EXIT_OK)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,ch1..chn` rows, numbering from `first_t`.
pub fn write_series(w: &mut dyn Write, s: &SeriesSample, first_t: usize) -> io::Result<()> {
    let mut header = String::from("t");
    for j in 1..=s.channels() {
        header.push_str(&format!(",ch{j}"));
    }
    writeln!(w, "{header}")?;
    for t in 0..s.len() {
        let mut line = (first_t + t).to_string();
        for v in s.sample(t) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn write_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> crate::Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| EarcError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| EarcError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush()).map_err(|e| EarcError::io("<stdout>", e))
        }
    }
}

/// Reads a series CSV; the first column (time) is ignored and `#` lines are
/// comments.
pub fn read_series(path: &Path) -> crate::Result<SeriesSample> {
    let file = File::open(path).map_err(|e| EarcError::io(path, e))?;
    read_series_from(file, &path.display().to_string())
}

pub fn read_series_from(r: impl io::Read, name: &str) -> crate::Result<SeriesSample> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let parse_err = |location: String, message: String| EarcError::Parse { location, message };
    let header = reader
        .headers()
        .map_err(|e| parse_err(format!("{name} header"), e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(parse_err(
            format!("{name} header"),
            "expected a time column and at least one channel".into(),
        ));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(format!("{name} line {line}"), e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                format!("{name} line {line}"),
                format!("{} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(format!("{name} line {line}"), format!("`{f}` is not a number")))
            })
            .collect::<crate::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(EarcError::InsufficientData { needed: 1, got: 0 });
    }
    SeriesSample::from_rows(&rows)
}
