//! Trained equivariant reservoir models: fitting, one-step prediction,
//! autoregressive rollout, lag estimation and JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{build_data_matrices, compression_plan, newest_entries, CompressionPlan, DelayWindow, SeriesSample};
use crate::error::{EarcError, Result};
use crate::groups::{GroupRep, GroupSpec};
use crate::solver::{self, FitOptions, FitReport};
use crate::tensorops::{norm, DenseMatrix, DEFAULT_LSTSQ_TOL, DEFAULT_NULL_TOL};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Largest Δ_EM a persisted model may carry.
pub const PERSISTED_DELTA_EM_MAX: f64 = 1e-8;

/// Rollout states with norm above this count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub null_tol: f64,
    pub lstsq_tol: f64,
    pub sparsify: Option<usize>,
    pub normal_equations_above: usize,
    pub max_design_entries: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let fit = FitOptions::default();
        TrainOptions {
            null_tol: DEFAULT_NULL_TOL,
            lstsq_tol: DEFAULT_LSTSQ_TOL,
            sparsify: None,
            normal_equations_above: fit.normal_equations_above,
            max_design_entries: fit.max_design_entries,
        }
    }
}

/// Creation record stored alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub training_len: usize,
    pub null_tol: f64,
    pub lstsq_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarcModel {
    n: usize,
    lag: usize,
    order: usize,
    group: GroupRep,
    plan: CompressionPlan,
    coupling: DenseMatrix,
    fit: FitReport,
    metadata: TrainingMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Shift the window and append only the newest predicted samples.
    #[default]
    Consistent,
    /// Feed the whole predicted dilated state back in.
    Free,
}

impl std::str::FromStr for RolloutMode {
    type Err = EarcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(RolloutMode::Consistent),
            "free" => Ok(RolloutMode::Free),
            other => Err(EarcError::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub horizon: usize,
    /// One row per completed step, one column per channel.
    pub values: DenseMatrix,
    /// Dilated state after each completed step, when traced.
    pub windows: Option<DenseMatrix>,
    /// 1-based step at which the rollout left the finite range.
    pub diverged_at: Option<usize>,
}

impl Forecast {
    pub fn steps(&self) -> usize {
        self.values.rows()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Runs the identification pipeline on `s`.
pub fn train(s: &SeriesSample, group: &GroupRep, lag: usize, p: usize, opts: &TrainOptions) -> Result<EarcModel> {
    if s.channels() != group.n() {
        return Err(EarcError::Validation(format!(
            "series has {} channels but the group acts on dimension {}",
            s.channels(),
            group.n()
        )));
    }
    if lag == 0 || p == 0 {
        return Err(EarcError::Validation("lag and order must be positive".into()));
    }
    if s.len() < lag + 1 {
        return Err(EarcError::InsufficientData {
            needed: lag + 1,
            got: s.len(),
        });
    }
    let nl = s.channels() * lag;
    let plan = compression_plan(nl, p)?;
    let (h0r, h1) = build_data_matrices(s, lag, p, &plan)?;
    let basis = solver::equivariant_basis(group, lag, &plan, opts.null_tol)?;
    let fit_opts = FitOptions {
        lstsq_tol: opts.lstsq_tol,
        sparsify: opts.sparsify,
        normal_equations_above: opts.normal_equations_above,
        max_design_entries: opts.max_design_entries,
    };
    let fit = solver::fit_coefficients(&basis, &h0r, &h1, &fit_opts)?;
    let coupling = solver::assemble(&basis, &fit.coefficients)?;
    if !coupling.is_finite() {
        return Err(EarcError::NumericalFailure {
            rows: coupling.rows(),
            cols: coupling.cols(),
        });
    }
    Ok(EarcModel {
        n: s.channels(),
        lag,
        order: p,
        group: group.clone(),
        plan,
        coupling,
        fit,
        metadata: TrainingMetadata {
            training_len: s.len(),
            null_tol: opts.null_tol,
            lstsq_tol: opts.lstsq_tol,
            sparsify: opts.sparsify,
        },
    })
}

impl EarcModel {
    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn group(&self) -> &GroupRep {
        &self.group
    }

    pub fn plan(&self) -> &CompressionPlan {
        &self.plan
    }

    /// The compressed output coupling `Ŵ` (`nL x q`).
    pub fn coupling(&self) -> &DenseMatrix {
        &self.coupling
    }

    pub fn fit(&self) -> &FitReport {
        &self.fit
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn delta_em(&self) -> Result<f64> {
        solver::delta_em(&self.coupling, &self.group, self.lag, &self.plan)
    }

    /// Predicted next dilated state `Ŵ · reduce(eth(x))`.
    pub fn predict_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.coupling.matvec(&self.plan.features(x)?)
    }

    pub fn predict_step(&self, w: &DelayWindow) -> Result<Vec<f64>> {
        if w.channels() != self.n || w.lag() != self.lag {
            return Err(EarcError::shape(format!(
                "window is {} channels x lag {}, model expects {} x {}",
                w.channels(),
                w.lag(),
                self.n,
                self.lag
            )));
        }
        self.predict_state(w.as_slice())
    }

    pub fn rollout(&self, seed: &DelayWindow, horizon: usize, mode: RolloutMode) -> Result<Forecast> {
        self.rollout_impl(seed, horizon, mode, false)
    }

    /// Like [`EarcModel::rollout`], also recording every dilated state.
    pub fn rollout_traced(&self, seed: &DelayWindow, horizon: usize, mode: RolloutMode) -> Result<Forecast> {
        self.rollout_impl(seed, horizon, mode, true)
    }

    fn rollout_impl(&self, seed: &DelayWindow, horizon: usize, mode: RolloutMode, trace: bool) -> Result<Forecast> {
        if horizon == 0 {
            return Err(EarcError::Validation("horizon must be positive".into()));
        }
        let nl = self.n * self.lag;
        let mut values = Vec::with_capacity(horizon * self.n);
        let mut states = Vec::new();
        let mut window = seed.clone();
        let mut diverged_at = None;
        for step in 1..=horizon {
            let predicted = self.predict_step(&window)?;
            let sample = newest_entries(&predicted, self.n, self.lag);
            let next = match mode {
                RolloutMode::Consistent => window.shifted(&sample),
                RolloutMode::Free => DelayWindow::new(self.n, self.lag, predicted)?,
            };
            let size = norm(next.as_slice());
            if !size.is_finite() || size > DIVERGENCE_NORM {
                diverged_at = Some(step);
                break;
            }
            values.extend_from_slice(&sample);
            if trace {
                states.extend_from_slice(next.as_slice());
            }
            window = next;
        }
        let steps = values.len() / self.n;
        Ok(Forecast {
            horizon,
            values: DenseMatrix::from_row_major(steps, self.n, values)?,
            windows: if trace {
                Some(DenseMatrix::from_row_major(steps, nl, states)?)
            } else {
                None
            },
            diverged_at,
        })
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            n: self.n,
            lag: self.lag,
            order: self.order,
            generators: self.group.to_spec().generators,
            rep_index: self.plan.rep_index().to_vec(),
            coupling: self.coupling.as_slice().to_vec(),
            fit: self.fit.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("model serializes");
        s.push('\n');
        s
    }

    /// Parses and fully validates a model, including the equivariance bound.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let model = Self::from_json_str_unchecked(s)?;
        let delta = model.delta_em()?;
        if !(delta <= PERSISTED_DELTA_EM_MAX) {
            return Err(EarcError::CorruptModel(format!(
                "equivariance residual {delta:.3e} exceeds {PERSISTED_DELTA_EM_MAX:e}"
            )));
        }
        Ok(model)
    }

    /// Parses a model and checks its structure, but not the equivariance
    /// bound. Used when auditing a possibly tampered model.
    pub fn from_json_str_unchecked(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| EarcError::Parse {
            location: format!("model JSON line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        let corrupt = |msg: String| EarcError::CorruptModel(msg);
        if file.version != MODEL_FORMAT_VERSION {
            return Err(corrupt(format!("unsupported model version {}", file.version)));
        }
        if file.n == 0 || file.lag == 0 || file.order == 0 {
            return Err(corrupt("dimensions must be positive".into()));
        }
        let group = GroupRep::from_spec(&GroupSpec {
            n: file.n,
            generators: file.generators,
        })
        .map_err(|e| corrupt(format!("group: {e}")))?;
        let plan = compression_plan(file.n * file.lag, file.order)?;
        if plan.rep_index() != file.rep_index.as_slice() {
            return Err(corrupt("compression indices do not match the embedding".into()));
        }
        let coupling = DenseMatrix::from_row_major(plan.dim_in(), plan.reduced_dim(), file.coupling)
            .map_err(|e| corrupt(format!("coupling: {e}")))?;
        if !coupling.is_finite() {
            return Err(corrupt("coupling has non-finite entries".into()));
        }
        if file.fit.coefficients.len() != file.fit.basis_dim {
            return Err(corrupt("coefficient count does not match basis size".into()));
        }
        if !(file.fit.train_residual >= 0.0) || !(file.fit.delta_em >= 0.0) {
            return Err(corrupt("fit diagnostics must be nonnegative".into()));
        }
        Ok(EarcModel {
            n: file.n,
            lag: file.lag,
            order: file.order,
            group,
            plan,
            coupling,
            fit: file.fit,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| EarcError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| EarcError::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn load_unchecked(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| EarcError::io(path, e))?;
        Self::from_json_str_unchecked(&s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n: usize,
    #[serde(rename = "L")]
    lag: usize,
    #[serde(rename = "p")]
    order: usize,
    generators: Vec<Vec<f64>>,
    rep_index: Vec<usize>,
    /// Row-major `nL x q`.
    #[serde(rename = "W")]
    coupling: Vec<f64>,
    fit: FitReport,
    metadata: TrainingMetadata,
}

/// Sample autocorrelation of each channel for lags `0..=max_lag`.
/// Zero-variance channels report 0 beyond lag 0.
pub fn autocorrelation(s: &SeriesSample, max_lag: usize) -> Vec<Vec<f64>> {
    (0..s.channels())
        .map(|j| {
            let x = s.channel(j);
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
            let var: f64 = dev.iter().map(|d| d * d).sum();
            (0..=max_lag)
                .map(|l| {
                    if l == 0 {
                        1.0
                    } else if var == 0.0 || l >= dev.len() {
                        0.0
                    } else {
                        dev.iter().zip(&dev[l..]).map(|(a, b)| a * b).sum::<f64>() / var
                    }
                })
                .collect()
        })
        .collect()
}

/// Smallest lag at which the channel-averaged autocorrelation falls below
/// `1/e`, or `max_lag` when it never does.
pub fn estimate_lag(s: &SeriesSample, max_lag: usize) -> Result<usize> {
    if max_lag == 0 {
        return Err(EarcError::Validation("max_lag must be positive".into()));
    }
    if s.len() <= 3 * max_lag {
        return Err(EarcError::InsufficientData {
            needed: 3 * max_lag + 1,
            got: s.len(),
        });
    }
    let acf = autocorrelation(s, max_lag);
    let threshold = (-1.0f64).exp();
    for l in 1..=max_lag {
        let mean = acf.iter().map(|c| c[l]).sum::<f64>() / acf.len() as f64;
        if mean < threshold {
            return Ok(l);
        }
    }
    Ok(max_lag)
}
