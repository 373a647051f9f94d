//! Synthetic benchmark systems and their symmetry groups.
//!
//! - A planar Hamiltonian system `q' = p³ − p`, `p' = q³ − q` with Klein
//!   four-group symmetry, integrated with fixed-step RK4.
//! - A five-bank competition map `p ↦ p + r ⊙ p ⊙ (1 − N p)` with circulant
//!   interactions, cyclic-group symmetric when `r` is uniform.
//! - Planted linear maps for oracle tests.

use crate::embedding::SeriesSample;
use crate::error::{EarcError, Result};
use crate::groups::{close_group, GroupRep, DEFAULT_MATCH_TOL, DEFAULT_MAX_ORDER};
use crate::tensorops::{hadamard, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianConfig {
    pub q0: f64,
    pub p0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for HamiltonianConfig {
    /// `(0.5, 0)`, a point on a closed orbit around the centre `(1, 0)`.
    fn default() -> Self {
        HamiltonianConfig {
            q0: 0.5,
            p0: 0.0,
            dt: 0.01,
            steps: 600,
        }
    }
}

impl HamiltonianConfig {
    /// Initial condition `(1, 0)`. It is an equilibrium of the vector field.
    pub fn printed_initial_condition() -> Self {
        HamiltonianConfig {
            q0: 1.0,
            p0: 0.0,
            ..Self::default()
        }
    }
}

pub fn hamiltonian_field(state: [f64; 2]) -> [f64; 2] {
    let [q, p] = state;
    [p * p * p - p, q * q * q - q]
}

/// `H(q, p) = p⁴/4 − p²/2 + q²/2 − q⁴/4`, conserved along orbits.
pub fn hamiltonian_energy(q: f64, p: f64) -> f64 {
    p.powi(4) / 4.0 - p * p / 2.0 + q * q / 2.0 - q.powi(4) / 4.0
}

/// One classical Runge-Kutta step.
pub fn rk4_step<const N: usize>(f: impl Fn([f64; N]) -> [f64; N], y: [f64; N], dt: f64) -> [f64; N] {
    let add = |a: [f64; N], b: [f64; N], s: f64| {
        let mut out = a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(add(y, k1, dt / 2.0));
    let k3 = f(add(y, k2, dt / 2.0));
    let k4 = f(add(y, k3, dt));
    let mut out = y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Two-channel `(q, p)` series with `steps + 1` rows.
pub fn hamiltonian_generate(cfg: &HamiltonianConfig) -> Result<SeriesSample> {
    if !(cfg.dt > 0.0) || cfg.steps == 0 {
        return Err(EarcError::Validation("need dt > 0 and steps >= 1".into()));
    }
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut y = [cfg.q0, cfg.p0];
    rows.push(y);
    for step in 1..=cfg.steps {
        y = rk4_step(hamiltonian_field, y, cfg.dt);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(EarcError::Divergence {
                step,
                reason: "non-finite Hamiltonian state".into(),
            });
        }
        rows.push(y);
    }
    SeriesSample::from_rows(&rows)
}

/// The circulant bank-interaction matrix; every row sums to 3.1.
pub fn bank_interactions() -> DenseMatrix {
    DenseMatrix::from_rows(&[
        [1.0, 1.1, 0.0, 0.0, 1.0],
        [1.0, 1.0, 1.1, 0.0, 0.0],
        [0.0, 1.0, 1.0, 1.1, 0.0],
        [0.0, 0.0, 1.0, 1.0, 1.1],
        [1.1, 0.0, 0.0, 1.0, 1.0],
    ])
    .expect("static matrix")
}

pub const DEFAULT_GROWTH_RATE: f64 = 0.376;

#[derive(Debug, Clone, PartialEq)]
pub struct CompetitionConfig {
    pub p0: Vec<f64>,
    pub r: Vec<f64>,
    pub interactions: DenseMatrix,
    pub steps: usize,
}

impl Default for CompetitionConfig {
    fn default() -> Self {
        CompetitionConfig {
            p0: vec![0.2, 0.35, 0.5, 0.65, 0.8],
            r: vec![DEFAULT_GROWTH_RATE; 5],
            interactions: bank_interactions(),
            steps: 425,
        }
    }
}

impl CompetitionConfig {
    fn validate(&self) -> Result<()> {
        let n = self.p0.len();
        if n == 0 || self.r.len() != n || self.interactions.shape() != (n, n) {
            return Err(EarcError::Validation(format!(
                "competition needs p0, r of equal dim and an {n}x{n} interaction matrix"
            )));
        }
        if self.p0.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(EarcError::Validation("initial rankings must lie in (0, 1)".into()));
        }
        if self.interactions.as_slice().iter().any(|&v| !(v >= 0.0)) {
            return Err(EarcError::Validation("interaction entries must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `p + r ⊙ p ⊙ (1 − N p)`.
pub fn competition_step(p: &[f64], r: &[f64], interactions: &DenseMatrix) -> Result<Vec<f64>> {
    let np = interactions.matvec(p)?;
    let slack: Vec<f64> = np.iter().map(|v| 1.0 - v).collect();
    let growth = hadamard(&hadamard(r, p)?, &slack)?;
    Ok(p.iter().zip(&growth).map(|(a, b)| a + b).collect())
}

/// Iterates [`competition_step`], returning `steps + 1` rows.
pub fn competition_generate(cfg: &CompetitionConfig) -> Result<SeriesSample> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut p = cfg.p0.clone();
    rows.push(p.clone());
    for step in 1..=cfg.steps {
        p = competition_step(&p, &cfg.r, &cfg.interactions)?;
        if p.iter().any(|v| !(v.abs() <= 10.0)) {
            return Err(EarcError::Divergence {
                step,
                reason: "competition state left [-10, 10]".into(),
            });
        }
        rows.push(p.clone());
    }
    SeriesSample::from_rows(&rows)
}

/// Cyclic shift sending coordinate `i + 1` to `i`.
pub fn cyclic_shift(n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, (i + 1) % n)] = 1.0;
    }
    m
}

/// Built-in representations: `"k4"` (swap and negation on ℝ²) and `"z5"`
/// (cyclic shift on ℝ⁵).
pub fn builtin_rep(name: &str) -> Result<GroupRep> {
    let generators = match name {
        "k4" => vec![
            DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?,
            DenseMatrix::identity(2).scale(-1.0),
        ],
        "z5" => vec![cyclic_shift(5)],
        other => return Err(EarcError::UnknownName(other.to_string())),
    };
    close_group(&generators, DEFAULT_MATCH_TOL, DEFAULT_MAX_ORDER)
}

/// `x_{t+1} = A x_t`.
pub fn planted_linear(a: &DenseMatrix, x0: &[f64], steps: usize) -> Result<SeriesSample> {
    if !a.is_square() || a.rows() != x0.len() {
        return Err(EarcError::shape(format!(
            "planted map is {}x{} but x0 has dim {}",
            a.rows(),
            a.cols(),
            x0.len()
        )));
    }
    let mut rows = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    rows.push(x.clone());
    for step in 1..=steps {
        x = a.matvec(&x)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(EarcError::Divergence {
                step,
                reason: "planted linear state overflowed".into(),
            });
        }
        rows.push(x.clone());
    }
    SeriesSample::from_rows(&rows)
}
