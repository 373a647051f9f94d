//! Time-delay dilation, the polynomial Kronecker embedding and its
//! monomial compression, and assembly of the training data matrices.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EarcError, Result};
use crate::tensorops::{check_entries, DenseMatrix, DEFAULT_ENTRY_CAP};

/// A multichannel series: row `t` holds the sample `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSample {
    values: DenseMatrix,
}

impl SeriesSample {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.cols() == 0 {
            return Err(EarcError::Validation("series needs at least one channel".into()));
        }
        if !values.is_finite() {
            return Err(EarcError::Validation("series contains non-finite values".into()));
        }
        Ok(SeriesSample { values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.values.col(j)
    }

    /// The first `count` samples.
    pub fn prefix(&self, count: usize) -> Result<SeriesSample> {
        if count == 0 || count > self.len() {
            return Err(EarcError::InsufficientData {
                needed: count.max(1),
                got: self.len(),
            });
        }
        let data = self.values.as_slice()[..count * self.channels()].to_vec();
        Ok(SeriesSample {
            values: DenseMatrix::from_row_major(count, self.channels(), data)?,
        })
    }

    /// Delay window ending at sample `end` (0-based, inclusive).
    pub fn window_ending_at(&self, end: usize, lag: usize) -> Result<DelayWindow> {
        if lag == 0 {
            return Err(EarcError::Validation("lag must be positive".into()));
        }
        if end >= self.len() || end + 1 < lag {
            return Err(EarcError::InsufficientData {
                needed: lag,
                got: (end + 1).min(self.len()),
            });
        }
        let n = self.channels();
        let mut data = Vec::with_capacity(n * lag);
        for j in 0..n {
            for t in end + 1 - lag..=end {
                data.push(self.values[(t, j)]);
            }
        }
        Ok(DelayWindow { n, lag, data })
    }
}

/// Dilated state: `n` channel blocks of `lag` entries each, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayWindow {
    n: usize,
    lag: usize,
    data: Vec<f64>,
}

impl DelayWindow {
    pub fn new(n: usize, lag: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || lag == 0 {
            return Err(EarcError::Validation("window dimensions must be positive".into()));
        }
        if data.len() != n * lag {
            return Err(EarcError::shape(format!(
                "window of {n} channels x lag {lag} needs {} entries, got {}",
                n * lag,
                data.len()
            )));
        }
        Ok(DelayWindow { n, lag, data })
    }

    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The most recent sample, one entry per channel.
    pub fn newest(&self) -> Vec<f64> {
        newest_entries(&self.data, self.n, self.lag)
    }

    /// Drops the oldest sample of every channel and appends `sample`.
    pub fn shifted(&self, sample: &[f64]) -> DelayWindow {
        assert_eq!(sample.len(), self.n);
        let mut data = Vec::with_capacity(self.data.len());
        for (j, &s) in sample.iter().enumerate() {
            let block = &self.data[j * self.lag..(j + 1) * self.lag];
            data.extend_from_slice(&block[1..]);
            data.push(s);
        }
        DelayWindow {
            n: self.n,
            lag: self.lag,
            data,
        }
    }
}

/// Entry `jL + L − 1` of each channel block.
pub fn newest_entries(state: &[f64], n: usize, lag: usize) -> Vec<f64> {
    (0..n).map(|j| state[j * lag + lag - 1]).collect()
}

/// `d_p(n) = n + n² + … + nᵖ + 1`, in exact integer arithmetic.
pub fn embed_dim(n: usize, p: usize) -> Result<usize> {
    embed_dim_capped(n, p, DEFAULT_ENTRY_CAP)
}

pub fn embed_dim_capped(n: usize, p: usize, cap: usize) -> Result<usize> {
    if n == 0 || p == 0 {
        return Err(EarcError::Validation("embedding dimensions must be positive".into()));
    }
    let mut total: u128 = 1;
    let mut power: u128 = 1;
    for _ in 0..p {
        power = power.saturating_mul(n as u128);
        total = total.saturating_add(power);
        if total > cap as u128 {
            break;
        }
    }
    check_entries(total, cap)
}

/// Order-`p` embedding `[x; x⊗x; …; x^{⊗p}; 1]`.
///
/// Each degree-`k` entry is multiplied out in ascending variable order, so
/// coordinates holding the same monomial are bitwise equal.
pub fn eth(x: &[f64], p: usize) -> Result<Vec<f64>> {
    let dim = embed_dim(x.len(), p)?;
    let m = x.len();
    let mut out = Vec::with_capacity(dim);
    out.extend_from_slice(x);
    let mut tuple = Vec::with_capacity(p);
    let mut sorted = Vec::with_capacity(p);
    for k in 2..=p {
        tuple.clear();
        tuple.resize(k, 0usize);
        for local in 0..m.pow(k as u32) {
            if local > 0 {
                odometer_step(&mut tuple, m);
            }
            sorted.clear();
            sorted.extend_from_slice(&tuple);
            sorted.sort_unstable();
            out.push(sorted[1..].iter().fold(x[sorted[0]], |acc, &i| acc * x[i]));
        }
    }
    out.push(1.0);
    Ok(out)
}

/// Advances a Kronecker-order multi-index, last factor fastest.
fn odometer_step(tuple: &mut [usize], base: usize) {
    let mut pos = tuple.len() - 1;
    loop {
        tuple[pos] += 1;
        if tuple[pos] < base {
            return;
        }
        tuple[pos] = 0;
        pos -= 1;
    }
}

/// All delay windows `x_L(t)` for `t = L..T`.
pub fn delay_windows(s: &SeriesSample, lag: usize) -> Result<Vec<DelayWindow>> {
    if lag == 0 {
        return Err(EarcError::Validation("lag must be positive".into()));
    }
    if s.len() < lag {
        return Err(EarcError::InsufficientData {
            needed: lag,
            got: s.len(),
        });
    }
    (lag - 1..s.len()).map(|end| s.window_ending_at(end, lag)).collect()
}

/// Deduplication of the monomial coordinates of the order-`p` embedding:
/// one representative coordinate per distinct monomial, plus the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    dim_in: usize,
    order: usize,
    full_dim: usize,
    rep_index: Vec<usize>,
    class_of: Vec<usize>,
    /// Sorted variable indices of each class; empty for the constant.
    monomials: Vec<Vec<u32>>,
}

impl CompressionPlan {
    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn reduced_dim(&self) -> usize {
        self.rep_index.len()
    }

    pub fn rep_index(&self) -> &[usize] {
        &self.rep_index
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn monomial(&self, class: usize) -> &[u32] {
        &self.monomials[class]
    }

    /// Start of the degree-`k` block in the full embedding (`k` in `1..=p`).
    pub fn block_offset(&self, k: usize) -> usize {
        (1..k).map(|j| self.dim_in.pow(j as u32)).sum()
    }

    pub fn reduce(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.full_dim {
            return Err(EarcError::shape(format!(
                "reduce expects dim {}, got {}",
                self.full_dim,
                full.len()
            )));
        }
        Ok(self.rep_index.iter().map(|&i| full[i]).collect())
    }

    pub fn expand(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        if reduced.len() != self.reduced_dim() {
            return Err(EarcError::shape(format!(
                "expand expects dim {}, got {}",
                self.reduced_dim(),
                reduced.len()
            )));
        }
        Ok(self.class_of.iter().map(|&c| reduced[c]).collect())
    }

    /// `reduce(eth(x, p))`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim_in {
            return Err(EarcError::shape(format!(
                "plan built for inputs of dim {}, got {}",
                self.dim_in,
                x.len()
            )));
        }
        self.reduce(&eth(x, self.order)?)
    }

    /// Dense `q x d_p` selection matrix R.
    pub fn selection_matrix(&self) -> DenseMatrix {
        let mut r = DenseMatrix::zeros(self.reduced_dim(), self.full_dim);
        for (c, &i) in self.rep_index.iter().enumerate() {
            r[(c, i)] = 1.0;
        }
        r
    }

    /// Dense `d_p x q` expansion matrix E.
    pub fn expansion_matrix(&self) -> DenseMatrix {
        let mut e = DenseMatrix::zeros(self.full_dim, self.reduced_dim());
        for (i, &c) in self.class_of.iter().enumerate() {
            e[(i, c)] = 1.0;
        }
        e
    }
}

/// `Σ_{k=1..p} C(m+k−1, k) + 1`: the number of distinct monomials of degree
/// `1..=p` in `m` variables, plus the constant.
pub fn reduced_dim_formula(m: usize, p: usize) -> u128 {
    let mut total: u128 = 1;
    for k in 1..=p {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (m + i) as u128 / (i + 1) as u128;
        }
        total += c;
    }
    total
}

pub fn compression_plan(dim_in: usize, p: usize) -> Result<CompressionPlan> {
    let full_dim = embed_dim(dim_in, p)?;
    let mut rep_index = Vec::new();
    let mut class_of = Vec::with_capacity(full_dim);
    let mut monomials = Vec::new();
    let mut offset = 0;
    for k in 1..=p {
        let block = dim_in.pow(k as u32);
        let mut classes: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut tuple = vec![0usize; k];
        for local in 0..block {
            if local > 0 {
                odometer_step(&mut tuple, dim_in);
            }
            let mut key: Vec<u32> = tuple.iter().map(|&i| i as u32).collect();
            key.sort_unstable();
            let class = *classes.entry(key.clone()).or_insert_with(|| {
                rep_index.push(offset + local);
                monomials.push(key);
                rep_index.len() - 1
            });
            class_of.push(class);
        }
        offset += block;
    }
    rep_index.push(offset);
    monomials.push(Vec::new());
    class_of.push(rep_index.len() - 1);
    debug_assert_eq!(class_of.len(), full_dim);
    Ok(CompressionPlan {
        dim_in,
        order: p,
        full_dim,
        rep_index,
        class_of,
        monomials,
    })
}

/// Training matrices: `H0r` (q x m) with columns `reduce(eth(x_L(t)))` and
/// `H1` (nL x m) with columns `x_L(t+1)`, for `t = L..T−1`.
pub fn build_data_matrices(
    s: &SeriesSample,
    lag: usize,
    p: usize,
    plan: &CompressionPlan,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let nl = s.channels() * lag;
    if plan.dim_in() != nl || plan.order() != p {
        return Err(EarcError::shape(format!(
            "plan built for dim {} order {}, data needs dim {nl} order {p}",
            plan.dim_in(),
            plan.order()
        )));
    }
    if s.len() < lag + 1 {
        return Err(EarcError::InsufficientData {
            needed: lag + 1,
            got: s.len(),
        });
    }
    let windows = delay_windows(s, lag)?;
    let m = windows.len() - 1;
    let mut h0r = DenseMatrix::zeros(plan.reduced_dim(), m);
    let mut h1 = DenseMatrix::zeros(nl, m);
    for (i, pair) in windows.windows(2).enumerate() {
        h0r.set_col(i, &plan.features(pair[0].as_slice())?);
        h1.set_col(i, pair[1].as_slice());
    }
    Ok((h0r, h1))
}
