//! Dense linear-algebra kernels: Kronecker products and powers, column-stacking
//! vectorization, direct sums, Hadamard products, SVD null spaces and
//! truncated least squares.
//!
//! Vectors are plain `[f64]` slices. Matrices are [`DenseMatrix`], stored
//! row-major. The SVD work is delegated to `nalgebra`.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{EarcError, Result};

/// Largest number of entries any Kronecker-type construction may produce.
pub const DEFAULT_ENTRY_CAP: usize = 1 << 31;

/// Default relative tolerance for numerical kernels.
pub const DEFAULT_NULL_TOL: f64 = 1e-10;

/// Default relative truncation for least squares.
pub const DEFAULT_LSTSQ_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;

/// Row-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EarcError::shape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(EarcError::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column matrix holding `v`.
    pub fn column(v: &[f64]) -> Self {
        DenseMatrix {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_row_major(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows, "column length mismatch");
        for (r, &x) in v.iter().enumerate() {
            self[(r, c)] = x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(EarcError::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(EarcError::shape(format!(
                "cannot apply {}x{} matrix to vector of dim {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(EarcError::shape(format!(
                "axpy shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(EarcError::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Checks that a construction with `entries` outputs fits under `cap`.
pub fn check_entries(entries: u128, cap: usize) -> Result<usize> {
    if entries > cap as u128 {
        return Err(EarcError::DimensionOverflow {
            requested: entries,
            cap,
        });
    }
    Ok(entries as usize)
}

/// Kronecker product with the default entry cap.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    kron_capped(a, b, DEFAULT_ENTRY_CAP)
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] * b`.
pub fn kron_capped(a: &DenseMatrix, b: &DenseMatrix, cap: usize) -> Result<DenseMatrix> {
    let rows = a.rows as u128 * b.rows as u128;
    let cols = a.cols as u128 * b.cols as u128;
    check_entries(rows * cols, cap)?;
    let (rows, cols) = (rows as usize, cols as usize);
    let mut out = DenseMatrix::zeros(rows, cols);
    for ai in 0..a.rows {
        for aj in 0..a.cols {
            let s = a[(ai, aj)];
            if s == 0.0 {
                continue;
            }
            for bi in 0..b.rows {
                let r = ai * b.rows + bi;
                for bj in 0..b.cols {
                    out[(r, aj * b.cols + bj)] = s * b[(bi, bj)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of two vectors.
pub fn kron_vec(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for &a in x {
        out.extend(y.iter().map(|&b| a * b));
    }
    out
}

/// `x ⊗ x ⊗ … ⊗ x` with `k` factors, built as `x ⊗ x^{⊗(k-1)}`.
pub fn kron_power(x: &[f64], k: usize) -> Result<Vec<f64>> {
    kron_power_capped(x, k, DEFAULT_ENTRY_CAP)
}

pub fn kron_power_capped(x: &[f64], k: usize, cap: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(EarcError::Validation("Kronecker power needs k >= 1".into()));
    }
    let dim = (x.len() as u128)
        .checked_pow(k as u32)
        .unwrap_or(u128::MAX);
    check_entries(dim, cap)?;
    let mut acc = x.to_vec();
    for _ in 1..k {
        acc = kron_vec(x, &acc);
    }
    Ok(acc)
}

/// Applies `a^{⊗k}` (square `a`) to a vector of dimension `a.rows()^k`
/// without forming the power, one tensor mode at a time.
pub fn kron_power_apply(a: &DenseMatrix, k: usize, v: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(EarcError::shape("kron_power_apply needs a square factor"));
    }
    let n = a.rows;
    let expected = n.checked_pow(k as u32);
    if expected != Some(v.len()) {
        return Err(EarcError::shape(format!(
            "vector of dim {} does not match {n}^{k}",
            v.len()
        )));
    }
    let mut cur = v.to_vec();
    let mut next = vec![0.0; cur.len()];
    for mode in 0..k {
        let right = n.pow((k - 1 - mode) as u32);
        let left = cur.len() / (n * right);
        next.iter_mut().for_each(|x| *x = 0.0);
        for l in 0..left {
            for i in 0..n {
                let out_base = (l * n + i) * right;
                for j in 0..n {
                    let s = a[(i, j)];
                    if s == 0.0 {
                        continue;
                    }
                    let in_base = (l * n + j) * right;
                    for r in 0..right {
                        next[out_base + r] += s * cur[in_base + r];
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Column-stacking vectorization.
pub fn vec(a: &DenseMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.rows * a.cols);
    for c in 0..a.cols {
        for r in 0..a.rows {
            out.push(a[(r, c)]);
        }
    }
    out
}

/// Inverse of [`vec`] for a matrix with `rows` rows.
pub fn unvec(v: &[f64], rows: usize) -> Result<DenseMatrix> {
    if rows == 0 || v.len() % rows != 0 {
        return Err(EarcError::shape(format!(
            "vector of dim {} cannot be unstacked into {rows} rows",
            v.len()
        )));
    }
    let cols = v.len() / rows;
    let mut out = DenseMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            out[(r, c)] = v[c * rows + r];
        }
    }
    Ok(out)
}

/// Block-diagonal assembly of square blocks.
pub fn direct_sum(blocks: &[DenseMatrix]) -> Result<DenseMatrix> {
    let mut n = 0;
    for (i, b) in blocks.iter().enumerate() {
        if !b.is_square() {
            return Err(EarcError::shape(format!(
                "block {i} is {}x{}, direct sums need square blocks",
                b.rows, b.cols
            )));
        }
        n += b.rows;
    }
    let mut out = DenseMatrix::zeros(n, n);
    let mut offset = 0;
    for b in blocks {
        for r in 0..b.rows {
            out.row_mut(offset + r)[offset..offset + b.cols].copy_from_slice(b.row(r));
        }
        offset += b.rows;
    }
    Ok(out)
}

pub fn hadamard(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(EarcError::shape(format!(
            "Hadamard product of dims {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).collect())
}

/// Singular values and right singular vectors, with `v` the full
/// `cols x cols` orthogonal factor (columns are singular directions).
pub(crate) struct RightSvd {
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Full right SVD. Wide inputs are padded with zero rows so that nalgebra
/// returns every right singular vector; zero rows do not change the kernel.
pub(crate) fn right_svd(a: &DenseMatrix) -> Result<RightSvd> {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(&a.to_nalgebra());
        p
    } else {
        a.to_nalgebra()
    };
    let svd = SVD::try_new(padded, false, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(EarcError::NumericalFailure { rows: m, cols: n })?;
    let v_t = svd.v_t.ok_or(EarcError::NumericalFailure { rows: m, cols: n })?;
    Ok(RightSvd {
        singular_values: svd.singular_values.iter().copied().collect(),
        v: v_t.transpose(),
    })
}

/// Orthonormal basis of the numerical kernel of `a`: right singular
/// vectors with `σ ≤ rel_tol · σ_max` (every direction when `σ_max = 0`).
pub fn null_space(a: &DenseMatrix, rel_tol: f64) -> Result<Vec<Vec<f64>>> {
    if !(rel_tol > 0.0) {
        return Err(EarcError::Validation(format!(
            "null-space tolerance must be positive, got {rel_tol}"
        )));
    }
    let n = a.cols;
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.rows == 0 {
        return Ok(standard_basis(n));
    }
    let svd = right_svd(a)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    Ok(svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| sigma_max == 0.0 || s <= cutoff)
        .map(|(i, _)| svd.v.column(i).iter().copied().collect())
        .collect())
}

pub(crate) fn standard_basis(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect()
}

/// Kernel of the symmetric positive semidefinite matrix `s` from its
/// eigendecomposition: eigenvectors with `λ ≤ rel_tol · λ_max`.
pub fn null_space_symmetric(s: &DenseMatrix, rel_tol: f64) -> Result<Vec<Vec<f64>>> {
    if !s.is_square() {
        return Err(EarcError::shape("symmetric kernel needs a square matrix"));
    }
    let eig = SymmetricEigen::try_new(s.to_nalgebra(), f64::EPSILON, SVD_MAX_ITER)
        .ok_or(EarcError::NumericalFailure {
            rows: s.rows,
            cols: s.cols,
        })?;
    let lmax = eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| lmax == 0.0 || l.abs() <= rel_tol * lmax)
        .map(|(i, _)| eig.eigenvectors.column(i).iter().copied().collect())
        .collect())
}

/// Outcome of a truncated least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Number of singular directions retained.
    pub rank: usize,
    pub sigma_max: f64,
}

/// Minimum-norm least-squares solution of `a x = b` with singular values
/// below `rel_tol · σ_max` truncated. With `sparsify = Some(s)` a greedy
/// orthogonal matching pursuit keeps at most `s` nonzero coefficients.
pub fn lstsq(a: &DenseMatrix, b: &[f64], rel_tol: f64, sparsify: Option<usize>) -> Result<Vec<f64>> {
    lstsq_detailed(a, b, rel_tol, sparsify).map(|s| s.x)
}

pub fn lstsq_detailed(
    a: &DenseMatrix,
    b: &[f64],
    rel_tol: f64,
    sparsify: Option<usize>,
) -> Result<LstsqSolution> {
    if a.rows != b.len() {
        return Err(EarcError::shape(format!(
            "least squares with {} rows but rhs of dim {}",
            a.rows,
            b.len()
        )));
    }
    if !(rel_tol > 0.0) {
        return Err(EarcError::Validation(format!(
            "least-squares tolerance must be positive, got {rel_tol}"
        )));
    }
    match sparsify {
        None => svd_lstsq(a, b, rel_tol),
        Some(0) => Err(EarcError::Validation("sparsity level must be positive".into())),
        Some(s) => matching_pursuit(a, b, rel_tol, s),
    }
}

fn svd_lstsq(a: &DenseMatrix, b: &[f64], rel_tol: f64) -> Result<LstsqSolution> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(LstsqSolution {
            x: vec![0.0; n],
            rank: 0,
            sigma_max: 0.0,
        });
    }
    let svd = SVD::try_new(a.to_nalgebra(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(EarcError::NumericalFailure { rows: m, cols: n })?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(EarcError::NumericalFailure { rows: m, cols: n }),
    };
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    let mut x = vec![0.0; n];
    let mut rank = 0;
    // Fixed index order keeps the accumulation deterministic.
    for (i, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        let ub: f64 = u.column(i).iter().zip(b).map(|(p, q)| p * q).sum();
        let w = ub / s;
        for (xj, vj) in x.iter_mut().zip(v_t.row(i).iter()) {
            *xj += w * vj;
        }
    }
    Ok(LstsqSolution { x, rank, sigma_max })
}

fn matching_pursuit(a: &DenseMatrix, b: &[f64], rel_tol: f64, max_nonzero: usize) -> Result<LstsqSolution> {
    let n = a.cols;
    let col_norms: Vec<f64> = (0..n).map(|j| norm(&a.col(j))).collect();
    let b_norm = norm(b);
    let mut support: Vec<usize> = Vec::new();
    let mut residual = b.to_vec();
    let mut x = vec![0.0; n];
    let mut last = LstsqSolution {
        x: x.clone(),
        rank: 0,
        sigma_max: 0.0,
    };
    while support.len() < max_nonzero.min(n) {
        if norm(&residual) <= 1e-14 * b_norm.max(f64::MIN_POSITIVE) {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if col_norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let corr = (0..a.rows).map(|r| a[(r, j)] * residual[r]).sum::<f64>().abs() / col_norms[j];
            if best.is_none_or(|(_, c)| corr > c) {
                best = Some((j, corr));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);
        let mut sub = DenseMatrix::zeros(a.rows, support.len());
        for (k, &c) in support.iter().enumerate() {
            for r in 0..a.rows {
                sub[(r, k)] = a[(r, c)];
            }
        }
        last = svd_lstsq(&sub, b, rel_tol)?;
        x.iter_mut().for_each(|v| *v = 0.0);
        for (k, &c) in support.iter().enumerate() {
            x[c] = last.x[k];
        }
        let fitted = sub.matvec(&last.x)?;
        residual = b.iter().zip(&fitted).map(|(p, q)| p - q).collect();
    }
    Ok(LstsqSolution {
        x,
        rank: last.rank,
        sigma_max: last.sigma_max,
    })
}

/// Truncated Moore-Penrose pseudoinverse.
pub fn pinv(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    let mut out = DenseMatrix::zeros(n, m);
    if m == 0 || n == 0 {
        return Ok(out);
    }
    let svd = SVD::try_new(a.to_nalgebra(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(EarcError::NumericalFailure { rows: m, cols: n })?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(EarcError::NumericalFailure { rows: m, cols: n }),
    };
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s == 0.0 || s <= rel_tol * sigma_max {
            continue;
        }
        for i in 0..n {
            let vi = v_t[(k, i)] / s;
            if vi == 0.0 {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += vi * u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Orthogonal projector `Σ vᵢ vᵢᵀ` onto the span of orthonormal vectors.
pub fn projector(basis: &[Vec<f64>], dim: usize) -> DenseMatrix {
    let mut p = DenseMatrix::zeros(dim, dim);
    for v in basis {
        for i in 0..dim {
            if v[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                p[(i, j)] += v[i] * v[j];
            }
        }
    }
    p
}
