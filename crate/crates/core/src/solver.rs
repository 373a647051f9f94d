//! Equivariant coupling matrices: a basis of the intertwiner space
//! `{X : (g⊗I_L) X = X Ĝ_g for every generator g}`, least-squares fitting of
//! basis coefficients against training data, and the equivariance residual.
//!
//! The stacked constraint operator `K = [K_1; …; K_r]` with
//! `K_j = I_q ⊗ (g_j⊗I_L) − Ĝ_jᵀ ⊗ I_{nL}` acts on `vec(X)`. It is assembled
//! row-sparse and split into independent blocks (connected components of
//! the unknowns it couples); each block's kernel is taken by SVD. The
//! singular-value cutoff is shared across blocks, so the result equals the
//! kernel of the stacked matrix.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::embedding::CompressionPlan;
use crate::error::{EarcError, Result};
use crate::groups::{reduced_action, window_action, GroupRep};
use crate::tensorops::{self, DenseMatrix, DEFAULT_LSTSQ_TOL};

/// `g⊗I_L` together with its compressed lift `Ĝ_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementAction {
    pub window: DenseMatrix,
    pub reduced: DenseMatrix,
}

impl ElementAction {
    pub fn new(g: &DenseMatrix, lag: usize, plan: &CompressionPlan) -> Result<Self> {
        Ok(ElementAction {
            window: window_action(g, lag)?,
            reduced: reduced_action(g, lag, plan)?,
        })
    }

    /// `‖(g⊗I_L) W − W Ĝ_g‖_F`.
    pub fn commutator_norm(&self, w: &DenseMatrix) -> Result<f64> {
        let lhs = self.window.matmul(w)?;
        let rhs = w.matmul(&self.reduced)?;
        Ok(lhs.sub(&rhs)?.frobenius_norm())
    }
}

pub fn element_actions(group: &GroupRep, lag: usize, plan: &CompressionPlan) -> Result<Vec<ElementAction>> {
    group.elements().iter().map(|g| ElementAction::new(g, lag, plan)).collect()
}

/// Orthonormal basis `X_1..X_M` (each `nL x q`) of the equivariant couplings.
#[derive(Debug, Clone)]
pub struct EquivariantBasis {
    nl: usize,
    q: usize,
    basis: Vec<DenseMatrix>,
    actions: Vec<ElementAction>,
    null_tol: f64,
}

impl EquivariantBasis {
    pub fn nl(&self) -> usize {
        self.nl
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.basis
    }

    /// Actions of every group element (not only generators).
    pub fn actions(&self) -> &[ElementAction] {
        &self.actions
    }

    pub fn null_tol(&self) -> f64 {
        self.null_tol
    }
}

/// One row of the stacked constraint operator as `(unknown, value)` pairs.
type SparseRow = Vec<(usize, f64)>;

fn check_plan(group: &GroupRep, lag: usize, plan: &CompressionPlan) -> Result<()> {
    if group.n() * lag != plan.dim_in() {
        return Err(EarcError::shape(format!(
            "group of dim {} with lag {lag} does not match plan input dim {}",
            group.n(),
            plan.dim_in()
        )));
    }
    Ok(())
}

fn constraint_rows(gen: &ElementAction, nl: usize, q: usize) -> Vec<SparseRow> {
    let a = &gen.window;
    let gh = &gen.reduced;
    let mut rows = Vec::with_capacity(nl * q);
    // Row (a_row, b) of vec((g⊗I_L)X − XĜ); vec index of X[r, c] is c·nL + r.
    for b in 0..q {
        for ar in 0..nl {
            let mut row: SparseRow = Vec::new();
            for c in 0..nl {
                let v = a[(ar, c)];
                if v != 0.0 {
                    row.push((b * nl + c, v));
                }
            }
            for d in 0..q {
                let v = gh[(d, b)];
                if v != 0.0 {
                    row.push((d * nl + ar, -v));
                }
            }
            row.sort_by_key(|e| e.0);
            let mut merged: SparseRow = Vec::with_capacity(row.len());
            for (u, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == u => last.1 += v,
                    _ => merged.push((u, v)),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            if !merged.is_empty() {
                rows.push(merged);
            }
        }
    }
    rows
}

/// Largest number of entries the basis construction may hold at once.
pub const MAX_BASIS_ENTRIES: usize = 1 << 27;

fn check_basis_entries(entries: u128) -> Result<()> {
    if entries > MAX_BASIS_ENTRIES as u128 {
        return Err(EarcError::MemoryCap {
            entries: usize::try_from(entries).unwrap_or(usize::MAX),
            cap: MAX_BASIS_ENTRIES,
        });
    }
    Ok(())
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root, keeping component labels stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Stacked constraint operator `[K_1; …; K_r]` as a dense matrix, built from
/// explicit Kronecker products. Intended for small instances and checks.
pub fn stacked_constraints(group: &GroupRep, lag: usize, plan: &CompressionPlan) -> Result<DenseMatrix> {
    check_plan(group, lag, plan)?;
    let nl = plan.dim_in();
    let q = plan.reduced_dim();
    let mut out = DenseMatrix::zeros(group.generators().len() * nl * q, nl * q);
    for (j, g) in group.generators().iter().enumerate() {
        let act = ElementAction::new(g, lag, plan)?;
        let left = tensorops::kron(&DenseMatrix::identity(q), &act.window)?;
        let right = tensorops::kron(&act.reduced.transpose(), &DenseMatrix::identity(nl))?;
        let k = left.sub(&right)?;
        for r in 0..k.rows() {
            out.row_mut(j * nl * q + r).copy_from_slice(k.row(r));
        }
    }
    Ok(out)
}

/// Basis of the equivariant coupling space for `group` acting on lag-`lag`
/// windows, in the compressed coordinates of `plan`.
pub fn equivariant_basis(
    group: &GroupRep,
    lag: usize,
    plan: &CompressionPlan,
    rel_tol: f64,
) -> Result<EquivariantBasis> {
    check_plan(group, lag, plan)?;
    if !(rel_tol > 0.0) {
        return Err(EarcError::Validation(format!(
            "null-space tolerance must be positive, got {rel_tol}"
        )));
    }
    let nl = plan.dim_in();
    let q = plan.reduced_dim();
    let unknowns = nl * q;
    let actions = element_actions(group, lag, plan)?;

    let mut rows: Vec<SparseRow> = Vec::new();
    for g in group.generators() {
        let act = ElementAction::new(g, lag, plan)?;
        rows.extend(constraint_rows(&act, nl, q));
    }

    let mut dsu = DisjointSet::new(unknowns);
    for row in &rows {
        for e in &row[1..] {
            dsu.union(row[0].0, e.0);
        }
    }
    // Components keyed by root, which is the smallest unknown in each.
    let mut component_of = vec![usize::MAX; unknowns];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut local_index = vec![0usize; unknowns];
    for u in 0..unknowns {
        let root = dsu.find(u);
        if component_of[root] == usize::MAX {
            component_of[root] = components.len();
            components.push(Vec::new());
        }
        let c = component_of[root];
        component_of[u] = c;
        local_index[u] = components[c].len();
        components[c].push(u);
    }
    let mut component_rows: Vec<Vec<usize>> = vec![Vec::new(); components.len()];
    for (i, row) in rows.iter().enumerate() {
        component_rows[component_of[row[0].0]].push(i);
    }
    let svd_entries: u128 = components
        .iter()
        .zip(&component_rows)
        .map(|(m, r)| (m.len() as u128) * (m.len().max(r.len()) as u128))
        .sum();
    check_basis_entries(svd_entries)?;

    // (component, singular value, local right singular vector)
    let mut candidates: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    let mut sigma_max: f64 = 0.0;
    for (ci, members) in components.iter().enumerate() {
        let row_ids = &component_rows[ci];
        if row_ids.is_empty() {
            for k in 0..members.len() {
                let mut e = vec![0.0; members.len()];
                e[k] = 1.0;
                candidates.push((ci, 0.0, e));
            }
            continue;
        }
        let mut block = DenseMatrix::zeros(row_ids.len(), members.len());
        for (r, &ri) in row_ids.iter().enumerate() {
            for &(u, v) in &rows[ri] {
                block[(r, local_index[u])] = v;
            }
        }
        let svd = tensorops::right_svd(&block)?;
        for (k, &s) in svd.singular_values.iter().enumerate() {
            sigma_max = sigma_max.max(s);
            candidates.push((ci, s, svd.v.column(k).iter().copied().collect()));
        }
    }

    let cutoff = rel_tol * sigma_max;
    let kept = |s: f64| sigma_max == 0.0 || s <= cutoff;
    let m = candidates.iter().filter(|c| kept(c.1)).count();
    check_basis_entries(m as u128 * unknowns as u128)?;
    let mut basis = Vec::with_capacity(m);
    for (ci, s, local) in candidates {
        if !kept(s) {
            continue;
        }
        let mut full = vec![0.0; unknowns];
        for (k, &u) in components[ci].iter().enumerate() {
            full[u] = local[k];
        }
        basis.push(tensorops::unvec(&full, nl)?);
    }
    Ok(EquivariantBasis {
        nl,
        q,
        basis,
        actions,
        null_tol: rel_tol,
    })
}

/// Same space as [`equivariant_basis`], from a single dense SVD of the
/// stacked constraint operator.
pub fn equivariant_basis_dense(
    group: &GroupRep,
    lag: usize,
    plan: &CompressionPlan,
    rel_tol: f64,
) -> Result<EquivariantBasis> {
    let k = stacked_constraints(group, lag, plan)?;
    let nl = plan.dim_in();
    let basis = tensorops::null_space(&k, rel_tol)?
        .iter()
        .map(|v| tensorops::unvec(v, nl))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivariantBasis {
        nl,
        q: plan.reduced_dim(),
        basis,
        actions: element_actions(group, lag, plan)?,
        null_tol: rel_tol,
    })
}

/// Options for the coefficient fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub lstsq_tol: f64,
    pub sparsify: Option<usize>,
    /// Tall designs with more columns than this use the normal equations.
    pub normal_equations_above: usize,
    /// Largest design matrix (entries) the fit will allocate.
    pub max_design_entries: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lstsq_tol: DEFAULT_LSTSQ_TOL,
            sparsify: None,
            normal_equations_above: 2000,
            max_design_entries: 1 << 27,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: Vec<f64>,
    /// `‖Ŵ H0r − H1‖_F / ‖H1‖_F` (absolute when `H1 = 0`).
    pub train_residual: f64,
    pub delta_em: f64,
    pub basis_dim: usize,
    pub design_rank: usize,
    pub null_tol: f64,
    pub lstsq_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify: Option<usize>,
}

pub fn fit_coefficients(
    basis: &EquivariantBasis,
    h0r: &DenseMatrix,
    h1: &DenseMatrix,
    opts: &FitOptions,
) -> Result<FitReport> {
    let (nl, q) = (basis.nl, basis.q);
    if h0r.rows() != q || h1.rows() != nl || h0r.cols() != h1.cols() {
        return Err(EarcError::shape(format!(
            "basis {nl}x{q} is incompatible with H0r {:?} and H1 {:?}",
            h0r.shape(),
            h1.shape()
        )));
    }
    let big_m = basis.len();
    if big_m == 0 {
        return Err(EarcError::NoFeasibleModel);
    }
    let m = h0r.cols();
    let entries = nl * m * big_m;
    if entries > opts.max_design_entries {
        return Err(EarcError::MemoryCap {
            entries,
            cap: opts.max_design_entries,
        });
    }
    let mut design = DenseMatrix::zeros(nl * m, big_m);
    for (j, x) in basis.basis.iter().enumerate() {
        design.set_col(j, &tensorops::vec(&x.matmul(h0r)?));
    }
    let rhs = tensorops::vec(h1);

    // Only tall designs gain from the Gram matrix; wide ones stay on the SVD.
    let tall = design.rows() > big_m;
    let (coefficients, design_rank) = if opts.sparsify.is_none() && tall && big_m > opts.normal_equations_above {
        normal_equations(&design, &rhs, opts.lstsq_tol)?
    } else {
        let sol = tensorops::lstsq_detailed(&design, &rhs, opts.lstsq_tol, opts.sparsify)?;
        (sol.x, sol.rank)
    };

    let w = assemble(basis, &coefficients)?;
    let train_residual = relative_residual(&w, h0r, h1)?;
    let delta_em = basis
        .actions
        .iter()
        .map(|a| a.commutator_norm(&w))
        .sum::<Result<f64>>()?;
    Ok(FitReport {
        coefficients,
        train_residual,
        delta_em,
        basis_dim: big_m,
        design_rank,
        null_tol: basis.null_tol,
        lstsq_tol: opts.lstsq_tol,
        sparsify: opts.sparsify,
    })
}

fn normal_equations(design: &DenseMatrix, rhs: &[f64], rel_tol: f64) -> Result<(Vec<f64>, usize)> {
    let gram = design.transpose().matmul(design)?;
    let moment = design.transpose().matvec(rhs)?;
    let n = gram.rows();
    let eig = SymmetricEigen::try_new(gram.to_nalgebra(), f64::EPSILON, 10_000)
        .ok_or(EarcError::NumericalFailure { rows: n, cols: n })?;
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    // Eigenvalues are squared singular values; the floor keeps roundoff out.
    let cutoff = (rel_tol * rel_tol).max(n as f64 * f64::EPSILON) * lmax;
    let mut x = vec![0.0; n];
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= cutoff || l <= 0.0 {
            continue;
        }
        rank += 1;
        let v = eig.eigenvectors.column(k);
        let w = v.iter().zip(&moment).map(|(a, b)| a * b).sum::<f64>() / l;
        for (xi, vi) in x.iter_mut().zip(v.iter()) {
            *xi += w * vi;
        }
    }
    Ok((x, rank))
}

fn relative_residual(w: &DenseMatrix, h0r: &DenseMatrix, h1: &DenseMatrix) -> Result<f64> {
    let err = w.matmul(h0r)?.sub(h1)?.frobenius_norm();
    let scale = h1.frobenius_norm();
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// `Ŵ = Σ c_j X_j`.
pub fn assemble(basis: &EquivariantBasis, coefficients: &[f64]) -> Result<DenseMatrix> {
    if coefficients.len() != basis.len() {
        return Err(EarcError::shape(format!(
            "{} coefficients for a basis of size {}",
            coefficients.len(),
            basis.len()
        )));
    }
    let mut w = DenseMatrix::zeros(basis.nl, basis.q);
    for (c, x) in coefficients.iter().zip(&basis.basis) {
        if *c != 0.0 {
            w.axpy(*c, x)?;
        }
    }
    Ok(w)
}

/// Per-element commutator norms `‖(g⊗I_L)W − WĜ_g‖_F`, in element order.
pub fn commutator_norms(
    w: &DenseMatrix,
    elements: &[DenseMatrix],
    lag: usize,
    plan: &CompressionPlan,
) -> Result<Vec<f64>> {
    if w.shape() != (plan.dim_in(), plan.reduced_dim()) {
        return Err(EarcError::shape(format!(
            "coupling is {:?}, plan needs {}x{}",
            w.shape(),
            plan.dim_in(),
            plan.reduced_dim()
        )));
    }
    elements
        .iter()
        .map(|g| ElementAction::new(g, lag, plan)?.commutator_norm(w))
        .collect()
}

/// Equivariance residual summed over every group element.
pub fn delta_em(w: &DenseMatrix, group: &GroupRep, lag: usize, plan: &CompressionPlan) -> Result<f64> {
    check_plan(group, lag, plan)?;
    Ok(commutator_norms(w, group.elements(), lag, plan)?.iter().sum())
}

/// Minimum-norm solution of `W H0r = H1` with no symmetry constraint.
pub fn unconstrained_fit(h0r: &DenseMatrix, h1: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    if h0r.cols() != h1.cols() {
        return Err(EarcError::shape(format!(
            "H0r has {} columns but H1 has {}",
            h0r.cols(),
            h1.cols()
        )));
    }
    h1.matmul(&tensorops::pinv(h0r, rel_tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_data_matrices, compression_plan, SeriesSample};
    use crate::groups::close_group;
    use crate::tensorops::{dot, projector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn neg_identity(n: usize) -> DenseMatrix {
        DenseMatrix::identity(n).scale(-1.0)
    }

    fn cyclic(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, (i + 1) % n)] = 1.0;
        }
        m
    }

    fn vec_basis(b: &EquivariantBasis) -> Vec<Vec<f64>> {
        b.matrices().iter().map(tensorops::vec).collect()
    }

    #[test]
    fn trivial_group_spans_everything() {
        let plan = compression_plan(3, 2).unwrap();
        let b = equivariant_basis(&GroupRep::trivial(3), 1, &plan, 1e-10).unwrap();
        assert_eq!(b.len(), 3 * plan.reduced_dim());
    }

    #[test]
    fn sign_group_kills_constant_column() {
        let group = close_group(&[neg_identity(2)], 1e-9, 8).unwrap();
        let plan = compression_plan(2, 1).unwrap();
        let b = equivariant_basis(&group, 1, &plan, 1e-10).unwrap();
        assert_eq!(b.len(), 4);
        for x in b.matrices() {
            assert_eq!(x[(0, 2)], 0.0);
            assert_eq!(x[(1, 2)], 0.0);
        }
    }

    #[test]
    fn basis_is_orthonormal_and_intertwines() {
        let group = close_group(&[cyclic(5)], 1e-9, 8).unwrap();
        let plan = compression_plan(5, 2).unwrap();
        let b = equivariant_basis(&group, 1, &plan, 1e-10).unwrap();
        assert!(!b.is_empty());
        let vs = vec_basis(&b);
        for (i, u) in vs.iter().enumerate() {
            for (j, v) in vs.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot(u, v) - expected).abs() <= 1e-10);
            }
        }
        for x in b.matrices() {
            for act in b.actions() {
                assert!(act.commutator_norm(x).unwrap() <= 1e-9 * x.frobenius_norm().max(1.0));
            }
        }
    }

    #[test]
    fn stacked_constraints_match_sparse_rows() {
        let group = close_group(&[cyclic(3), neg_identity(3)], 1e-9, 16).unwrap();
        let plan = compression_plan(3, 2).unwrap();
        let k = stacked_constraints(&group, 1, &plan).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..k.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = k.matvec(&x).unwrap();
        let (nl, q) = (plan.dim_in(), plan.reduced_dim());
        let mut sparse = Vec::new();
        for g in group.generators() {
            let act = ElementAction::new(g, 1, &plan).unwrap();
            let xm = tensorops::unvec(&x, nl).unwrap();
            let c = act.window.matmul(&xm).unwrap().sub(&xm.matmul(&act.reduced).unwrap()).unwrap();
            sparse.extend(tensorops::vec(&c));
        }
        assert_eq!(dense.len(), sparse.len());
        assert_eq!(k.rows(), group.generators().len() * nl * q);
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn block_and_dense_kernels_agree() {
        let g = DenseMatrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
        let group = close_group(&[g], 1e-9, 8).unwrap();
        let plan = compression_plan(4, 2).unwrap();
        let fast = equivariant_basis(&group, 2, &plan, 1e-10).unwrap();
        let dense = equivariant_basis_dense(&group, 2, &plan, 1e-10).unwrap();
        assert_eq!(fast.len(), dense.len());
        let dim = plan.dim_in() * plan.reduced_dim();
        let p1 = projector(&vec_basis(&fast), dim);
        let p2 = projector(&vec_basis(&dense), dim);
        assert!(p1.max_abs_diff(&p2) <= 1e-8);
    }

    #[test]
    fn generators_suffice_for_all_elements() {
        let swap = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let group = close_group(&[swap, neg_identity(2)], 1e-9, 8).unwrap();
        let plan = compression_plan(4, 3).unwrap();
        let b = equivariant_basis(&group, 2, &plan, 1e-10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = assemble(&b, &c).unwrap();
        for n in commutator_norms(&w, group.elements(), 2, &plan).unwrap() {
            assert!(n <= 1e-9);
        }
    }

    #[test]
    fn planted_coefficients_are_recovered() {
        let group = close_group(&[cyclic(3)], 1e-9, 8).unwrap();
        let plan = compression_plan(3, 2).unwrap();
        let b = equivariant_basis(&group, 1, &plan, 1e-10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h0r = DenseMatrix::from_row_major(
            plan.reduced_dim(),
            40,
            (0..plan.reduced_dim() * 40).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let h1 = b.matrices()[0].matmul(&h0r).unwrap();
        let report = fit_coefficients(&b, &h0r, &h1, &FitOptions::default()).unwrap();
        assert!((report.coefficients[0] - 1.0).abs() <= 1e-10);
        for c in &report.coefficients[1..] {
            assert!(c.abs() <= 1e-10);
        }
        assert!(report.train_residual <= 1e-10);
        assert!(report.delta_em <= 1e-10);

        let ne = FitOptions {
            normal_equations_above: 0,
            ..FitOptions::default()
        };
        let report = fit_coefficients(&b, &h0r, &h1, &ne).unwrap();
        assert!(report.train_residual <= 1e-7);
    }

    #[test]
    fn affine_interpolation_through_two_points() {
        let s = SeriesSample::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let plan = compression_plan(1, 1).unwrap();
        let (h0r, h1) = build_data_matrices(&s, 1, 1, &plan).unwrap();
        let b = equivariant_basis(&GroupRep::trivial(1), 1, &plan, 1e-10).unwrap();
        let report = fit_coefficients(&b, &h0r, &h1, &FitOptions::default()).unwrap();
        assert!(report.train_residual <= 1e-12);
        let w = assemble(&b, &report.coefficients).unwrap();
        // x_{t+1} = x_t + 1 through (1, 2) and (2, 3).
        assert!((w[(0, 0)] - 1.0).abs() <= 1e-12);
        assert!((w[(0, 1)] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_basis_is_infeasible() {
        let plan = compression_plan(1, 1).unwrap();
        let b = EquivariantBasis {
            nl: 1,
            q: 2,
            basis: Vec::new(),
            actions: Vec::new(),
            null_tol: 1e-10,
        };
        let h = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            fit_coefficients(&b, &h, &DenseMatrix::zeros(1, 3), &FitOptions::default()),
            Err(EarcError::NoFeasibleModel)
        ));
        let _ = plan;
    }

    #[test]
    fn design_cap_reports_memory() {
        let plan = compression_plan(2, 2).unwrap();
        let b = equivariant_basis(&GroupRep::trivial(2), 1, &plan, 1e-10).unwrap();
        let opts = FitOptions {
            max_design_entries: 10,
            ..FitOptions::default()
        };
        let h0r = DenseMatrix::zeros(plan.reduced_dim(), 5);
        let h1 = DenseMatrix::zeros(2, 5);
        assert!(matches!(
            fit_coefficients(&b, &h0r, &h1, &opts),
            Err(EarcError::MemoryCap { .. })
        ));
    }

    #[test]
    fn assemble_examples() {
        let plan = compression_plan(2, 1).unwrap();
        let b = equivariant_basis(&GroupRep::trivial(2), 1, &plan, 1e-10).unwrap();
        let mut e1 = vec![0.0; b.len()];
        e1[0] = 1.0;
        assert_eq!(assemble(&b, &e1).unwrap(), b.matrices()[0]);
        assert_eq!(assemble(&b, &vec![0.0; b.len()]).unwrap(), DenseMatrix::zeros(2, 3));
        let c1: Vec<f64> = (0..b.len()).map(|i| i as f64).collect();
        let c2: Vec<f64> = (0..b.len()).map(|i| 0.5 - i as f64 * 0.25).collect();
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let lhs = assemble(&b, &sum).unwrap();
        let rhs = assemble(&b, &c1).unwrap().add(&assemble(&b, &c2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        assert!(assemble(&b, &[1.0]).is_err());
    }

    #[test]
    fn delta_em_detects_non_equivariance() {
        let group = close_group(&[cyclic(3)], 1e-9, 8).unwrap();
        let plan = compression_plan(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = DenseMatrix::from_row_major(
            3,
            plan.reduced_dim(),
            (0..3 * plan.reduced_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        assert!(delta_em(&w, &group, 1, &plan).unwrap() > 1e-3);
        assert_eq!(delta_em(&w, &GroupRep::trivial(3), 1, &plan).unwrap(), 0.0);
    }

    #[test]
    fn unconstrained_fit_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h0r = DenseMatrix::from_row_major(3, 10, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = DenseMatrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]]).unwrap();
        let h1 = a.matmul(&h0r).unwrap();
        let w = unconstrained_fit(&h0r, &h1, 1e-12).unwrap();
        assert!(w.max_abs_diff(&a) <= 1e-10);

        let w = unconstrained_fit(
            &DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap(),
            &DenseMatrix::from_rows(&[[2.0]]).unwrap(),
            1e-12,
        )
        .unwrap();
        assert!((w[(0, 0)] - 1.0).abs() <= 1e-14 && (w[(0, 1)] - 1.0).abs() <= 1e-14);
    }
}
