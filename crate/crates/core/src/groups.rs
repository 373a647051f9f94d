//! Finite orthogonal matrix groups and their actions on embedded coordinates.

use serde::{Deserialize, Serialize};

use crate::embedding::{embed_dim, CompressionPlan};
use crate::error::{EarcError, Result};
use crate::tensorops::{self, check_entries, DenseMatrix, DEFAULT_ENTRY_CAP};

/// Frobenius distance under which two products are the same group element.
pub const DEFAULT_MATCH_TOL: f64 = 1e-9;

pub const DEFAULT_MAX_ORDER: usize = 1024;

/// A finite group of orthogonal `n x n` matrices with designated generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRep {
    n: usize,
    generators: Vec<DenseMatrix>,
    elements: Vec<DenseMatrix>,
}

/// Wire form of a group: generators as row-major entry lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub n: usize,
    pub generators: Vec<Vec<f64>>,
}

impl GroupRep {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[DenseMatrix] {
        &self.generators
    }

    /// All elements, identity first, then in discovery order.
    pub fn elements(&self) -> &[DenseMatrix] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn trivial(n: usize) -> Self {
        GroupRep {
            n,
            generators: vec![DenseMatrix::identity(n)],
            elements: vec![DenseMatrix::identity(n)],
        }
    }

    pub fn position(&self, g: &DenseMatrix, tol: f64) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.shape() == g.shape() && frobenius_distance(e, g) <= tol)
    }

    pub fn to_spec(&self) -> GroupSpec {
        GroupSpec {
            n: self.n,
            generators: self.generators.iter().map(|g| g.as_slice().to_vec()).collect(),
        }
    }

    pub fn from_spec(spec: &GroupSpec) -> Result<Self> {
        let generators = spec
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| {
                DenseMatrix::from_row_major(spec.n, spec.n, g.clone()).map_err(|_| {
                    EarcError::Validation(format!(
                        "generator {i} has {} entries, expected {}",
                        g.len(),
                        spec.n * spec.n
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        close_group(&generators, DEFAULT_MATCH_TOL, DEFAULT_MAX_ORDER)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: GroupSpec = serde_json::from_str(s).map_err(|e| EarcError::Parse {
            location: format!("group JSON line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_spec(&spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("group spec serializes")
    }
}

fn frobenius_distance(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn orthogonality_defect(g: &DenseMatrix) -> f64 {
    let gtg = g.transpose().matmul(g).expect("square");
    frobenius_distance(&gtg, &DenseMatrix::identity(g.rows()))
}

/// Breadth-first closure of `generators` under multiplication.
pub fn close_group(generators: &[DenseMatrix], match_tol: f64, max_order: usize) -> Result<GroupRep> {
    let first = generators
        .first()
        .ok_or_else(|| EarcError::Validation("a group needs at least one generator".into()))?;
    let n = first.rows();
    for (i, g) in generators.iter().enumerate() {
        if g.shape() != (n, n) {
            return Err(EarcError::Validation(format!(
                "generator {i} is {}x{}, expected {n}x{n}",
                g.rows(),
                g.cols()
            )));
        }
        if !g.is_finite() {
            return Err(EarcError::Validation(format!("generator {i} has non-finite entries")));
        }
        let defect = orthogonality_defect(g);
        if defect > match_tol {
            return Err(EarcError::Validation(format!(
                "generator {i} is not orthogonal (|gᵀg - I|_F = {defect:.3e})"
            )));
        }
    }
    let mut elements = vec![DenseMatrix::identity(n)];
    let mut frontier = 0;
    while frontier < elements.len() {
        let current = elements[frontier].clone();
        frontier += 1;
        for g in generators {
            let product = g.matmul(&current)?;
            if elements.iter().any(|e| frobenius_distance(e, &product) <= match_tol) {
                continue;
            }
            if elements.len() == max_order {
                return Err(EarcError::NonFiniteGroup { max_order });
            }
            elements.push(product);
        }
    }
    Ok(GroupRep {
        n,
        generators: generators.to_vec(),
        elements,
    })
}

/// `g ⊗ I_L`: the action of `g` on channel-major delay windows.
pub fn window_action(g: &DenseMatrix, lag: usize) -> Result<DenseMatrix> {
    tensorops::kron(g, &DenseMatrix::identity(lag))
}

/// `(g⊗I_L) ⊕ (g⊗I_L)^{⊗2} ⊕ … ⊕ (g⊗I_L)^{⊗p} ⊕ 1`.
pub fn lifted_action(g: &DenseMatrix, lag: usize, p: usize) -> Result<DenseMatrix> {
    if !g.is_square() {
        return Err(EarcError::shape("group element must be square"));
    }
    let nl = g.rows() * lag;
    let dim = embed_dim(nl, p)?;
    check_entries(dim as u128 * dim as u128, DEFAULT_ENTRY_CAP)?;
    let a = window_action(g, lag)?;
    let mut blocks = vec![a.clone()];
    for _ in 1..p {
        let next = tensorops::kron(&a, blocks.last().expect("non-empty"))?;
        blocks.push(next);
    }
    blocks.push(DenseMatrix::identity(1));
    tensorops::direct_sum(&blocks)
}

/// `Ĝ = R·G·E`, the lifted action in compressed coordinates, built one
/// column at a time without forming the full lifted matrix.
pub fn reduced_action(g: &DenseMatrix, lag: usize, plan: &CompressionPlan) -> Result<DenseMatrix> {
    if !g.is_square() || g.rows() * lag != plan.dim_in() {
        return Err(EarcError::shape(format!(
            "group element of size {}x{} with lag {lag} does not match plan input dim {}",
            g.rows(),
            g.cols(),
            plan.dim_in()
        )));
    }
    let a = window_action(g, lag)?;
    let q = plan.reduced_dim();
    let p = plan.order();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); q];
    for (i, &c) in plan.class_of().iter().enumerate() {
        members[c].push(i);
    }
    // Classes of each degree, in class order.
    let mut by_degree: Vec<Vec<usize>> = vec![Vec::new(); p + 1];
    for c in 0..q {
        by_degree[plan.monomial(c).len()].push(c);
    }
    let mut out = DenseMatrix::zeros(q, q);
    for c in 0..q {
        let k = plan.monomial(c).len();
        if k == 0 {
            out[(c, c)] = 1.0;
            continue;
        }
        let offset = plan.block_offset(k);
        let block = plan.dim_in().pow(k as u32);
        let mut v = vec![0.0; block];
        for &i in &members[c] {
            v[i - offset] = 1.0;
        }
        let w = tensorops::kron_power_apply(&a, k, &v)?;
        for &r in &by_degree[k] {
            out[(r, c)] = w[plan.rep_index()[r] - offset];
        }
    }
    Ok(out)
}
