//! Reference linear FEM solver on the same meshes, material and quadrature,
//! with master-slave condensation of interface constraints.
//!
//! DOF `n·d + c` is component `c` of global node `n` (subdomains stacked in
//! order).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::problem::Problem;

const RESIDUAL_TOLERANCE: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-13;
const MAX_REFINEMENTS: usize = 4;

/// Global stiffness and load vector.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub stiffness: CscMatrix<f64>,
    pub load: DVector<f64>,
}

/// Affine map `u = T q + u₀` from independent DOFs `q` to all DOFs.
#[derive(Debug, Clone)]
pub struct DofTransform {
    pub matrix: CscMatrix<f64>,
    pub shift: DVector<f64>,
}

/// Condensed system in the independent DOFs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub stiffness: CscMatrix<f64>,
    pub load: DVector<f64>,
    pub transform: DofTransform,
}

#[derive(Debug, Clone)]
pub struct FemSolution {
    /// Global nodal displacements, subdomains stacked in order.
    pub displacement: Array2<f64>,
    /// Relative residual of the condensed solve.
    pub residual: f64,
}

/// `K = Σ_e Σ_g ω_g det J t · Bᵀ D B` and the nodal load vector.
pub fn assemble_stiffness(problem: &Problem) -> SparseSystem {
    let dim = problem.dim();
    let n = problem.total_nodes() * dim;
    let d_mat = problem.material().elasticity_matrix();
    let nv = if dim == 2 { 3 } else { 6 };
    let mut coo = CooMatrix::new(n, n);
    for kernels in problem.kernels() {
        for k in kernels {
            let ndof = k.nodes.len() * dim;
            let mut ke = vec![0.0; ndof * ndof];
            let mut db = vec![0.0; nv * ndof];
            for (b, wdet) in &k.points {
                for i in 0..nv {
                    for j in 0..ndof {
                        db[i * ndof + j] = (0..nv).map(|l| d_mat[i * nv + l] * b[l * ndof + j]).sum();
                    }
                }
                for p in 0..ndof {
                    for q in 0..ndof {
                        let v: f64 = (0..nv).map(|l| b[l * ndof + p] * db[l * ndof + q]).sum();
                        ke[p * ndof + q] += wdet * v;
                    }
                }
            }
            let dofs: Vec<usize> = k
                .nodes
                .iter()
                .flat_map(|&nd| (0..dim).map(move |c| nd * dim + c))
                .collect();
            for (p, &gp) in dofs.iter().enumerate() {
                for (q, &gq) in dofs.iter().enumerate() {
                    coo.push(gp, gq, ke[p * ndof + q]);
                }
            }
        }
    }
    let mut load = DVector::zeros(n);
    for (s, sub) in problem.subdomains().iter().enumerate() {
        let off = problem.offset(s);
        for (&node, f) in &sub.loads.0 {
            for (c, fc) in f.iter().enumerate() {
                load[(off + node) * dim + c] += fc;
            }
        }
    }
    SparseSystem {
        stiffness: CscMatrix::from(&coo),
        load,
    }
}

/// Affine expression over independent DOFs.
#[derive(Debug, Clone, Default)]
struct Expr {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl Expr {
    fn add_scaled(&mut self, other: &Expr, c: f64) {
        for (&k, &v) in &other.terms {
            *self.terms.entry(k).or_insert(0.0) += c * v;
        }
        self.constant += c * other.constant;
    }
}

/// Builds `u = T q + u₀`. Slave DOFs follow their master interpolants (in
/// dependency order, so chained slaves expand fully); prescribed DOFs take
/// their Dirichlet value, which wins over a slave relation on the same node.
pub fn dof_transform(problem: &Problem) -> Result<DofTransform> {
    let dim = problem.dim();
    let n = problem.total_nodes();
    let mut prescribed: BTreeMap<usize, &Vec<f64>> = BTreeMap::new();
    for (s, sub) in problem.subdomains().iter().enumerate() {
        for (&node, v) in &sub.dirichlet.0 {
            prescribed.insert(problem.offset(s) + node, v);
        }
    }
    let slaves: std::collections::BTreeSet<usize> = problem.slave_nodes().into_iter().collect();
    if slaves.len() != problem.constraints().len() {
        return Err(Error::Validation("duplicate slave node in constraint table".into()));
    }

    let mut exprs: Vec<Expr> = Vec::with_capacity(n * dim);
    let mut next = 0;
    for node in 0..n {
        for c in 0..dim {
            let mut e = Expr::default();
            if let Some(v) = prescribed.get(&node) {
                e.constant = v[c];
            } else if !slaves.contains(&node) {
                e.terms.insert(next, 1.0);
                next += 1;
            }
            exprs.push(e);
        }
    }
    for r in &problem.constraints().records {
        let moff = problem.offset(r.master_subdomain);
        let slave = problem.offset(r.slave_subdomain) + r.slave_node;
        for c in 0..dim {
            let mut e = Expr::default();
            for (&m, &coef) in r.master_nodes.iter().zip(&r.coefficients) {
                e.add_scaled(&exprs[(moff + m) * dim + c], coef);
            }
            exprs[slave * dim + c] = e;
        }
    }
    for (&node, v) in &prescribed {
        for c in 0..dim {
            exprs[node * dim + c] = Expr {
                terms: BTreeMap::new(),
                constant: v[c],
            };
        }
    }

    let mut coo = CooMatrix::new(n * dim, next);
    let mut shift = DVector::zeros(n * dim);
    for (row, e) in exprs.iter().enumerate() {
        shift[row] = e.constant;
        for (&col, &v) in &e.terms {
            if v != 0.0 {
                coo.push(row, col, v);
            }
        }
    }
    Ok(DofTransform {
        matrix: CscMatrix::from(&coo),
        shift,
    })
}

/// Condenses the system: `K' = Tᵀ K T`, `f' = Tᵀ (f − K u₀)`.
pub fn apply_mpc(system: &SparseSystem, transform: DofTransform) -> ReducedSystem {
    let tt = transform.matrix.transpose();
    let stiffness = &(&tt * &system.stiffness) * &transform.matrix;
    let ku0 = &system.stiffness * DMatrix::from_column_slice(transform.shift.len(), 1, transform.shift.as_slice());
    let rhs = DMatrix::from_column_slice(system.load.len(), 1, system.load.as_slice()) - ku0;
    let load = (&tt * rhs).column(0).into_owned();
    ReducedSystem {
        stiffness,
        load,
        transform,
    }
}

fn sparse_mul_vec(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, j, v) in a.triplet_iter() {
        y[i] += v * x[j];
    }
    y
}

/// Cholesky solve of the condensed system with iterative refinement until the
/// relative residual is at most `1e-10`.
pub fn solve_reduced(system: &ReducedSystem) -> Result<(DVector<f64>, f64)> {
    let k = &system.stiffness;
    let n = k.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), 0.0));
    }
    let max_diag = (0..n)
        .filter_map(|i| k.get_entry(i, i).map(|e| e.into_value()))
        .fold(0.0f64, f64::max);
    let singular = |count: usize| {
        Error::SingularSystem(format!(
            "stiffness is singular: {count} near-zero pivot(s); the model likely has unconstrained rigid-body modes, add Dirichlet conditions"
        ))
    };
    let chol = CscCholesky::factor(k).map_err(|_| singular(1))?;
    let l = chol.l();
    let weak = (0..n)
        .filter(|&i| {
            let p = l.get_entry(i, i).map(|e| e.into_value()).unwrap_or(0.0);
            p * p < PIVOT_FLOOR * max_diag
        })
        .count();
    if weak > 0 {
        return Err(singular(weak));
    }
    let b = &system.load;
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok((DVector::zeros(n), 0.0));
    }
    let mut x = chol.solve(b).column(0).into_owned();
    let mut rel = f64::INFINITY;
    for _ in 0..=MAX_REFINEMENTS {
        let r = b - sparse_mul_vec(k, &x);
        rel = r.norm() / b_norm;
        if rel <= RESIDUAL_TOLERANCE {
            return Ok((x, rel));
        }
        x += chol.solve(&r).column(0);
    }
    Err(Error::SingularSystem(format!(
        "solve stalled at relative residual {rel:.3e}; the system is ill-conditioned"
    )))
}

/// Assembles, condenses and solves the problem; prescribed and slave DOFs are
/// reconstructed through the transform.
pub fn solve(problem: &Problem) -> Result<FemSolution> {
    let system = assemble_stiffness(problem);
    let reduced = apply_mpc(&system, dof_transform(problem)?);
    let (q, residual) = solve_reduced(&reduced)?;
    let u = sparse_mul_vec(&reduced.transform.matrix, &q) + &reduced.transform.shift;
    let dim = problem.dim();
    let displacement = Array2::from_shape_vec((problem.total_nodes(), dim), u.as_slice().to_vec())
        .expect("DOF vector length matches node count");
    log::debug!("reference solve: {} independent dofs, residual {residual:.2e}", q.len());
    Ok(FemSolution { displacement, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentError {
    /// `‖u_pred − u_ref‖∞` (m).
    pub max_abs: f64,
    /// `max_abs / ‖u_ref‖∞`.
    pub max_rel: f64,
    /// `‖u_pred − u_ref‖₂ / ‖u_ref‖₂`.
    pub l2_rel: f64,
}

/// Per-component errors plus the same measures on displacement magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub components: Vec<ComponentError>,
    pub magnitude: ComponentError,
}

impl ErrorReport {
    pub fn worst_max_rel(&self) -> f64 {
        self.components.iter().map(|c| c.max_rel).fold(0.0, f64::max)
    }

    pub fn worst_l2_rel(&self) -> f64 {
        self.components.iter().map(|c| c.l2_rel).fold(0.0, f64::max)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn column_error(pred: impl Iterator<Item = f64>, reference: impl Iterator<Item = f64>) -> ComponentError {
    let (mut max_abs, mut ref_inf, mut err2, mut ref2) = (0.0f64, 0.0f64, 0.0, 0.0);
    for (p, r) in pred.zip(reference) {
        let e = (p - r).abs();
        max_abs = max_abs.max(e);
        ref_inf = ref_inf.max(r.abs());
        err2 += e * e;
        ref2 += r * r;
    }
    ComponentError {
        max_abs,
        max_rel: ratio(max_abs, ref_inf),
        l2_rel: ratio(err2.sqrt(), ref2.sqrt()),
    }
}

pub fn error_report(pred: &Array2<f64>, reference: &Array2<f64>) -> Result<ErrorReport> {
    if pred.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs reference {:?}",
            pred.dim(),
            reference.dim()
        )));
    }
    let components = (0..pred.ncols())
        .map(|c| column_error(pred.column(c).iter().copied(), reference.column(c).iter().copied()))
        .collect();
    let mag = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect::<Vec<_>>();
    let magnitude = column_error(mag(pred).into_iter(), mag(reference).into_iter());
    Ok(ErrorReport { components, magnitude })
}
