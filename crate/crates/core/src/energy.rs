//! Potential-energy loss: field assembly, exact Dirichlet imposition, strain
//! energy by Gauss quadrature, external work of nodal loads, and the adjoint
//! of the whole chain.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::interface::{apply_constraints, constraint_backprop, ConstraintTable};
use crate::mesh::{quadrature_rule, Mesh};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisMode {
    #[default]
    PlaneStress,
    PlaneStrain,
    Full3d,
}

impl fmt::Display for AnalysisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnalysisMode::PlaneStress => "plane_stress",
            AnalysisMode::PlaneStrain => "plane_strain",
            AnalysisMode::Full3d => "full_3d",
        })
    }
}

impl FromStr for AnalysisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane_stress" => Ok(AnalysisMode::PlaneStress),
            "plane_strain" => Ok(AnalysisMode::PlaneStrain),
            "full_3d" => Ok(AnalysisMode::Full3d),
            other => Err(Error::Validation(format!("unknown analysis mode `{other}`"))),
        }
    }
}

/// Isotropic linear elastic material, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mode: AnalysisMode,
    /// Out-of-plane thickness (2D only).
    pub thickness: f64,
}

impl Material {
    pub fn plane_stress(youngs_modulus: f64, poisson_ratio: f64) -> Self {
        Material {
            youngs_modulus,
            poisson_ratio,
            mode: AnalysisMode::PlaneStress,
            thickness: 1.0,
        }
    }

    pub fn plane_strain(youngs_modulus: f64, poisson_ratio: f64) -> Self {
        Material {
            mode: AnalysisMode::PlaneStrain,
            ..Material::plane_stress(youngs_modulus, poisson_ratio)
        }
    }

    pub fn solid(youngs_modulus: f64, poisson_ratio: f64) -> Self {
        Material {
            youngs_modulus,
            poisson_ratio,
            mode: AnalysisMode::Full3d,
            thickness: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::Validation("Young's modulus must be positive".into()));
        }
        if !(self.poisson_ratio > -1.0 && self.poisson_ratio < 0.5) {
            return Err(Error::Validation(format!(
                "Poisson ratio {} outside (-1, 0.5)",
                self.poisson_ratio
            )));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(Error::Validation("thickness must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.mode {
            AnalysisMode::Full3d => 3,
            _ => 2,
        }
    }

    /// Quadrature scale factor: thickness in 2D, 1 in 3D.
    pub fn measure_scale(&self) -> f64 {
        match self.mode {
            AnalysisMode::Full3d => 1.0,
            _ => self.thickness,
        }
    }

    /// Elasticity matrix `D` in the Voigt order used by the strain operator,
    /// row-major.
    pub fn elasticity_matrix(&self) -> Vec<f64> {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        match self.mode {
            AnalysisMode::PlaneStress => {
                let c = e / (1.0 - nu * nu);
                vec![c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0]
            }
            AnalysisMode::PlaneStrain => {
                let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                vec![
                    c * (1.0 - nu),
                    c * nu,
                    0.0,
                    c * nu,
                    c * (1.0 - nu),
                    0.0,
                    0.0,
                    0.0,
                    c * (1.0 - 2.0 * nu) / 2.0,
                ]
            }
            AnalysisMode::Full3d => {
                let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
                let mu = e / (2.0 * (1.0 + nu));
                let mut d = vec![0.0; 36];
                for i in 0..3 {
                    for j in 0..3 {
                        d[i * 6 + j] = if i == j { lambda + 2.0 * mu } else { lambda };
                    }
                    d[(i + 3) * 6 + i + 3] = mu;
                }
                d
            }
        }
    }
}

/// `σ = D ε` for a Voigt strain.
pub fn constitutive(strain: &[f64], material: &Material) -> Vec<f64> {
    let d = material.elasticity_matrix();
    let n = strain.len();
    (0..n).map(|i| (0..n).map(|j| d[i * n + j] * strain[j]).sum()).collect()
}

/// Prescribed nodal displacements of one subdomain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletTable(pub BTreeMap<usize, Vec<f64>>);

impl DirichletTable {
    /// Prescribes `value` on every node of `set`.
    pub fn from_set(mesh: &Mesh, set: &str, value: &[f64]) -> Result<Self> {
        let mut t = DirichletTable::default();
        t.add_set(mesh, set, value)?;
        Ok(t)
    }

    pub fn add_set(&mut self, mesh: &Mesh, set: &str, value: &[f64]) -> Result<()> {
        if value.len() != mesh.dim() || value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("bad Dirichlet value {value:?}")));
        }
        for &n in mesh.node_set(set)? {
            self.0.insert(n, value.to_vec());
        }
        Ok(())
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.contains_key(&node)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Nodal point forces of one subdomain (N).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadTable(pub BTreeMap<usize, Vec<f64>>);

impl LoadTable {
    /// Splits the resultant `total` equally over the nodes of `set`,
    /// accumulating onto existing loads.
    pub fn add_resultant(&mut self, mesh: &Mesh, set: &str, total: &[f64]) -> Result<()> {
        if total.len() != mesh.dim() || total.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("bad load resultant {total:?}")));
        }
        let nodes = mesh.node_set(set)?;
        if nodes.is_empty() {
            return Err(Error::Validation(format!("load set `{set}` is empty")));
        }
        let share = 1.0 / nodes.len() as f64;
        for &n in nodes {
            let entry = self.0.entry(n).or_insert_with(|| vec![0.0; total.len()]);
            entry.iter_mut().zip(total).for_each(|(e, t)| *e += t * share);
        }
        Ok(())
    }

    pub fn from_resultant(mesh: &Mesh, set: &str, total: &[f64]) -> Result<Self> {
        let mut t = LoadTable::default();
        t.add_resultant(mesh, set, total)?;
        Ok(t)
    }

    pub fn resultant(&self, dim: usize) -> Vec<f64> {
        let mut r = vec![0.0; dim];
        for f in self.0.values() {
            r.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        }
        r
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Precomputed quadrature data of one element.
#[derive(Debug, Clone)]
pub(crate) struct ElementKernel {
    /// Global node indices.
    pub nodes: Vec<usize>,
    /// Per Gauss point: row-major `B` and `ω_g · det J · t`.
    pub points: Vec<(Vec<f64>, f64)>,
}

pub(crate) fn element_kernels(mesh: &Mesh, offset: usize, scale: f64) -> Result<Vec<ElementKernel>> {
    let rule = quadrature_rule(mesh.kind());
    (0..mesh.element_count())
        .map(|e| {
            let geom = mesh.element_geometry(e);
            let points = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(xi, w)| {
                    let (b, det) = geom.strain_operator(xi)?;
                    let row_major: Vec<f64> = b.transpose().iter().copied().collect();
                    Ok((row_major, w * det * scale))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ElementKernel {
                nodes: mesh.elements()[e].connectivity.iter().map(|n| n + offset).collect(),
                points,
            })
        })
        .collect()
}

/// Displacement fields at each stage of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution {
    /// Raw per-subdomain network predictions.
    pub local: Vec<Array2<f64>>,
    /// Assembled field after interface replacement.
    pub assembled: Array2<f64>,
    /// Assembled field after Dirichlet imposition.
    pub displacement: Array2<f64>,
}

impl FieldSolution {
    /// Final displacement split back into subdomains.
    pub fn subdomain_fields(&self, problem: &Problem) -> Vec<Array2<f64>> {
        problem.split_global(&self.displacement)
    }
}

/// The loss is exactly `strain_energy − external_work`; there are no other
/// terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub strain_energy: f64,
    pub external_work: f64,
}

/// Applies interface replacement to the per-subdomain arrays and concatenates
/// them in subdomain order.
pub fn assemble_global(locals: &[Array2<f64>], table: &ConstraintTable) -> Result<Array2<f64>> {
    let mut work = locals.to_vec();
    apply_constraints(&mut work, table)?;
    concat_rows(&work)
}

pub(crate) fn concat_rows(parts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| Error::ShapeMismatch(format!("cannot assemble subdomain fields: {e}")))
}

/// Sets the prescribed value at every Dirichlet node of the problem.
pub fn apply_hard_bc(assembled: &Array2<f64>, problem: &Problem) -> Array2<f64> {
    let mut u = assembled.clone();
    for (s, sub) in problem.subdomains().iter().enumerate() {
        let off = problem.offset(s);
        for (&n, v) in &sub.dirichlet.0 {
            u.row_mut(off + n).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
    }
    u
}

fn zero_dirichlet_rows(field: &mut Array2<f64>, table: &DirichletTable, offset: usize) {
    for &n in table.0.keys() {
        field.row_mut(offset + n).fill(0.0);
    }
}

/// `½ Σ_e Σ_g ω_g det J t · εᵀ D ε` over all subdomains.
pub fn strain_energy(u: &Array2<f64>, problem: &Problem) -> f64 {
    strain_energy_impl(u, problem, None)
}

fn strain_energy_impl(u: &Array2<f64>, problem: &Problem, mut grad: Option<&mut Array2<f64>>) -> f64 {
    let d_mat = problem.material().elasticity_matrix();
    let dim = u.ncols();
    let nv = if dim == 2 { 3 } else { 6 };
    let mut ue: Vec<f64> = Vec::new();
    let mut eps = vec![0.0; nv];
    let mut sig = vec![0.0; nv];
    let mut total = 0.0;
    for kernels in problem.kernels() {
        for k in kernels {
            let ndof = k.nodes.len() * dim;
            ue.clear();
            for &n in &k.nodes {
                ue.extend(u.row(n).iter());
            }
            let mut ge = vec![0.0; ndof];
            let mut elem = 0.0;
            for (b, wdet) in &k.points {
                for v in 0..nv {
                    let row = &b[v * ndof..(v + 1) * ndof];
                    eps[v] = row.iter().zip(&ue).map(|(x, y)| x * y).sum();
                }
                for i in 0..nv {
                    sig[i] = (0..nv).map(|j| d_mat[i * nv + j] * eps[j]).sum();
                }
                elem += 0.5 * wdet * eps.iter().zip(&sig).map(|(a, b)| a * b).sum::<f64>();
                if grad.is_some() {
                    for v in 0..nv {
                        let row = &b[v * ndof..(v + 1) * ndof];
                        let s = wdet * sig[v];
                        ge.iter_mut().zip(row).for_each(|(g, r)| *g += s * r);
                    }
                }
            }
            total += elem;
            if let Some(g) = grad.as_deref_mut() {
                for (a, &n) in k.nodes.iter().enumerate() {
                    for c in 0..dim {
                        g[[n, c]] += ge[a * dim + c];
                    }
                }
            }
        }
    }
    total
}

/// `Σ t̄ · u` over loaded nodes.
pub fn external_work(u: &Array2<f64>, problem: &Problem) -> f64 {
    let mut w = 0.0;
    for (s, sub) in problem.subdomains().iter().enumerate() {
        let off = problem.offset(s);
        for (&n, f) in &sub.loads.0 {
            w += f.iter().zip(u.row(off + n)).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    w
}

/// Runs the full field pipeline on raw per-subdomain predictions: Dirichlet
/// values are imposed on the subdomain arrays, slave nodes are replaced by
/// master interpolants, the arrays are assembled, and Dirichlet values are
/// imposed again on the assembled field (prescribed values win on nodes that
/// are both slave and Dirichlet).
pub fn field_pipeline(raw: &[Array2<f64>], problem: &Problem) -> Result<FieldSolution> {
    problem.check_fields(raw)?;
    let mut work = raw.to_vec();
    for (s, sub) in problem.subdomains().iter().enumerate() {
        for (&n, v) in &sub.dirichlet.0 {
            work[s].row_mut(n).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
    }
    let assembled = assemble_global(&work, problem.constraints())?;
    let displacement = apply_hard_bc(&assembled, problem);
    Ok(FieldSolution {
        local: raw.to_vec(),
        assembled,
        displacement,
    })
}

/// Loss value and the intermediate fields it was computed from.
#[derive(Debug, Clone)]
pub struct LossState {
    pub report: LossReport,
    pub fields: FieldSolution,
}

pub fn loss(raw: &[Array2<f64>], problem: &Problem) -> Result<LossState> {
    let fields = field_pipeline(raw, problem)?;
    let se = strain_energy(&fields.displacement, problem);
    let ew = external_work(&fields.displacement, problem);
    Ok(LossState {
        report: LossReport {
            loss: se - ew,
            strain_energy: se,
            external_work: ew,
        },
        fields,
    })
}

/// Gradient of the loss with respect to the final displacement field.
pub fn displacement_gradient(u: &Array2<f64>, problem: &Problem) -> Array2<f64> {
    let mut g = Array2::zeros(u.dim());
    strain_energy_impl(u, problem, Some(&mut g));
    for (s, sub) in problem.subdomains().iter().enumerate() {
        let off = problem.offset(s);
        for (&n, f) in &sub.loads.0 {
            for (c, fc) in f.iter().enumerate() {
                g[[off + n, c]] -= fc;
            }
        }
    }
    g
}

/// Per-subdomain gradients of the loss with respect to the raw network
/// outputs.
pub fn loss_backward(state: &LossState, problem: &Problem) -> Result<Vec<Array2<f64>>> {
    let mut g = displacement_gradient(&state.fields.displacement, problem);
    for (s, sub) in problem.subdomains().iter().enumerate() {
        zero_dirichlet_rows(&mut g, &sub.dirichlet, problem.offset(s));
    }
    let mut parts = problem.split_global(&g);
    constraint_backprop(&mut parts, problem.constraints())?;
    for (part, sub) in parts.iter_mut().zip(problem.subdomains()) {
        zero_dirichlet_rows(part, &sub.dirichlet, 0);
    }
    Ok(parts)
}

pub(crate) fn split_rows(global: &Array2<f64>, offsets: &[usize]) -> Vec<Array2<f64>> {
    offsets
        .windows(2)
        .map(|w| global.slice(s![w[0]..w[1], ..]).to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn plane_stress_uniaxial() {
        let m = Material::plane_stress(200.0, 0.25);
        let s = constitutive(&[1e-3, 0.0, 0.0], &m);
        let s1 = 200.0 * 1e-3 / (1.0 - 0.0625);
        assert_abs_diff_eq!(s[0], s1, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], 0.25 * s1, epsilon = 1e-14);
        assert_eq!(s[2], 0.0);
        assert_eq!(constitutive(&[0.0; 3], &m), vec![0.0; 3]);
    }

    #[test]
    fn material_validation() {
        assert!(Material::plane_stress(1.0, 0.5).validate().is_err());
        assert!(Material::plane_stress(-1.0, 0.2).validate().is_err());
        assert!(Material::solid(1.0, -0.99).validate().is_ok());
    }
}
