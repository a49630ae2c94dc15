//! A decomposed boundary-value problem: subdomain meshes with their boundary
//! data, the networks serving them, and the merged interface constraints.

use ndarray::Array2;

use crate::energy::{element_kernels, split_rows, DirichletTable, ElementKernel, LoadTable, Material};
use crate::error::{Error, Result};
use crate::interface::{build_interface, ConstraintTable, Direction, InterfaceOptions};
use crate::mesh::Mesh;
use crate::model::NetworkSpec;

#[derive(Debug, Clone)]
pub struct Subdomain {
    pub mesh: Mesh,
    pub dirichlet: DirichletTable,
    pub loads: LoadTable,
    /// Index of the network that predicts this subdomain's nodes.
    pub network: usize,
}

impl Subdomain {
    pub fn new(mesh: Mesh, network: usize) -> Self {
        Subdomain {
            mesh,
            dirichlet: DirichletTable::default(),
            loads: LoadTable::default(),
            network,
        }
    }

    pub fn clamp(mut self, set: &str) -> Result<Self> {
        let zero = vec![0.0; self.mesh.dim()];
        self.dirichlet.add_set(&self.mesh, set, &zero)?;
        Ok(self)
    }

    pub fn load(mut self, set: &str, resultant: &[f64]) -> Result<Self> {
        self.loads.add_resultant(&self.mesh, set, resultant)?;
        Ok(self)
    }
}

/// Interface binding: nodes of `slave_set` on subdomain `slave` follow the
/// elements of subdomain `master`. A bidirectional binding additionally
/// slaves `master_set` on the master side to the slave subdomain's elements.
#[derive(Debug, Clone)]
pub struct InterfaceSpec {
    pub slave: usize,
    pub slave_set: String,
    pub master: usize,
    pub direction: Direction,
    pub master_set: Option<String>,
    pub options: InterfaceOptions,
}

impl InterfaceSpec {
    pub fn new(slave: usize, slave_set: impl Into<String>, master: usize) -> Self {
        InterfaceSpec {
            slave,
            slave_set: slave_set.into(),
            master,
            direction: Direction::Unidirectional,
            master_set: None,
            options: InterfaceOptions::default(),
        }
    }

    pub fn build(&self, subdomains: &[Subdomain]) -> Result<ConstraintTable> {
        let get = |i: usize| {
            subdomains
                .get(i)
                .ok_or_else(|| Error::Validation(format!("interface references missing subdomain {i}")))
        };
        if self.slave == self.master {
            return Err(Error::Validation("interface slave and master must differ".into()));
        }
        let (s, m) = (get(self.slave)?, get(self.master)?);
        let forward = build_interface(
            &s.mesh,
            self.slave,
            &self.slave_set,
            &m.mesh,
            self.master,
            &self.options,
        )?;
        match self.direction {
            Direction::Unidirectional => Ok(forward),
            Direction::Bidirectional => {
                let set = self
                    .master_set
                    .as_deref()
                    .ok_or_else(|| Error::Validation("bidirectional interface needs a master-side set".into()))?;
                let back = build_interface(&m.mesh, self.master, set, &s.mesh, self.slave, &self.options)?;
                let mut table = ConstraintTable::merge(&[forward, back])?;
                table.direction = Direction::Bidirectional;
                Ok(table)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    material: Material,
    subdomains: Vec<Subdomain>,
    networks: Vec<NetworkSpec>,
    constraints: ConstraintTable,
    offsets: Vec<usize>,
    kernels: Vec<Vec<ElementKernel>>,
}

impl Problem {
    /// Validates the inputs, builds and merges interface tables, and
    /// precomputes element quadrature kernels.
    pub fn new(
        material: Material,
        subdomains: Vec<Subdomain>,
        networks: Vec<NetworkSpec>,
        interfaces: &[InterfaceSpec],
    ) -> Result<Self> {
        let tables = interfaces
            .iter()
            .map(|i| i.build(&subdomains))
            .collect::<Result<Vec<_>>>()?;
        let constraints = ConstraintTable::merge(&tables)?;
        Self::with_constraints(material, subdomains, networks, constraints)
    }

    pub fn with_constraints(
        material: Material,
        subdomains: Vec<Subdomain>,
        networks: Vec<NetworkSpec>,
        mut constraints: ConstraintTable,
    ) -> Result<Self> {
        material.validate()?;
        if subdomains.is_empty() {
            return Err(Error::Validation("problem has no subdomains".into()));
        }
        let dim = material.dim();
        for (i, sub) in subdomains.iter().enumerate() {
            if sub.mesh.dim() != dim {
                return Err(Error::Validation(format!(
                    "subdomain {i} is {}D but the material is {dim}D",
                    sub.mesh.dim()
                )));
            }
            let net = networks.get(sub.network).ok_or_else(|| {
                Error::Validation(format!("subdomain {i} references missing network {}", sub.network))
            })?;
            if net.input_dim != dim || net.output_dim != dim {
                return Err(Error::Validation(format!(
                    "network {} dimensions do not match the {dim}D problem",
                    sub.network
                )));
            }
            let n = sub.mesh.node_count();
            for (&node, v) in &sub.dirichlet.0 {
                if node >= n || v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "bad Dirichlet entry at node {node} of subdomain {i}"
                    )));
                }
            }
            for (&node, f) in &sub.loads.0 {
                if node >= n || f.len() != dim || f.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "bad load entry at node {node} of subdomain {i}"
                    )));
                }
                if sub.dirichlet.contains(node) {
                    return Err(Error::Validation(format!(
                        "node {node} of subdomain {i} is both loaded and prescribed"
                    )));
                }
            }
        }
        for (j, net) in networks.iter().enumerate() {
            net.validate()?;
            if !subdomains.iter().any(|s| s.network == j) {
                return Err(Error::Validation(format!("network {j} serves no subdomain")));
            }
        }
        constraints.sort_dependencies()?;
        let mut offsets = vec![0];
        for sub in &subdomains {
            offsets.push(offsets.last().unwrap() + sub.mesh.node_count());
        }
        let fields: Vec<Array2<f64>> = subdomains
            .iter()
            .map(|s| Array2::zeros((s.mesh.node_count(), dim)))
            .collect();
        let mut probe = fields;
        crate::interface::apply_constraints(&mut probe, &constraints)?;

        let scale = material.measure_scale();
        let kernels = subdomains
            .iter()
            .enumerate()
            .map(|(i, s)| element_kernels(&s.mesh, offsets[i], scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(Problem {
            material,
            subdomains,
            networks,
            constraints,
            offsets,
            kernels,
        })
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn dim(&self) -> usize {
        self.material.dim()
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn networks(&self) -> &[NetworkSpec] {
        &self.networks
    }

    pub fn constraints(&self) -> &ConstraintTable {
        &self.constraints
    }

    pub(crate) fn kernels(&self) -> &[Vec<ElementKernel>] {
        &self.kernels
    }

    /// First global node index of subdomain `s`.
    pub fn offset(&self, s: usize) -> usize {
        self.offsets[s]
    }

    pub fn total_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn meshes(&self) -> Vec<&Mesh> {
        self.subdomains.iter().map(|s| &s.mesh).collect()
    }

    /// Subdomains served by network `net`, in index order.
    pub fn subdomains_of(&self, net: usize) -> Vec<usize> {
        (0..self.subdomains.len())
            .filter(|&s| self.subdomains[s].network == net)
            .collect()
    }

    pub fn split_global(&self, global: &Array2<f64>) -> Vec<Array2<f64>> {
        split_rows(global, &self.offsets)
    }

    pub(crate) fn check_fields(&self, fields: &[Array2<f64>]) -> Result<()> {
        let dim = self.dim();
        if fields.len() != self.subdomains.len()
            || fields
                .iter()
                .zip(&self.subdomains)
                .any(|(f, s)| f.dim() != (s.mesh.node_count(), dim))
        {
            return Err(Error::ShapeMismatch(
                "subdomain field shapes do not match the meshes".into(),
            ));
        }
        Ok(())
    }

    /// Global indices of all slave nodes.
    pub fn slave_nodes(&self) -> Vec<usize> {
        self.constraints
            .records
            .iter()
            .map(|r| self.offsets[r.slave_subdomain] + r.slave_node)
            .collect()
    }

    /// Global coordinates stacked in subdomain order.
    pub fn global_coordinates(&self) -> Array2<f64> {
        let parts: Vec<Array2<f64>> = self.subdomains.iter().map(|s| s.mesh.coordinate_array()).collect();
        crate::energy::concat_rows(&parts).expect("meshes share the problem dimension")
    }
}
