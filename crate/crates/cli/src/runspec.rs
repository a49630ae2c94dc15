//! Run spec: one TOML file describing subdomains, boundary data,
//! interfaces, material, networks and training.
//!
//! ```toml
//! [material]
//! youngs_modulus = "3 GPa"
//! poisson_ratio = 0.3
//!
//! [network]
//! output_scale = "0.1 m"
//!
//! [train]
//! epochs = 20000
//!
//! [[subdomain]]
//! mesh = "a.mesh"
//! dirichlet = [{ set = "left" }]
//!
//! [[subdomain]]
//! generate = { origin = [1, 0], extents = [1, 1], divisions = [12, 11] }
//! load = [{ set = "right", resultant = ["0 N", "-10 MN"] }]
//!
//! [[interface]]
//! slave = 1
//! slave_set = "left"
//! master = 0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use dpinn::energy::{AnalysisMode, Material};
use dpinn::interface::{Direction, InterfaceOptions};
use dpinn::mesh::{generate_box_mesh, generate_rect_mesh, load_mesh, BoxSpec, Mesh, RectSpec, SetSpec};
use dpinn::model::NetworkSpec;
use dpinn::problem::{InterfaceSpec, Problem, Subdomain};
use dpinn::train::TrainConfig;

use crate::units::Quantity;
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Output directory, relative to the run-spec file.
    pub out: Option<PathBuf>,
    pub material: MaterialEntry,
    #[serde(default)]
    pub train: TrainEntry,
    #[serde(default)]
    pub network: NetworkEntry,
    #[serde(rename = "subdomain")]
    pub subdomains: Vec<SubdomainEntry>,
    #[serde(default, rename = "interface")]
    pub interfaces: Vec<InterfaceEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub youngs_modulus: Quantity,
    pub poisson_ratio: f64,
    /// `plane_stress` (2D default), `plane_strain` or `full_3d`.
    pub mode: Option<String>,
    pub thickness: Option<Quantity>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainEntry {
    pub lr0: Option<f64>,
    pub epochs: Option<usize>,
    pub schedule: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub log_every: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
}

/// Architecture shared by every network of the run.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub rff_count: Option<usize>,
    pub rff_scale: Option<f64>,
    pub output_scale: Option<Quantity>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainEntry {
    pub mesh: Option<PathBuf>,
    pub generate: Option<GenerateEntry>,
    /// Network serving this subdomain; defaults to the subdomain index.
    pub network: Option<usize>,
    #[serde(default)]
    pub dirichlet: Vec<DirichletEntry>,
    #[serde(default)]
    pub load: Vec<LoadEntry>,
}

/// Structured block with one node set per face.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateEntry {
    pub origin: Vec<Quantity>,
    pub extents: Vec<Quantity>,
    pub divisions: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletEntry {
    pub set: String,
    /// Prescribed displacement; zero when omitted.
    pub value: Option<Vec<Quantity>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub set: String,
    /// Total force, split equally over the set's nodes.
    pub resultant: Vec<Quantity>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceEntry {
    pub slave: usize,
    pub slave_set: String,
    pub master: usize,
    pub direction: Option<String>,
    pub master_set: Option<String>,
    pub tolerance: Option<f64>,
    pub max_iter: Option<usize>,
    pub extrapolation_slack: Option<f64>,
    pub max_candidates: Option<usize>,
}

fn si(v: &[Quantity]) -> Vec<f64> {
    v.iter().map(|q| q.0).collect()
}

impl GenerateEntry {
    pub fn build(&self) -> Result<Mesh, CliError> {
        let (o, e, d) = (si(&self.origin), si(&self.extents), &self.divisions);
        match (o.len(), e.len(), d.len()) {
            (2, 2, 2) => Ok(generate_rect_mesh(
                &RectSpec {
                    origin: [o[0], o[1]],
                    extents: [e[0], e[1]],
                    divisions: [d[0], d[1]],
                },
                &SetSpec::all_faces(2),
            )?),
            (3, 3, 3) => Ok(generate_box_mesh(
                &BoxSpec {
                    origin: [o[0], o[1], o[2]],
                    extents: [e[0], e[1], e[2]],
                    divisions: [d[0], d[1], d[2]],
                },
                &SetSpec::all_faces(3),
            )?),
            _ => Err(CliError::Invalid(
                "generate needs origin, extents and divisions of equal length 2 or 3".into(),
            )),
        }
    }
}

/// A parsed run spec together with the directory it came from.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: RunSpec,
    pub base: PathBuf,
}

impl LoadedSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let spec: RunSpec =
            toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {}", path.display(), e.message())))?;
        Ok(LoadedSpec {
            spec,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn default_out(&self) -> PathBuf {
        match &self.spec.out {
            Some(p) => self.base.join(p),
            None => self.base.join("out"),
        }
    }

    pub fn meshes(&self) -> Result<Vec<Mesh>, CliError> {
        self.spec
            .subdomains
            .iter()
            .enumerate()
            .map(|(i, s)| match (&s.mesh, &s.generate) {
                (Some(p), None) => Ok(load_mesh(self.base.join(p))?),
                (None, Some(g)) => g.build(),
                _ => Err(CliError::Invalid(format!(
                    "subdomain {i} needs exactly one of `mesh` or `generate`"
                ))),
            })
            .collect()
    }

    pub fn material(&self, dim: usize) -> Result<Material, CliError> {
        let m = &self.spec.material;
        let mode = match &m.mode {
            Some(s) => s.parse::<AnalysisMode>()?,
            None if dim == 3 => AnalysisMode::Full3d,
            None => AnalysisMode::PlaneStress,
        };
        Ok(Material {
            youngs_modulus: m.youngs_modulus.0,
            poisson_ratio: m.poisson_ratio,
            mode,
            thickness: m.thickness.map(|q| q.0).unwrap_or(1.0),
        })
    }

    pub fn network(&self, dim: usize) -> NetworkSpec {
        let n = &self.spec.network;
        let d = NetworkSpec::new(dim);
        NetworkSpec {
            width: n.width.unwrap_or(d.width),
            depth: n.depth.unwrap_or(d.depth),
            rff_count: n.rff_count.unwrap_or(d.rff_count),
            rff_scale: n.rff_scale.unwrap_or(d.rff_scale),
            output_scale: n.output_scale.map(|q| q.0).unwrap_or(d.output_scale),
            ..d
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.spec.train;
        let d = TrainConfig::default();
        let config = TrainConfig {
            lr0: t.lr0.unwrap_or(d.lr0),
            epochs: t.epochs.unwrap_or(d.epochs),
            beta1: t.beta1.unwrap_or(d.beta1),
            beta2: t.beta2.unwrap_or(d.beta2),
            adam_eps: t.adam_eps.unwrap_or(d.adam_eps),
            schedule: match &t.schedule {
                Some(s) => s.parse()?,
                None => d.schedule,
            },
            seed: t.seed.unwrap_or(d.seed),
            workers: t.workers.unwrap_or(d.workers),
            log_every: t.log_every.unwrap_or(d.log_every),
        };
        Ok(config)
    }

    pub fn interfaces(&self) -> Result<Vec<InterfaceSpec>, CliError> {
        let n = self.spec.subdomains.len();
        self.spec
            .interfaces
            .iter()
            .map(|e| {
                if e.slave >= n || e.master >= n {
                    return Err(CliError::Invalid(format!(
                        "interface {} -> {} references a missing subdomain ({n} defined)",
                        e.slave, e.master
                    )));
                }
                let d = InterfaceOptions::default();
                Ok(InterfaceSpec {
                    slave: e.slave,
                    slave_set: e.slave_set.clone(),
                    master: e.master,
                    direction: match &e.direction {
                        Some(s) => s.parse::<Direction>()?,
                        None => Direction::Unidirectional,
                    },
                    master_set: e.master_set.clone(),
                    options: InterfaceOptions {
                        tolerance: e.tolerance.unwrap_or(d.tolerance),
                        max_iter: e.max_iter.unwrap_or(d.max_iter),
                        extrapolation_slack: e.extrapolation_slack.unwrap_or(d.extrapolation_slack),
                        max_candidates: e.max_candidates.unwrap_or(d.max_candidates),
                    },
                })
            })
            .collect()
    }

    /// Builds the problem: meshes, boundary data, networks and interface
    /// constraints.
    pub fn problem(&self) -> Result<Problem, CliError> {
        let meshes = self.meshes()?;
        let dim = meshes
            .first()
            .map(|m| m.dim())
            .ok_or_else(|| CliError::Invalid("run spec defines no subdomains".into()))?;
        let material = self.material(dim)?;
        let mut subdomains = Vec::with_capacity(meshes.len());
        let mut net_count = 0;
        for (i, (mesh, entry)) in meshes.into_iter().zip(&self.spec.subdomains).enumerate() {
            let net = entry.network.unwrap_or(i);
            net_count = net_count.max(net + 1);
            let mut sub = Subdomain::new(mesh, net);
            for d in &entry.dirichlet {
                let value = d.value.as_deref().map(si).unwrap_or_else(|| vec![0.0; dim]);
                sub.dirichlet.add_set(&sub.mesh, &d.set, &value)?;
            }
            for l in &entry.load {
                sub.loads.add_resultant(&sub.mesh, &l.set, &si(&l.resultant))?;
            }
            subdomains.push(sub);
        }
        let networks = vec![self.network(dim); net_count];
        Ok(Problem::new(material, subdomains, networks, &self.interfaces()?)?)
    }
}
