//! Mesh data model for bilinear quadrilateral (Q4) and trilinear hexahedral
//! (H8) elements, together with the isoparametric kernels built on it.
//!
//! Every subdomain owns one [`Mesh`]. Node ids are dense (`0..N`) and double
//! as indices into nodal displacement arrays.

mod generate;
mod io;
mod quadrature;
mod shape;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use generate::{generate_box_mesh, generate_rect_mesh, BoxSpec, Face, RectSpec, SetSpec};
pub use io::{load_mesh, read_mesh, save_mesh, write_mesh};
pub use quadrature::{quadrature_rule, QuadratureRule};
pub use shape::{shape_gradients, shape_values, strain_operator, ElementGeometry, Jacobian, REFERENCE_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    /// Bilinear quadrilateral, vertices (−1,−1),(1,−1),(1,1),(−1,1).
    Q4,
    /// Trilinear hexahedron, bottom face (ζ=−1) counterclockwise, then top face.
    H8,
}

const Q4_VERTICES: [[f64; 3]; 4] = [[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]];

const H8_VERTICES: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

impl ElementKind {
    pub fn node_count(self) -> usize {
        match self {
            ElementKind::Q4 => 4,
            ElementKind::H8 => 8,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ElementKind::Q4 => 2,
            ElementKind::H8 => 3,
        }
    }

    /// Reference-space vertex coordinates; unused trailing components are zero.
    pub fn reference_vertices(self) -> &'static [[f64; 3]] {
        match self {
            ElementKind::Q4 => &Q4_VERTICES,
            ElementKind::H8 => &H8_VERTICES,
        }
    }

    /// Area/volume of the reference element `[-1, 1]^d`.
    pub fn reference_measure(self) -> f64 {
        match self {
            ElementKind::Q4 => 4.0,
            ElementKind::H8 => 8.0,
        }
    }

    pub fn for_dim(dim: usize) -> Result<Self> {
        match dim {
            2 => Ok(ElementKind::Q4),
            3 => Ok(ElementKind::H8),
            d => Err(Error::Validation(format!("unsupported dimension {d}"))),
        }
    }

    /// Number of Voigt strain components.
    pub fn voigt_size(self) -> usize {
        match self {
            ElementKind::Q4 => 3,
            ElementKind::H8 => 6,
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementKind::Q4 => "Q4",
            ElementKind::H8 => "H8",
        })
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q4" => Ok(ElementKind::Q4),
            "H8" => Ok(ElementKind::H8),
            other => Err(Error::UnknownElementKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub id: usize,
    pub kind: ElementKind,
    pub connectivity: Vec<usize>,
}

/// An immutable, validated subdomain mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    kind: ElementKind,
    nodes: Vec<Node>,
    elements: Vec<Element>,
    node_sets: BTreeMap<String, Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh and checks its structural invariants: dense ids, finite
    /// coordinates of the right dimension, a single element kind matching the
    /// dimension, valid connectivity and valid node sets.
    pub fn new(
        dim: usize,
        nodes: Vec<Node>,
        elements: Vec<Element>,
        node_sets: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let kind = ElementKind::for_dim(dim)?;
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Validation(format!(
                    "node ids must be dense and ordered: position {i} holds id {}",
                    node.id
                )));
            }
            if node.coords.len() != dim {
                return Err(Error::Validation(format!(
                    "node {i} has {} coordinates, expected {dim}",
                    node.coords.len()
                )));
            }
            if node.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("node {i} has non-finite coordinates")));
            }
        }
        if elements.is_empty() {
            return Err(Error::Validation("mesh has no elements".into()));
        }
        for (i, el) in elements.iter().enumerate() {
            if el.id != i {
                return Err(Error::Validation(format!(
                    "element ids must be dense and ordered: position {i} holds id {}",
                    el.id
                )));
            }
            if el.kind != kind {
                return Err(Error::Validation(format!(
                    "element {i} is {} but a {dim}D mesh holds {kind}",
                    el.kind
                )));
            }
            if el.connectivity.len() != kind.node_count() {
                return Err(Error::Validation(format!(
                    "element {i} has {} nodes, {kind} needs {}",
                    el.connectivity.len(),
                    kind.node_count()
                )));
            }
            if let Some(&bad) = el.connectivity.iter().find(|&&n| n >= nodes.len()) {
                return Err(Error::Validation(format!("element {i} references missing node {bad}")));
            }
        }
        for (name, ids) in &node_sets {
            if let Some(&bad) = ids.iter().find(|&&n| n >= nodes.len()) {
                return Err(Error::Validation(format!(
                    "node set `{name}` references missing node {bad}"
                )));
            }
        }
        Ok(Mesh {
            dim,
            kind,
            nodes,
            elements,
            node_sets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn node_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.node_sets
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("unknown node set `{name}`")))
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        &self.nodes[node].coords
    }

    /// Element vertex coordinates as an `m × d` matrix.
    pub fn element_coords(&self, element: usize) -> DMatrix<f64> {
        let el = &self.elements[element];
        DMatrix::from_fn(el.connectivity.len(), self.dim, |i, j| {
            self.nodes[el.connectivity[i]].coords[j]
        })
    }

    pub fn element_geometry(&self, element: usize) -> ElementGeometry {
        ElementGeometry::new(element, self.kind, self.element_coords(element))
    }

    /// Arithmetic mean of the element's vertices.
    pub fn element_centroid(&self, element: usize) -> Vec<f64> {
        let el = &self.elements[element];
        let mut c = vec![0.0; self.dim];
        for &n in &el.connectivity {
            for (ci, xi) in c.iter_mut().zip(&self.nodes[n].coords) {
                *ci += xi;
            }
        }
        let m = el.connectivity.len() as f64;
        c.iter_mut().for_each(|v| *v /= m);
        c
    }

    /// Axis-aligned bounding box `(lo, hi)` of all nodes.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        bounding_box(self.nodes.iter().map(|n| n.coords.as_slice()), self.dim)
    }

    /// Node coordinates as an `N × d` array.
    pub fn coordinate_array(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.nodes.len(), self.dim), |(i, j)| self.nodes[i].coords[j])
    }

    /// Returns a copy with an extra (or replaced) node set.
    pub fn with_node_set(mut self, name: impl Into<String>, ids: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(Error::Validation(format!("node set references missing node {bad}")));
        }
        self.node_sets.insert(name.into(), ids);
        Ok(self)
    }

    /// Checks that every element has a positive Jacobian determinant at all
    /// quadrature points.
    pub fn check_orientation(&self) -> Result<()> {
        let rule = quadrature_rule(self.kind);
        for e in 0..self.elements.len() {
            let geom = self.element_geometry(e);
            for xi in &rule.points {
                geom.jacobian(xi)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn bounding_box<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}
