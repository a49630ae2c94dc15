//! Structured Q4/H8 grid generators with face-selected node sets.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::{Element, ElementKind, Mesh, Node};
use crate::error::{Error, Result};

/// Boundary face of a structured block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    /// x = min
    Left,
    /// x = max
    Right,
    /// y = min
    Bottom,
    /// y = max
    Top,
    /// z = min
    Front,
    /// z = max
    Back,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Left,
        Face::Right,
        Face::Bottom,
        Face::Top,
        Face::Front,
        Face::Back,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Face::Left => "left",
            Face::Right => "right",
            Face::Bottom => "bottom",
            Face::Top => "top",
            Face::Front => "front",
            Face::Back => "back",
        }
    }

    fn axis_and_side(self) -> (usize, bool) {
        match self {
            Face::Left => (0, false),
            Face::Right => (0, true),
            Face::Bottom => (1, false),
            Face::Top => (1, true),
            Face::Front => (2, false),
            Face::Back => (2, true),
        }
    }
}

impl FromStr for Face {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Face::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown face `{s}`")))
    }
}

/// Named node sets to create, each selected by one face. Repeating a name
/// takes the union of the faces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SetSpec(pub Vec<(String, Face)>);

impl SetSpec {
    /// One set per face of a `dim`-dimensional block, named after the face.
    pub fn all_faces(dim: usize) -> Self {
        SetSpec(
            Face::ALL[..2 * dim]
                .iter()
                .map(|f| (f.name().to_string(), *f))
                .collect(),
        )
    }

    pub fn with(mut self, name: impl Into<String>, face: Face) -> Self {
        self.0.push((name.into(), face));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectSpec {
    pub origin: [f64; 2],
    pub extents: [f64; 2],
    pub divisions: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpec {
    pub origin: [f64; 3],
    pub extents: [f64; 3],
    pub divisions: [usize; 3],
}

fn check_block(extents: &[f64], divisions: &[usize]) -> Result<()> {
    if divisions.contains(&0) {
        return Err(Error::Validation(format!(
            "element counts must be at least 1, got {divisions:?}"
        )));
    }
    if extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Validation(format!("extents must be positive, got {extents:?}")));
    }
    Ok(())
}

fn grid_mesh(origin: &[f64], extents: &[f64], divisions: &[usize], sets: &SetSpec) -> Result<Mesh> {
    let dim = origin.len();
    check_block(extents, divisions)?;
    let kind = ElementKind::for_dim(dim)?;
    let counts: Vec<usize> = divisions.iter().map(|n| n + 1).collect();
    let strides: Vec<usize> = (0..dim).map(|k| counts[..k].iter().product()).collect();
    let total: usize = counts.iter().product();

    let index_of = |idx: &[usize]| -> usize { idx.iter().zip(&strides).map(|(i, s)| i * s).sum() };
    let multi_index = |mut n: usize| -> Vec<usize> {
        (0..dim)
            .map(|k| {
                let i = n % counts[k];
                n /= counts[k];
                i
            })
            .collect()
    };

    let nodes: Vec<Node> = (0..total)
        .map(|id| {
            let idx = multi_index(id);
            let coords = (0..dim)
                .map(|k| {
                    // Pin the far face exactly so neighbouring blocks share coordinates.
                    if idx[k] == divisions[k] {
                        origin[k] + extents[k]
                    } else {
                        origin[k] + extents[k] * idx[k] as f64 / divisions[k] as f64
                    }
                })
                .collect();
            Node { id, coords }
        })
        .collect();

    let n_elems: usize = divisions.iter().product();
    let mut elements = Vec::with_capacity(n_elems);
    for e in 0..n_elems {
        let mut rem = e;
        let base: Vec<usize> = (0..dim)
            .map(|k| {
                let i = rem % divisions[k];
                rem /= divisions[k];
                i
            })
            .collect();
        let connectivity = kind
            .reference_vertices()
            .iter()
            .map(|v| {
                let idx: Vec<usize> = (0..dim).map(|k| base[k] + usize::from(v[k] > 0.0)).collect();
                index_of(&idx)
            })
            .collect();
        elements.push(Element {
            id: e,
            kind,
            connectivity,
        });
    }

    let mut node_sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (name, face) in &sets.0 {
        let (axis, high) = face.axis_and_side();
        if axis >= dim {
            return Err(Error::Validation(format!(
                "face `{}` does not exist in {dim}D",
                face.name()
            )));
        }
        let target = if high { divisions[axis] } else { 0 };
        let entry = node_sets.entry(name.clone()).or_default();
        entry.extend((0..total).filter(|&n| multi_index(n)[axis] == target));
        entry.sort_unstable();
        entry.dedup();
    }

    Mesh::new(dim, nodes, elements, node_sets)
}

/// Structured `nx × ny` Q4 grid over `[x0, x0+w] × [y0, y0+h]`. Nodes are
/// numbered with x varying fastest.
pub fn generate_rect_mesh(spec: &RectSpec, sets: &SetSpec) -> Result<Mesh> {
    grid_mesh(&spec.origin, &spec.extents, &spec.divisions, sets)
}

/// Structured `nx × ny × nz` H8 grid.
pub fn generate_box_mesh(spec: &BoxSpec, sets: &SetSpec) -> Result<Mesh> {
    grid_mesh(&spec.origin, &spec.extents, &spec.divisions, sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, nx: usize, ny: usize) -> Mesh {
        generate_rect_mesh(
            &RectSpec {
                origin: [x0, 0.0],
                extents: [1.0, 1.0],
                divisions: [nx, ny],
            },
            &SetSpec::all_faces(2),
        )
        .unwrap()
    }

    #[test]
    fn counts() {
        let m = rect(0.0, 2, 2);
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.element_count(), 4);
        assert_eq!(m.node_set("left").unwrap(), &[0, 3, 6]);
        assert_eq!(m.node_set("top").unwrap(), &[6, 7, 8]);
        m.check_orientation().unwrap();

        let b = generate_box_mesh(
            &BoxSpec {
                origin: [0.0; 3],
                extents: [2.0, 1.0, 1.0],
                divisions: [2, 1, 3],
            },
            &SetSpec::all_faces(3),
        )
        .unwrap();
        assert_eq!(b.node_count(), 3 * 2 * 4);
        assert_eq!(b.element_count(), 6);
        assert_eq!(b.node_set("front").unwrap().len(), 6);
        b.check_orientation().unwrap();
    }

    #[test]
    fn rejects_zero_divisions() {
        let spec = RectSpec {
            origin: [0.0; 2],
            extents: [1.0, 1.0],
            divisions: [0, 2],
        };
        assert!(generate_rect_mesh(&spec, &SetSpec::default()).is_err());
    }

    #[test]
    fn mismatched_interfaces_do_not_coincide() {
        let a = rect(0.0, 3, 3);
        let b = rect(1.0, 5, 5);
        let ra: Vec<f64> = a.node_set("right").unwrap().iter().map(|&n| a.coords(n)[1]).collect();
        let lb: Vec<f64> = b.node_set("left").unwrap().iter().map(|&n| b.coords(n)[1]).collect();
        let interior_shared = ra[1..ra.len() - 1]
            .iter()
            .filter(|y| lb.iter().any(|z| (*y - z).abs() < 1e-12))
            .count();
        assert_eq!(interior_shared, 0);
    }

    #[test]
    fn gap_offset_sets_min_distance() {
        let a = rect(0.0, 3, 4);
        let b = rect(1.03, 5, 4);
        let mut min = f64::INFINITY;
        for p in a.nodes() {
            for q in b.nodes() {
                let d = ((p.coords[0] - q.coords[0]).powi(2) + (p.coords[1] - q.coords[1]).powi(2)).sqrt();
                min = min.min(d);
            }
        }
        assert!((min - 0.03).abs() < 1e-12, "min distance {min}");
    }
}
