//! Ready-made decomposed problems used by the command line and the test
//! suites. All blocks carry one node set per face (`left`, `right`,
//! `bottom`, `top`, and in 3D `front`, `back`).

use crate::energy::Material;
use crate::error::{Error, Result};
use crate::mesh::{generate_box_mesh, generate_rect_mesh, BoxSpec, Mesh, RectSpec, SetSpec};
use crate::model::NetworkSpec;
use crate::problem::{InterfaceSpec, Problem, Subdomain};

/// Plane-stress material with `E = 3 GPa`, `ν = 0.3`, unit thickness.
pub fn default_material() -> Material {
    Material::plane_stress(3.0e9, 0.3)
}

/// Network used by the presets: default architecture with displacement scale
/// `output_scale`.
pub fn default_network(dim: usize, output_scale: f64) -> NetworkSpec {
    NetworkSpec {
        output_scale,
        ..NetworkSpec::new(dim)
    }
}

pub fn block(origin: [f64; 2], extents: [f64; 2], divisions: [usize; 2]) -> Result<Mesh> {
    generate_rect_mesh(
        &RectSpec {
            origin,
            extents,
            divisions,
        },
        &SetSpec::all_faces(2),
    )
}

pub fn brick(origin: [f64; 3], extents: [f64; 3], divisions: [usize; 3]) -> Result<Mesh> {
    generate_box_mesh(
        &BoxSpec {
            origin,
            extents,
            divisions,
        },
        &SetSpec::all_faces(3),
    )
}

/// `2 × 1` m plate, `nx × ny` elements, clamped on the left edge with the
/// resultant `(0, −load)` N on the right edge. One subdomain.
pub fn cantilever(nx: usize, ny: usize, load: f64, net: &NetworkSpec) -> Result<Problem> {
    let sub = Subdomain::new(block([0.0, 0.0], [2.0, 1.0], [nx, ny])?, 0)
        .clamp("left")?
        .load("right", &[0.0, -load])?;
    Problem::new(default_material(), vec![sub], vec![net.clone()], &[])
}

/// The cantilever plate split at `x = 1` into an `8 × 7` and a `12 × 11`
/// block; the finer block's left edge is slaved to the coarser block.
pub fn nonconforming_pair(load: f64, net: &NetworkSpec) -> Result<Problem> {
    let a = Subdomain::new(block([0.0, 0.0], [1.0, 1.0], [8, 7])?, 0).clamp("left")?;
    let b = Subdomain::new(block([1.0, 0.0], [1.0, 1.0], [12, 11])?, 1).load("right", &[0.0, -load])?;
    Problem::new(
        default_material(),
        vec![a, b],
        vec![net.clone(), net.clone()],
        &[InterfaceSpec::new(1, "left", 0)],
    )
}

/// Two unit blocks separated by a gap along `x`: `[0,1]²` and
/// `[1+gap, 2+gap] × [0,1]`, each `n × n` elements. The first is clamped on
/// its far-left edge and pushed down on the edge facing the gap; the second
/// is clamped on its far-right edge and pushed up on the facing edge.
pub fn gap_meshes(gap: f64, n: usize) -> Result<[Mesh; 2]> {
    if !(gap >= 0.0 && gap.is_finite()) {
        return Err(Error::Validation(format!("gap must be non-negative, got {gap}")));
    }
    Ok([
        block([0.0, 0.0], [1.0, 1.0], [n, n])?,
        block([1.0 + gap, 0.0], [1.0, 1.0], [n, n])?,
    ])
}

/// Gap fixture with no interface coupling. With `single_network` one network
/// serves both blocks (its input box spans both); otherwise each block has
/// its own network.
pub fn gap_pair(gap: f64, n: usize, load: f64, single_network: bool, net: &NetworkSpec) -> Result<Problem> {
    let [ma, mb] = gap_meshes(gap, n)?;
    let a = Subdomain::new(ma, 0).clamp("left")?.load("right", &[0.0, -load])?;
    let b = Subdomain::new(mb, if single_network { 0 } else { 1 })
        .clamp("right")?
        .load("left", &[0.0, load])?;
    let nets = if single_network {
        vec![net.clone()]
    } else {
        vec![net.clone(), net.clone()]
    };
    Problem::new(default_material(), vec![a, b], nets, &[])
}

/// `3 × 1 × 1` m solid beam split at `x = 1` into an `8 × 4 × 4` and a
/// `12 × 5 × 5` brick; the finer brick's left face is slaved. Clamped at
/// `x = 0`, the resultant `(0, load, load)` N acts on the far face.
pub fn box_pair(load: f64, net: &NetworkSpec) -> Result<Problem> {
    let a = Subdomain::new(brick([0.0; 3], [1.0, 1.0, 1.0], [8, 4, 4])?, 0).clamp("left")?;
    let b =
        Subdomain::new(brick([1.0, 0.0, 0.0], [2.0, 1.0, 1.0], [12, 5, 5])?, 1).load("right", &[0.0, load, load])?;
    Problem::new(
        Material::solid(3.0e9, 0.3),
        vec![a, b],
        vec![net.clone(), net.clone()],
        &[InterfaceSpec::new(1, "left", 0)],
    )
}

/// Four unit squares forming an L: a horizontal arm `[0,3] × [0,1]` split in
/// three (`6×6`, `9×9`, `6×6`) and a vertical arm `[2,3] × [1,2]` (`9×9`).
pub fn l_shape_meshes() -> Result<[Mesh; 4]> {
    Ok([
        block([0.0, 0.0], [1.0, 1.0], [6, 6])?,
        block([1.0, 0.0], [1.0, 1.0], [9, 9])?,
        block([2.0, 0.0], [1.0, 1.0], [6, 6])?,
        block([2.0, 1.0], [1.0, 1.0], [9, 9])?,
    ])
}

/// L-shaped domain with three interfaces, clamped at `x = 0` and loaded on the
/// top edge of the vertical arm with the resultant `load` N.
pub fn l_shape(load: [f64; 2], net: &NetworkSpec) -> Result<Problem> {
    let [a, b, c, d] = l_shape_meshes()?;
    let subs = vec![
        Subdomain::new(a, 0).clamp("left")?,
        Subdomain::new(b, 1),
        Subdomain::new(c, 2),
        Subdomain::new(d, 3).load("top", &load)?,
    ];
    Problem::new(
        default_material(),
        subs,
        vec![net.clone(); 4],
        &[
            InterfaceSpec::new(1, "left", 0),
            InterfaceSpec::new(1, "right", 2),
            InterfaceSpec::new(3, "bottom", 2),
        ],
    )
}

/// Six-element two-block problem: `2 × 1` and `2 × 2` elements with the finer
/// block's left edge slaved, clamped on the left and loaded on the right.
pub fn tiny_pair(material: Material, load: [f64; 2], net: &NetworkSpec) -> Result<Problem> {
    let a = Subdomain::new(block([0.0, 0.0], [1.0, 1.0], [2, 1])?, 0).clamp("left")?;
    let b = Subdomain::new(block([1.0, 0.0], [1.0, 1.0], [2, 2])?, 1).load("right", &load)?;
    Problem::new(
        material,
        vec![a, b],
        vec![net.clone(), net.clone()],
        &[InterfaceSpec::new(1, "left", 0)],
    )
}
