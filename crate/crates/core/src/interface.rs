//! Enforced interface constraints between independently meshed subdomains.
//!
//! Preprocessing pairs every slave interface node with a master element,
//! inverts the isoparametric map to find the node's reference coordinates in
//! that element and stores the shape-function values there. At training time
//! the slave node's displacement is overwritten by the interpolant of the
//! master element's nodal displacements, so continuity holds exactly without
//! any penalty term.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::mesh::{shape_values, ElementGeometry, Mesh, REFERENCE_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Unidirectional,
    Bidirectional,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Unidirectional => "unidirectional",
            Direction::Bidirectional => "bidirectional",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unidirectional" => Ok(Direction::Unidirectional),
            "bidirectional" => Ok(Direction::Bidirectional),
            other => Err(Error::Validation(format!("unknown direction `{other}`"))),
        }
    }
}

/// Preprocessing tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceOptions {
    /// Newton residual bound on `‖Σ N_i x_i − x_o‖₂`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// How far outside `[-1, 1]` a mapped point may lie (gap geometries).
    pub extrapolation_slack: f64,
    /// Number of nearest master elements tried per slave node.
    pub max_candidates: usize,
}

impl Default for InterfaceOptions {
    fn default() -> Self {
        InterfaceOptions {
            tolerance: 1e-10,
            max_iter: 50,
            extrapolation_slack: 0.25,
            max_candidates: 8,
        }
    }
}

/// A slave node and its master elements ranked by centroid distance
/// (nearest first, ties by lower element id).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeElementPair {
    pub slave_node: usize,
    pub master_subdomain: usize,
    pub master_element: usize,
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceConstraint {
    pub slave_subdomain: usize,
    pub slave_node: usize,
    pub master_subdomain: usize,
    pub master_element: usize,
    pub master_nodes: Vec<usize>,
    pub xi: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

impl InterfaceConstraint {
    /// `Σ_i N_i · row_i` over the master element's nodal rows.
    fn interpolate(&self, master: &Array2<f64>) -> Array1<f64> {
        let mut value = Array1::zeros(master.ncols());
        for (&n, &c) in self.master_nodes.iter().zip(&self.coefficients) {
            value.scaled_add(c, &master.row(n));
        }
        value
    }
}

/// Ordered constraint records; application order respects dependencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintTable {
    pub direction: Direction,
    pub records: Vec<InterfaceConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMap {
    pub xi: [f64; 3],
    pub residual_norm: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `Σ N_i(ξ) x_i = x_o` for `ξ` by Newton–Raphson from the element
/// center.
pub fn inverse_map(geom: &ElementGeometry, target: &[f64], tolerance: f64, max_iter: usize) -> Result<InverseMap> {
    let d = geom.kind.dim();
    let mut xi = [0.0; 3];
    let mut best = f64::INFINITY;
    for iter in 0..=max_iter {
        let x = geom.map_to_physical(&xi);
        let r: Vec<f64> = (0..d).map(|k| x[k] - target[k]).collect();
        let rn = norm(&r);
        if !rn.is_finite() {
            break;
        }
        best = best.min(rn);
        if rn <= tolerance {
            return Ok(InverseMap {
                xi,
                residual_norm: rn,
                iterations: iter,
            });
        }
        if iter == max_iter {
            break;
        }
        let jac = geom.jacobian_unchecked(&xi);
        let scale = jac.matrix.amax().powi(d as i32);
        if !jac.det.is_finite() || jac.det.abs() <= 1e-14 * scale {
            return Err(Error::SingularJacobian { det_j: jac.det });
        }
        let inv = jac
            .matrix
            .try_inverse()
            .ok_or(Error::SingularJacobian { det_j: jac.det })?;
        for k in 0..d {
            let step: f64 = (0..d).map(|j| inv[(k, j)] * r[j]).sum();
            xi[k] -= step;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        best_residual: best,
    })
}

/// Uniform hash grid over element centroids for nearest-element queries.
struct CentroidGrid {
    dim: usize,
    lo: Vec<f64>,
    cell: f64,
    dims: Vec<i64>,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
    centroids: Vec<Vec<f64>>,
}

impl CentroidGrid {
    fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let centroids: Vec<Vec<f64>> = (0..mesh.element_count()).map(|e| mesh.element_centroid(e)).collect();
        let (lo, hi) = crate::mesh::bounding_box(centroids.iter().map(Vec::as_slice), dim);
        let (nlo, nhi) = mesh.bounding_box();
        let measure: f64 = (0..dim).map(|k| (nhi[k] - nlo[k]).max(1e-300)).product();
        let mut cell = (measure / centroids.len() as f64).powf(1.0 / dim as f64);
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let dims: Vec<i64> = (0..dim).map(|k| ((hi[k] - lo[k]) / cell).floor() as i64 + 1).collect();
        let mut grid = CentroidGrid {
            dim,
            lo,
            cell,
            dims,
            buckets: HashMap::new(),
            centroids,
        };
        for e in 0..grid.centroids.len() {
            let key = grid.cell_of(&grid.centroids[e]);
            grid.buckets.entry(key).or_default().push(e);
        }
        grid
    }

    fn cell_of(&self, p: &[f64]) -> Vec<i64> {
        (0..self.dim)
            .map(|k| ((p[k] - self.lo[k]) / self.cell).floor() as i64)
            .collect()
    }

    /// The `k` nearest centroids to `p` as `(distance, element)` pairs.
    fn nearest(&self, p: &[f64], k: usize) -> Vec<(f64, usize)> {
        let c = self.cell_of(p);
        let max_ring = (0..self.dim)
            .map(|a| c[a].abs().max((self.dims[a] - 1 - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut found: Vec<(f64, usize)> = Vec::new();
        for r in 0..=max_ring {
            self.visit_ring(&c, r, &mut |e| {
                let d = norm(&p.iter().zip(&self.centroids[e]).map(|(a, b)| a - b).collect::<Vec<_>>());
                found.push((d, e));
            });
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                // Anything outside ring r is at least r·cell away.
                if found[k - 1].0 < r as f64 * self.cell {
                    break;
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found
    }

    fn visit_ring(&self, center: &[i64], r: i64, f: &mut impl FnMut(usize)) {
        let ranges: Vec<(i64, i64)> = (0..self.dim)
            .map(|a| ((center[a] - r).max(0), (center[a] + r).min(self.dims[a] - 1)))
            .collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return;
        }
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let cheb = (0..self.dim).map(|a| (idx[a] - center[a]).abs()).max().unwrap_or(0);
            if cheb == r {
                if let Some(list) = self.buckets.get(&idx) {
                    list.iter().for_each(|&e| f(e));
                }
            }
            let mut a = 0;
            loop {
                if a == self.dim {
                    return;
                }
                idx[a] += 1;
                if idx[a] <= ranges[a].1 {
                    break;
                }
                idx[a] = ranges[a].0;
                a += 1;
            }
        }
    }
}

/// Ranks candidate master elements for every node of `slave_set`.
pub fn pair_nodes(
    slave_mesh: &Mesh,
    slave_set: &str,
    master_mesh: &Mesh,
    master_subdomain: usize,
    max_candidates: usize,
) -> Result<Vec<NodeElementPair>> {
    let ids = slave_mesh.node_set(slave_set)?;
    if ids.is_empty() {
        return Err(Error::Validation(format!("slave set `{slave_set}` is empty")));
    }
    if slave_mesh.dim() != master_mesh.dim() {
        return Err(Error::Validation("slave and master meshes differ in dimension".into()));
    }
    let grid = CentroidGrid::new(master_mesh);
    let k = max_candidates.max(1).min(master_mesh.element_count());
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    Ok(sorted
        .into_iter()
        .map(|n| {
            let candidates: Vec<usize> = grid
                .nearest(slave_mesh.coords(n), k)
                .into_iter()
                .map(|(_, e)| e)
                .collect();
            NodeElementPair {
                slave_node: n,
                master_subdomain,
                master_element: candidates[0],
                candidates,
            }
        })
        .collect())
}

/// Runs the inverse map for every pair and emits the constraint table.
///
/// A candidate that contains the node (within [`REFERENCE_SLACK`]) is taken
/// in ranking order. Failing that, the converged candidate with the smallest
/// overshoot not exceeding `extrapolation_slack` is used.
pub fn build_constraints(
    pairs: &[NodeElementPair],
    slave_mesh: &Mesh,
    slave_subdomain: usize,
    master_mesh: &Mesh,
    options: &InterfaceOptions,
) -> Result<ConstraintTable> {
    let d = master_mesh.dim();
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let x_o = slave_mesh.coords(pair.slave_node);
        let mut best_residual = f64::INFINITY;
        let mut best_overshoot = f64::INFINITY;
        let mut chosen: Option<(usize, InverseMap, f64)> = None;
        for &e in &pair.candidates {
            let geom = master_mesh.element_geometry(e);
            let map = match inverse_map(&geom, x_o, options.tolerance, options.max_iter) {
                Ok(m) => m,
                Err(Error::NoConvergence { best_residual: r, .. }) => {
                    best_residual = best_residual.min(r);
                    continue;
                }
                Err(Error::SingularJacobian { .. }) => continue,
                Err(other) => return Err(other),
            };
            best_residual = best_residual.min(map.residual_norm);
            let overshoot = map.xi[..d]
                .iter()
                .map(|v| v.abs() - 1.0)
                .fold(f64::NEG_INFINITY, f64::max);
            best_overshoot = best_overshoot.min(overshoot);
            if overshoot <= REFERENCE_SLACK {
                chosen = Some((e, map, overshoot));
                break;
            }
            if overshoot <= options.extrapolation_slack && chosen.as_ref().is_none_or(|c| overshoot < c.2) {
                chosen = Some((e, map, overshoot));
            }
        }
        let Some((e, map, _)) = chosen else {
            return Err(Error::Unmappable {
                subdomain: slave_subdomain,
                node: pair.slave_node,
                best_residual,
                best_overshoot,
            });
        };
        let xi = map.xi[..d].to_vec();
        records.push(InterfaceConstraint {
            slave_subdomain,
            slave_node: pair.slave_node,
            master_subdomain: pair.master_subdomain,
            master_element: e,
            master_nodes: master_mesh.elements()[e].connectivity.clone(),
            coefficients: shape_values(master_mesh.kind(), &xi),
            xi,
            residual_norm: map.residual_norm,
        });
    }
    records.sort_by_key(|r| r.slave_node);
    Ok(ConstraintTable {
        direction: Direction::Unidirectional,
        records,
    })
}

impl ConstraintTable {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Combines tables into one, rejecting duplicate slaves and cyclic
    /// dependencies, and orders records so that every slave is written after
    /// any slave it reads from.
    pub fn merge(tables: &[ConstraintTable]) -> Result<ConstraintTable> {
        let direction = if tables.iter().any(|t| t.direction == Direction::Bidirectional) {
            Direction::Bidirectional
        } else {
            Direction::Unidirectional
        };
        let records: Vec<InterfaceConstraint> = tables.iter().flat_map(|t| t.records.iter().cloned()).collect();
        let mut table = ConstraintTable { direction, records };
        table.sort_dependencies()?;
        Ok(table)
    }

    /// Topologically sorts the records (stable for independent records).
    pub fn sort_dependencies(&mut self) -> Result<()> {
        let mut slave_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if slave_index.insert((r.slave_subdomain, r.slave_node), i).is_some() {
                return Err(Error::Validation(format!(
                    "slave node {} of subdomain {} is constrained twice",
                    r.slave_node, r.slave_subdomain
                )));
            }
        }
        // deps[i]: records that must be applied before record i.
        let deps: Vec<Vec<usize>> = self
            .records
            .iter()
            .map(|r| {
                let mut d: Vec<usize> = r
                    .master_nodes
                    .iter()
                    .filter_map(|&n| slave_index.get(&(r.master_subdomain, n)).copied())
                    .collect();
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.records.len()];
        let mut order = Vec::with_capacity(self.records.len());
        for start in 0..self.records.len() {
            if state[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if *next < deps[node].len() {
                    let dep = deps[node][*next];
                    *next += 1;
                    match state[dep] {
                        0 => {
                            state[dep] = 1;
                            stack.push((dep, 0));
                        }
                        1 => {
                            let r = &self.records[dep];
                            return Err(Error::CyclicConstraint {
                                subdomain: r.slave_subdomain,
                                node: r.slave_node,
                            });
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    order.push(node);
                    stack.pop();
                }
            }
        }
        let mut old: Vec<Option<InterfaceConstraint>> =
            std::mem::take(&mut self.records).into_iter().map(Some).collect();
        self.records = order.into_iter().map(|i| old[i].take().unwrap()).collect();
        Ok(())
    }

    fn check_indices(&self, fields: &[Array2<f64>]) -> Result<()> {
        for r in &self.records {
            let ok = fields.get(r.slave_subdomain).is_some_and(|f| r.slave_node < f.nrows())
                && fields
                    .get(r.master_subdomain)
                    .is_some_and(|f| r.master_nodes.iter().all(|&n| n < f.nrows()));
            if !ok {
                return Err(Error::ShapeMismatch(format!(
                    "constraint on slave node {} of subdomain {} indexes outside the supplied fields",
                    r.slave_node, r.slave_subdomain
                )));
            }
        }
        Ok(())
    }

    /// Largest `|u_slave − Σ N_i u_master,i|` over all records.
    pub fn max_jump(&self, fields: &[Array2<f64>]) -> Result<f64> {
        self.check_indices(fields)?;
        Ok(self
            .records
            .iter()
            .map(|r| {
                let interp = r.interpolate(&fields[r.master_subdomain]);
                fields[r.slave_subdomain]
                    .row(r.slave_node)
                    .iter()
                    .zip(&interp)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max))
    }

    /// Writes the table in the text cache format.
    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "dpinn-constraints v1 direction={}", self.direction)?;
        let mut i = 0;
        while i < self.records.len() {
            let s = self.records[i].slave_subdomain;
            let end = self.records[i..]
                .iter()
                .position(|r| r.slave_subdomain != s)
                .map_or(self.records.len(), |p| i + p);
            writeln!(w, "group slave={s} count={}", end - i)?;
            for r in &self.records[i..end] {
                write!(w, "{} {} {}", r.slave_node, r.master_subdomain, r.master_element)?;
                for v in r.xi.iter().chain(&r.coefficients) {
                    write!(w, " {v:.16e}")?;
                }
                writeln!(w, " {:.16e}", r.residual_norm)?;
            }
            i = end;
        }
        Ok(())
    }

    /// Reads a table written by [`ConstraintTable::write`]; master node lists
    /// are recovered from `meshes`.
    pub fn read(reader: impl BufRead, meshes: &[Mesh]) -> Result<ConstraintTable> {
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('#')));
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty constraint file".into()))?;
        let header = header.map_err(|e| perr(ln, e.to_string()))?;
        let direction = header
            .strip_prefix("dpinn-constraints v1 direction=")
            .ok_or_else(|| perr(ln, format!("bad header `{header}`")))?
            .trim()
            .parse()?;
        let mut records = Vec::new();
        let mut slave_subdomain = None;
        for (ln, line) in lines {
            let line = line.map_err(|e| perr(ln, e.to_string()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "group" {
                let s = toks
                    .get(1)
                    .and_then(|t| t.strip_prefix("slave="))
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| perr(ln, format!("bad group line `{line}`")))?;
                slave_subdomain = Some(s);
                continue;
            }
            let s = slave_subdomain.ok_or_else(|| perr(ln, "record before group line".into()))?;
            let int = |i: usize| -> Result<usize> {
                toks.get(i)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr(ln, format!("bad integer field {}", i + 1)))
            };
            let slave_node = int(0)?;
            let master_subdomain = int(1)?;
            let master_element = int(2)?;
            let mesh = meshes
                .get(master_subdomain)
                .ok_or_else(|| perr(ln, format!("unknown master subdomain {master_subdomain}")))?;
            let el = mesh
                .elements()
                .get(master_element)
                .ok_or_else(|| perr(ln, format!("unknown master element {master_element}")))?;
            let (d, m) = (mesh.dim(), el.connectivity.len());
            if toks.len() != 3 + d + m + 1 {
                return Err(perr(
                    ln,
                    format!("expected {} fields, found {}", 3 + d + m + 1, toks.len()),
                ));
            }
            let floats = toks[3..]
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    t.parse::<f64>()
                        .map_err(|_| perr(ln, format!("bad float field {}", i + 4)))
                })
                .collect::<Result<Vec<f64>>>()?;
            records.push(InterfaceConstraint {
                slave_subdomain: s,
                slave_node,
                master_subdomain,
                master_element,
                master_nodes: el.connectivity.clone(),
                xi: floats[..d].to_vec(),
                coefficients: floats[d..d + m].to_vec(),
                residual_norm: floats[d + m],
            });
        }
        Ok(ConstraintTable { direction, records })
    }
}

/// Overwrites every slave row with the master-element interpolant.
pub fn apply_constraints(fields: &mut [Array2<f64>], table: &ConstraintTable) -> Result<()> {
    table.check_indices(fields)?;
    for r in &table.records {
        let value = r.interpolate(&fields[r.master_subdomain]);
        fields[r.slave_subdomain].row_mut(r.slave_node).assign(&value);
    }
    Ok(())
}

/// Adjoint of [`apply_constraints`]: moves each replaced slave's upstream
/// gradient onto its master vertices (weighted by the coefficients) and
/// zeroes the slave entry.
pub fn constraint_backprop(grads: &mut [Array2<f64>], table: &ConstraintTable) -> Result<()> {
    table.check_indices(grads)?;
    for r in table.records.iter().rev() {
        let g = grads[r.slave_subdomain].row(r.slave_node).to_owned();
        grads[r.slave_subdomain].row_mut(r.slave_node).fill(0.0);
        let master = &mut grads[r.master_subdomain];
        for (&n, &c) in r.master_nodes.iter().zip(&r.coefficients) {
            master.row_mut(n).scaled_add(c, &g);
        }
    }
    Ok(())
}

/// Pairs `slave_set` of `slave_mesh` against `master_mesh` and builds the
/// unidirectional table in one call.
pub fn build_interface(
    slave_mesh: &Mesh,
    slave_subdomain: usize,
    slave_set: &str,
    master_mesh: &Mesh,
    master_subdomain: usize,
    options: &InterfaceOptions,
) -> Result<ConstraintTable> {
    let pairs = pair_nodes(
        slave_mesh,
        slave_set,
        master_mesh,
        master_subdomain,
        options.max_candidates,
    )?;
    build_constraints(&pairs, slave_mesh, slave_subdomain, master_mesh, options)
}
