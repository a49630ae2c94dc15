use nalgebra::DMatrix;

use super::ElementKind;
use crate::error::{Error, Result};

/// Tolerance on reference coordinates for points that drift just outside
/// `[-1, 1]^d` through floating-point error.
pub const REFERENCE_SLACK: f64 = 1e-8;

/// Isoparametric shape functions `N_i(ξ)` at a reference point.
pub fn shape_values(kind: ElementKind, xi: &[f64]) -> Vec<f64> {
    let d = kind.dim();
    debug_assert!(xi.len() >= d);
    let scale = 0.5f64.powi(d as i32);
    kind.reference_vertices()
        .iter()
        .map(|v| (0..d).map(|k| 1.0 + v[k] * xi[k]).product::<f64>() * scale)
        .collect()
}

/// Reference-space shape gradients as an `m × d` matrix, row `i` holding
/// `∂N_i/∂ξ`.
pub fn shape_gradients(kind: ElementKind, xi: &[f64]) -> DMatrix<f64> {
    let d = kind.dim();
    debug_assert!(xi.len() >= d);
    let scale = 0.5f64.powi(d as i32);
    let verts = kind.reference_vertices();
    DMatrix::from_fn(verts.len(), d, |i, k| {
        let v = &verts[i];
        let mut g = v[k] * scale;
        for j in (0..d).filter(|&j| j != k) {
            g *= 1.0 + v[j] * xi[j];
        }
        g
    })
}

/// Jacobian of the reference-to-physical map, `J[j][k] = ∂x_j/∂ξ_k`.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub det: f64,
}

/// One element's kind and vertex coordinates (`m × d`).
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub id: usize,
    pub kind: ElementKind,
    pub coords: DMatrix<f64>,
}

impl ElementGeometry {
    pub fn new(id: usize, kind: ElementKind, coords: DMatrix<f64>) -> Self {
        assert_eq!(coords.nrows(), kind.node_count());
        assert_eq!(coords.ncols(), kind.dim());
        ElementGeometry { id, kind, coords }
    }

    /// Physical coordinates of a reference point.
    pub fn map_to_physical(&self, xi: &[f64]) -> Vec<f64> {
        let n = shape_values(self.kind, xi);
        (0..self.kind.dim())
            .map(|j| n.iter().enumerate().map(|(i, ni)| ni * self.coords[(i, j)]).sum())
            .collect()
    }

    /// Jacobian without any orientation check.
    pub fn jacobian_unchecked(&self, xi: &[f64]) -> Jacobian {
        let grads = shape_gradients(self.kind, xi);
        let matrix = self.coords.transpose() * grads;
        let det = matrix.determinant();
        Jacobian { matrix, det }
    }

    /// Jacobian at `xi`; fails if `det J <= 0`.
    pub fn jacobian(&self, xi: &[f64]) -> Result<Jacobian> {
        let jac = self.jacobian_unchecked(xi);
        if jac.det <= 0.0 || !jac.det.is_finite() {
            return Err(Error::DegenerateElement {
                element: self.id,
                det_j: jac.det,
            });
        }
        Ok(jac)
    }

    /// Physical shape gradients `∂N_i/∂x` (`m × d`) and `det J`.
    pub fn physical_gradients(&self, xi: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let grads = shape_gradients(self.kind, xi);
        let jac = self.jacobian(xi)?;
        let inv = jac.matrix.clone().try_inverse().ok_or(Error::DegenerateElement {
            element: self.id,
            det_j: jac.det,
        })?;
        Ok((grads * inv, jac.det))
    }

    /// Strain-displacement matrix `B` (Voigt rows × `m·d`) so that
    /// `ε = B · u_e`, with `u_e` stacked node-major. Voigt order is
    /// `(xx, yy, xy)` in 2D and `(xx, yy, zz, xy, yz, xz)` in 3D, shears in
    /// engineering form.
    pub fn strain_operator(&self, xi: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let (dn, det) = self.physical_gradients(xi)?;
        let m = self.kind.node_count();
        let d = self.kind.dim();
        let mut b = DMatrix::zeros(self.kind.voigt_size(), m * d);
        for i in 0..m {
            if d == 2 {
                let (gx, gy) = (dn[(i, 0)], dn[(i, 1)]);
                b[(0, 2 * i)] = gx;
                b[(1, 2 * i + 1)] = gy;
                b[(2, 2 * i)] = gy;
                b[(2, 2 * i + 1)] = gx;
            } else {
                let (gx, gy, gz) = (dn[(i, 0)], dn[(i, 1)], dn[(i, 2)]);
                let c = 3 * i;
                b[(0, c)] = gx;
                b[(1, c + 1)] = gy;
                b[(2, c + 2)] = gz;
                b[(3, c)] = gy;
                b[(3, c + 1)] = gx;
                b[(4, c + 1)] = gz;
                b[(4, c + 2)] = gy;
                b[(5, c)] = gz;
                b[(5, c + 2)] = gx;
            }
        }
        Ok((b, det))
    }

    /// Vertex mean.
    pub fn centroid(&self) -> Vec<f64> {
        let m = self.coords.nrows() as f64;
        (0..self.coords.ncols())
            .map(|j| self.coords.column(j).sum() / m)
            .collect()
    }
}

/// Free-function form of [`ElementGeometry::strain_operator`].
pub fn strain_operator(coords: &DMatrix<f64>, xi: &[f64], kind: ElementKind) -> Result<(DMatrix<f64>, f64)> {
    ElementGeometry::new(0, kind, coords.clone()).strain_operator(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q4(coords: [[f64; 2]; 4]) -> ElementGeometry {
        ElementGeometry::new(7, ElementKind::Q4, DMatrix::from_fn(4, 2, |i, j| coords[i][j]))
    }

    #[test]
    fn q4_center_and_vertex_values() {
        let n = shape_values(ElementKind::Q4, &[0.0, 0.0]);
        assert_eq!(n, vec![0.25; 4]);
        let n = shape_values(ElementKind::Q4, &[-1.0, -1.0]);
        assert_eq!(n, vec![1.0, 0.0, 0.0, 0.0]);
        let n = shape_values(ElementKind::H8, &[0.0, 0.0, 0.0]);
        assert_eq!(n, vec![0.125; 8]);
    }

    #[test]
    fn q4_gradient_patterns() {
        let g = shape_gradients(ElementKind::Q4, &[0.0, 0.0]);
        let expected = [[-0.25, -0.25], [0.25, -0.25], [0.25, 0.25], [-0.25, 0.25]];
        for i in 0..4 {
            for k in 0..2 {
                assert_eq!(g[(i, k)], expected[i][k]);
            }
        }
        let g = shape_gradients(ElementKind::Q4, &[1.0, 1.0]);
        assert_eq!((g[(2, 0)], g[(2, 1)]), (0.5, 0.5));
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-6;
        for kind in [ElementKind::Q4, ElementKind::H8] {
            let xi = [0.31, -0.47, 0.12];
            let g = shape_gradients(kind, &xi);
            for k in 0..kind.dim() {
                let mut xp = xi;
                let mut xm = xi;
                xp[k] += h;
                xm[k] -= h;
                let np = shape_values(kind, &xp);
                let nm = shape_values(kind, &xm);
                for i in 0..kind.node_count() {
                    let fd = (np[i] - nm[i]) / (2.0 * h);
                    assert_abs_diff_eq!(fd, g[(i, k)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn reference_element_has_identity_jacobian() {
        let el = q4([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]);
        let j = el.jacobian(&[0.2, -0.7]).unwrap();
        assert_eq!(j.matrix, DMatrix::identity(2, 2));
        assert_eq!(j.det, 1.0);
    }

    #[test]
    fn rectangle_det_is_quarter_area() {
        let (a, b) = (3.0, 0.5);
        let el = q4([[1.0, 2.0], [1.0 + a, 2.0], [1.0 + a, 2.0 + b], [1.0, 2.0 + b]]);
        for xi in [[0.0, 0.0], [0.5, -0.9], [-1.0, 1.0]] {
            assert_abs_diff_eq!(el.jacobian(&xi).unwrap().det, a * b / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn clockwise_element_is_degenerate() {
        let el = q4([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        match el.jacobian(&[0.0, 0.0]) {
            Err(Error::DegenerateElement { element, det_j }) => {
                assert_eq!(element, 7);
                assert!(det_j < 0.0);
            }
            other => panic!("expected degenerate element, got {other:?}"),
        }
    }

    #[test]
    fn strain_operator_kernels() {
        let el = q4([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let (b, _) = el.strain_operator(&[0.3, 0.1]).unwrap();
        let translation = nalgebra::DVector::from_fn(8, |i, _| if i % 2 == 0 { 0.4 } else { -1.3 });
        assert!((&b * translation).amax() < 1e-15);

        // u = (x, 0)
        let u = nalgebra::DVector::from_fn(8, |i, _| if i % 2 == 0 { el.coords[(i / 2, 0)] } else { 0.0 });
        let eps = &b * u;
        assert_abs_diff_eq!(eps[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eps[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eps[2], 0.0, epsilon = 1e-14);

        // infinitesimal rotation u = δ(−y, x)
        let delta = 1e-3;
        let u = nalgebra::DVector::from_fn(8, |i, _| {
            let (x, y) = (el.coords[(i / 2, 0)], el.coords[(i / 2, 1)]);
            if i % 2 == 0 {
                -delta * y
            } else {
                delta * x
            }
        });
        assert!((&b * u).amax() < 1e-15);
    }
}
