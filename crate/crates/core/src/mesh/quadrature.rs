use super::ElementKind;

/// Tensor-product Gauss–Legendre rule on the reference element.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_g ω_g f(ξ_g)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// Two points per axis (±1/√3, unit weights): full integration for
/// bi/trilinear elements.
pub fn quadrature_rule(kind: ElementKind) -> QuadratureRule {
    let g = 1.0 / 3f64.sqrt();
    let axis = [-g, g];
    let mut points = Vec::new();
    match kind {
        ElementKind::Q4 => {
            for &eta in &axis {
                for &xi in &axis {
                    points.push(vec![xi, eta]);
                }
            }
        }
        ElementKind::H8 => {
            for &zeta in &axis {
                for &eta in &axis {
                    for &xi in &axis {
                        points.push(vec![xi, eta, zeta]);
                    }
                }
            }
        }
    }
    let weights = vec![1.0; points.len()];
    QuadratureRule { points, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_counts_and_weight_sums() {
        let q4 = quadrature_rule(ElementKind::Q4);
        assert_eq!(q4.len(), 4);
        assert_eq!(q4.weights.iter().sum::<f64>(), 4.0);
        let h8 = quadrature_rule(ElementKind::H8);
        assert_eq!(h8.len(), 8);
        assert_eq!(h8.weights.iter().sum::<f64>(), 8.0);
    }

    #[test]
    fn integrates_cubic_per_axis_exactly() {
        let q4 = quadrature_rule(ElementKind::Q4);
        // ∫∫ ξ²η² over [-1,1]² = (2/3)² = 4/9
        assert_abs_diff_eq!(q4.integrate(|p| p[0] * p[0] * p[1] * p[1]), 4.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q4.integrate(|p| p[0].powi(3) * p[1] + 1.0), 4.0, epsilon = 1e-15);
        let h8 = quadrature_rule(ElementKind::H8);
        assert_abs_diff_eq!(
            h8.integrate(|p| p[0] * p[0] * p[1] * p[1] * p[2] * p[2]),
            8.0 / 27.0,
            epsilon = 1e-15
        );
    }
}
