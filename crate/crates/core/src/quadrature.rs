//! Quadrature rules on intervals, segments, triangles, parallelograms and
//! star-shaped polygons.
//!
//! Interval and segment rules are Gauss–Legendre. Triangles use a collapsed
//! (Duffy) tensor product of Gauss–Legendre rules, which has strictly positive
//! weights and interior points for every order. Parallelograms use tensor Gauss
//! rules, and general polygons are split into a fan of triangles around their
//! barycenter.

use crate::error::{HhoError, Result};
use crate::Point;

/// Highest polynomial order any rule in this module is asked to integrate.
pub const MAX_QUADRATURE_ORDER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Maximum total degree integrated exactly.
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Sum of the weights, i.e. the measure of the integration domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(*p)).sum()
    }

    /// Degenerate rule for a point "face" of a 1D mesh (counting measure).
    pub fn point(p: Point) -> Self {
        QuadratureRule {
            points: vec![p],
            weights: vec![1.0],
            order: MAX_QUADRATURE_ORDER,
        }
    }

    /// Gauss–Legendre rule on the interval `[a, b]` (points stored as `[x, 0]`).
    pub fn interval(a: f64, b: f64, order: usize) -> Result<Self> {
        Self::segment([a, 0.0], [b, 0.0], order)
    }

    /// Gauss–Legendre rule along the straight segment `p0 → p1`, weights in length units.
    pub fn segment(p0: Point, p1: Point, order: usize) -> Result<Self> {
        check_order(order)?;
        let n = order / 2 + 1;
        let (nodes, weights) = gauss_legendre(n);
        let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
        let points = nodes
            .iter()
            .map(|&t| {
                let s = 0.5 * (t + 1.0);
                [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])]
            })
            .collect();
        let weights = weights.iter().map(|w| 0.5 * len * w).collect();
        Ok(QuadratureRule {
            points,
            weights,
            order,
        })
    }

    /// Collapsed Gauss rule on the triangle `(p0, p1, p2)`.
    pub fn triangle(p0: Point, p1: Point, p2: Point, order: usize) -> Result<Self> {
        check_order(order)?;
        // The collapsed direction carries the extra (1 - v) Jacobian factor.
        let n = (order + 2).div_ceil(2);
        let (nodes, gw) = gauss_legendre(n);
        let area2 = ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (iv, &tv) in nodes.iter().enumerate() {
            let v = 0.5 * (tv + 1.0);
            for (iu, &tu) in nodes.iter().enumerate() {
                let u = 0.5 * (tu + 1.0);
                let r = u * (1.0 - v);
                let s = v;
                points.push([
                    p0[0] + r * (p1[0] - p0[0]) + s * (p2[0] - p0[0]),
                    p0[1] + r * (p1[1] - p0[1]) + s * (p2[1] - p0[1]),
                ]);
                weights.push(0.25 * gw[iu] * gw[iv] * (1.0 - v) * area2);
            }
        }
        Ok(QuadratureRule {
            points,
            weights,
            order,
        })
    }

    /// Tensor Gauss rule on the parallelogram spanned by `p0 → p1` and `p0 → p3`.
    pub fn parallelogram(p0: Point, p1: Point, p3: Point, order: usize) -> Result<Self> {
        check_order(order)?;
        let n = order / 2 + 1;
        let (nodes, gw) = gauss_legendre(n);
        let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
        let e2 = [p3[0] - p0[0], p3[1] - p0[1]];
        let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (j, &tv) in nodes.iter().enumerate() {
            let v = 0.5 * (tv + 1.0);
            for (i, &tu) in nodes.iter().enumerate() {
                let u = 0.5 * (tu + 1.0);
                points.push([p0[0] + u * e1[0] + v * e2[0], p0[1] + u * e1[1] + v * e2[1]]);
                weights.push(0.25 * gw[i] * gw[j] * det);
            }
        }
        Ok(QuadratureRule {
            points,
            weights,
            order,
        })
    }

    /// Rule on a polygon given by its counterclockwise vertex loop.
    ///
    /// Triangles and parallelograms get a direct rule; anything else is split
    /// into the fan of triangles `(center, v_i, v_{i+1})`. `center` must be a
    /// point the polygon is star-shaped with respect to.
    pub fn polygon(vertices: &[Point], center: Point, order: usize) -> Result<Self> {
        match vertices.len() {
            0..=2 => Err(HhoError::InvalidInput(format!(
                "polygon quadrature needs at least 3 vertices, got {}",
                vertices.len()
            ))),
            3 => Self::triangle(vertices[0], vertices[1], vertices[2], order),
            4 if is_parallelogram(vertices) => {
                Self::parallelogram(vertices[0], vertices[1], vertices[3], order)
            }
            n => {
                let mut rule = QuadratureRule {
                    points: Vec::new(),
                    weights: Vec::new(),
                    order,
                };
                for i in 0..n {
                    let sub = Self::triangle(center, vertices[i], vertices[(i + 1) % n], order)?;
                    rule.points.extend(sub.points);
                    rule.weights.extend(sub.weights);
                }
                Ok(rule)
            }
        }
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_QUADRATURE_ORDER {
        return Err(HhoError::QuadratureOrder {
            order,
            max: MAX_QUADRATURE_ORDER,
        });
    }
    Ok(())
}

fn is_parallelogram(v: &[Point]) -> bool {
    let scale = v
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let d0 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
    let d1 = [v[2][0] - v[3][0], v[2][1] - v[3][1]];
    (d0[0] - d1[0]).abs() <= 1e-13 * scale && (d0[1] - d1[1]).abs() <= 1e-13 * scale
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn gauss_legendre_small_rules() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[2], (0.6f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_triangle_integrals() {
        for order in 0..=14 {
            let rule = QuadratureRule::triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], order).unwrap();
            assert_relative_eq!(rule.measure(), 0.5, max_relative = 1e-14);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let got = rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert_relative_eq!(got, exact, max_relative = 1e-12);
                }
            }
        }
        let rule = QuadratureRule::triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 3).unwrap();
        assert_relative_eq!(
            rule.integrate(|p| p[0] * p[0] * p[1]),
            1.0 / 60.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn unit_square_separable() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let rule = QuadratureRule::polygon(&sq, [0.5, 0.5], 6).unwrap();
        assert_relative_eq!(
            rule.integrate(|p| p[0].powi(3) * p[1].powi(3)),
            1.0 / 16.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(rule.measure(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn weights_positive_and_points_inside_triangle() {
        let rule = QuadratureRule::triangle([0.0, 0.0], [2.0, 0.0], [0.0, 1.0], 14).unwrap();
        for (p, w) in rule.iter() {
            assert!(w > 0.0);
            assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] / 2.0 + p[1] <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn order_cap() {
        assert!(matches!(
            QuadratureRule::segment([0.0, 0.0], [1.0, 0.0], MAX_QUADRATURE_ORDER + 1),
            Err(HhoError::QuadratureOrder { .. })
        ));
    }
}
