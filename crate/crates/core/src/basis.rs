//! Scaled-monomial bases on cells and faces.
//!
//! A cell basis of degree `k` consists of the monomials
//! `Π_i (2(x_i - c_i)/h)^{α_i}` with `|α| ≤ k`, ordered graded-lexicographically
//! with the constant first: `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
//! Consequently the basis of degree `k` is a prefix of the basis of degree `k+1`,
//! which the local operators rely on.

use nalgebra::DMatrix;

use crate::error::{HhoError, Result};
use crate::mesh::{CellGeometry, FaceMap, Mesh};
use crate::quadrature::QuadratureRule;
use crate::Point;

/// Highest degree accepted by [`scaled_monomial_basis`] unless overridden.
pub const DEFAULT_DEGREE_CAP: usize = 6;

/// Number of polynomials of total degree `≤ k` in `d` variables, `C(k+d, d)`.
pub fn polynomial_dimension(k: usize, d: usize) -> usize {
    match d {
        0 => 1,
        1 => k + 1,
        2 => (k + 1) * (k + 2) / 2,
        _ => {
            let mut n = 1usize;
            for i in 1..=d {
                n = n * (k + i) / i;
            }
            n
        }
    }
}

/// Anything that can be evaluated as a finite list of scalar functions.
pub trait PolynomialBasis {
    fn size(&self) -> usize;
    fn eval_values(&self, p: Point, out: &mut [f64]);
    fn eval_gradients(&self, p: Point, values: &mut [f64], grads: &mut [[f64; 2]]);

    fn values(&self, p: Point) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.eval_values(p, &mut out);
        out
    }
}

/// Scaled monomials on an entity of dimension 0, 1 or 2.
///
/// For `entity_dim == 1` only the first coordinate of evaluation points is
/// used; this serves both 1D cells and 2D faces (in face parameter space).
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    entity_dim: usize,
    degree: usize,
    center: Point,
    scale: f64,
    exponents: Vec<[usize; 2]>,
}

impl Basis {
    pub fn new(entity_dim: usize, degree: usize, center: Point, scale: f64) -> Result<Self> {
        Self::with_cap(entity_dim, degree, center, scale, DEFAULT_DEGREE_CAP)
    }

    pub fn with_cap(
        entity_dim: usize,
        degree: usize,
        center: Point,
        scale: f64,
        cap: usize,
    ) -> Result<Self> {
        if degree > cap {
            return Err(HhoError::DegreeCap { degree, cap });
        }
        if entity_dim > 2 {
            return Err(HhoError::InvalidInput(format!(
                "entity dimension {entity_dim}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(HhoError::InvalidInput(format!("basis scale {scale}")));
        }
        let exponents = match entity_dim {
            0 => vec![[0, 0]],
            1 => (0..=degree).map(|a| [a, 0]).collect(),
            _ => (0..=degree)
                .flat_map(|n| (0..=n).rev().map(move |a| [a, n - a]))
                .collect(),
        };
        Ok(Basis {
            entity_dim,
            degree,
            center,
            scale,
            exponents,
        })
    }

    pub fn entity_dim(&self) -> usize {
        self.entity_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponents(&self) -> &[[usize; 2]] {
        &self.exponents
    }

    fn scaled_powers(&self, p: Point) -> ([f64; 2], Vec<f64>, Vec<f64>) {
        let s = 2.0 / self.scale;
        let t = [(p[0] - self.center[0]) * s, (p[1] - self.center[1]) * s];
        let n = self.degree + 1;
        let mut px = vec![1.0; n];
        let mut py = vec![1.0; n];
        for i in 1..n {
            px[i] = px[i - 1] * t[0];
            py[i] = py[i - 1] * t[1];
        }
        (t, px, py)
    }
}

impl PolynomialBasis for Basis {
    fn size(&self) -> usize {
        self.exponents.len()
    }

    fn eval_values(&self, p: Point, out: &mut [f64]) {
        let (_, px, py) = self.scaled_powers(p);
        for (o, &[a, b]) in out.iter_mut().zip(&self.exponents) {
            *o = px[a] * py[b];
        }
    }

    fn eval_gradients(&self, p: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        let (_, px, py) = self.scaled_powers(p);
        let s = 2.0 / self.scale;
        for (i, &[a, b]) in self.exponents.iter().enumerate() {
            values[i] = px[a] * py[b];
            let gx = if a > 0 {
                a as f64 * s * px[a - 1] * py[b]
            } else {
                0.0
            };
            let gy = if b > 0 {
                b as f64 * s * px[a] * py[b - 1]
            } else {
                0.0
            };
            grads[i] = [gx, gy];
        }
    }
}

/// Scaled monomials for a cell of the given geometry.
pub fn scaled_monomial_basis(geometry: &CellGeometry, dim: usize, degree: usize) -> Result<Basis> {
    Basis::new(dim, degree, geometry.barycenter, geometry.diameter)
}

/// Values and gradients of every basis function at `p`.
pub fn eval_basis(basis: &impl PolynomialBasis, p: Point) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut v = vec![0.0; basis.size()];
    let mut g = vec![[0.0; 2]; basis.size()];
    basis.eval_gradients(p, &mut v, &mut g);
    (v, g)
}

/// Face parametrization of a mesh face (2D meshes).
pub fn face_mapping(mesh: &Mesh, face: usize) -> Result<FaceMap> {
    mesh.face_map(face)
}

/// Cell basis, optionally orthonormalized against the cell mass matrix.
///
/// The orthonormal variant applies `L^{-1}` where `M = L Lᵀ` is the Cholesky
/// factorization of the monomial mass matrix. Since `L^{-1}` is lower
/// triangular, prefixes of lower degree are still spanned by the leading
/// functions and the first function is still constant.
#[derive(Debug, Clone)]
pub struct CellBasis {
    monomials: Basis,
    transform: Option<DMatrix<f64>>,
}

impl CellBasis {
    pub fn monomial(monomials: Basis) -> Self {
        CellBasis {
            monomials,
            transform: None,
        }
    }

    pub fn orthonormalized(monomials: Basis, rule: &QuadratureRule) -> Result<Self> {
        let n = monomials.size();
        let mut m = DMatrix::zeros(n, n);
        let mut v = vec![0.0; n];
        for (p, w) in rule.iter() {
            monomials.eval_values(*p, &mut v);
            for j in 0..n {
                for i in 0..n {
                    m[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        let chol = nalgebra::Cholesky::new(m).ok_or_else(|| {
            HhoError::SingularMatrix("cell mass matrix during orthonormalization".into())
        })?;
        let l = chol.l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| HhoError::SingularMatrix("Cholesky factor".into()))?;
        Ok(CellBasis {
            monomials,
            transform: Some(linv),
        })
    }

    pub fn monomials(&self) -> &Basis {
        &self.monomials
    }

    pub fn is_orthonormal(&self) -> bool {
        self.transform.is_some()
    }

    pub fn degree(&self) -> usize {
        self.monomials.degree()
    }
}

impl PolynomialBasis for CellBasis {
    fn size(&self) -> usize {
        self.monomials.size()
    }

    fn eval_values(&self, p: Point, out: &mut [f64]) {
        match &self.transform {
            None => self.monomials.eval_values(p, out),
            Some(t) => {
                let raw = self.monomials.values(p);
                for i in 0..out.len() {
                    out[i] = (0..=i).map(|j| t[(i, j)] * raw[j]).sum();
                }
            }
        }
    }

    fn eval_gradients(&self, p: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        match &self.transform {
            None => self.monomials.eval_gradients(p, values, grads),
            Some(t) => {
                let (rv, rg) = eval_basis(&self.monomials, p);
                for i in 0..values.len() {
                    let mut v = 0.0;
                    let mut g = [0.0; 2];
                    for j in 0..=i {
                        v += t[(i, j)] * rv[j];
                        g[0] += t[(i, j)] * rg[j][0];
                        g[1] += t[(i, j)] * rg[j][1];
                    }
                    values[i] = v;
                    grads[i] = g;
                }
            }
        }
    }
}

/// Face basis evaluated at physical points.
///
/// On a 2D mesh this is the 1D scaled-monomial basis composed with the inverse
/// face map (center 0, scale `|F|`). On a 1D mesh faces are points and the basis
/// is the single constant function.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    basis: Basis,
    map: Option<FaceMap>,
}

impl FaceBasis {
    pub fn new(map: Option<FaceMap>, degree: usize) -> Result<Self> {
        let basis = match &map {
            Some(m) => Basis::new(1, degree, [0.0, 0.0], m.length)?,
            None => Basis::new(0, degree, [0.0, 0.0], 1.0)?,
        };
        Ok(FaceBasis { basis, map })
    }

    pub fn for_mesh_face(mesh: &Mesh, face: usize, degree: usize) -> Result<Self> {
        if mesh.dim() == 1 {
            Self::new(None, degree)
        } else {
            Self::new(Some(mesh.face_map(face)?), degree)
        }
    }

    pub fn map(&self) -> Option<&FaceMap> {
        self.map.as_ref()
    }

    fn parameter(&self, p: Point) -> Point {
        match &self.map {
            Some(m) => [m.to_parameter(p), 0.0],
            None => [0.0, 0.0],
        }
    }
}

impl PolynomialBasis for FaceBasis {
    fn size(&self) -> usize {
        self.basis.size()
    }

    fn eval_values(&self, p: Point, out: &mut [f64]) {
        self.basis.eval_values(self.parameter(p), out)
    }

    /// Gradients are tangential derivatives (with respect to the face parameter)
    /// stored in the first slot.
    fn eval_gradients(&self, p: Point, values: &mut [f64], grads: &mut [[f64; 2]]) {
        self.basis.eval_gradients(self.parameter(p), values, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn counts_follow_binomial_law() {
        for k in 0..=6 {
            assert_eq!(
                Basis::new(1, k, [0.0; 2], 1.0).unwrap().size(),
                polynomial_dimension(k, 1)
            );
            assert_eq!(
                Basis::new(2, k, [0.0; 2], 1.0).unwrap().size(),
                polynomial_dimension(k, 2)
            );
        }
        assert_eq!(Basis::new(2, 2, [0.0; 2], 1.0).unwrap().size(), 6);
        assert_eq!(polynomial_dimension(3, 3), 20);
        assert!(matches!(
            Basis::new(2, 7, [0.0; 2], 1.0),
            Err(HhoError::DegreeCap { degree: 7, cap: 6 })
        ));
    }

    #[test]
    fn graded_lex_order() {
        let b = Basis::new(2, 2, [0.0; 2], 1.0).unwrap();
        assert_eq!(
            b.exponents(),
            &[[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
        );
    }

    #[test]
    fn one_dimensional_example() {
        let b = Basis::new(1, 2, [0.0, 0.0], 2.0).unwrap();
        let (v, g) = eval_basis(&b, [1.0, 0.0]);
        assert_eq!(v, vec![1.0, 1.0, 1.0]);
        assert_eq!(
            g.iter().map(|d| d[0]).collect::<Vec<_>>(),
            vec![0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn center_values_and_xy_monomial() {
        let b = Basis::new(2, 3, [0.3, -0.2], 0.7).unwrap();
        let (v, g) = eval_basis(&b, [0.3, -0.2]);
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
        assert_eq!(g[0], [0.0, 0.0]);

        let b = Basis::new(2, 2, [0.0, 0.0], 2.0).unwrap();
        let (v, g) = eval_basis(&b, [1.0, 1.0]);
        assert_eq!(v[4], 1.0);
        assert_eq!(g[4], [1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn gradients_match_finite_differences(x in -1.0f64..1.0, y in -1.0f64..1.0, k in 0usize..=4) {
            let b = Basis::new(2, k, [0.1, 0.2], 1.3).unwrap();
            let (_, g) = eval_basis(&b, [x, y]);
            let step = 1e-6;
            let vxp = b.values([x + step, y]);
            let vxm = b.values([x - step, y]);
            let vyp = b.values([x, y + step]);
            let vym = b.values([x, y - step]);
            for i in 0..b.size() {
                let fx = (vxp[i] - vxm[i]) / (2.0 * step);
                let fy = (vyp[i] - vym[i]) / (2.0 * step);
                let scale = 1.0 + g[i][0].abs().max(g[i][1].abs());
                prop_assert!((fx - g[i][0]).abs() <= 1e-6 * scale);
                prop_assert!((fy - g[i][1]).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn orthonormalized_basis_keeps_structure() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let rule = QuadratureRule::polygon(&sq, [0.5, 0.5], 8).unwrap();
        let mono = Basis::new(2, 3, [0.5, 0.5], 2f64.sqrt()).unwrap();
        let ortho = CellBasis::orthonormalized(mono, &rule).unwrap();
        let n = ortho.size();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (p, w) in rule.iter() {
            let v = ortho.values(*p);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += w * v[i] * v[j];
                }
            }
        }
        assert!((m - DMatrix::identity(n, n)).amax() < 1e-12);
        let (v0, g0) = eval_basis(&ortho, [0.1, 0.9]);
        let (v1, _) = eval_basis(&ortho, [0.7, 0.2]);
        assert_relative_eq!(v0[0], v1[0], epsilon = 1e-14);
        assert!(g0[0][0].abs() < 1e-14 && g0[0][1].abs() < 1e-14);
    }

    #[test]
    fn face_basis_map_orientation_does_not_change_projection() {
        let (p0, p1) = ([0.2, 0.1], [0.9, 0.6]);
        let f = |p: Point| (3.0 * p[0]).sin() + p[1] * p[1];
        let rule = QuadratureRule::segment(p0, p1, 10).unwrap();
        let project = |fb: &FaceBasis| {
            let n = fb.size();
            let mut m = DMatrix::<f64>::zeros(n, n);
            let mut r = nalgebra::DVector::<f64>::zeros(n);
            for (p, w) in rule.iter() {
                let v = fb.values(*p);
                for i in 0..n {
                    r[i] += w * f(*p) * v[i];
                    for j in 0..n {
                        m[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
            m.cholesky().unwrap().solve(&r)
        };
        let a = FaceBasis::new(Some(FaceMap::from_segment(p0, p1).unwrap()), 3).unwrap();
        let b = FaceBasis::new(Some(FaceMap::from_segment(p1, p0).unwrap()), 3).unwrap();
        let (ca, cb) = (project(&a), project(&b));
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            let p = [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
            let va: f64 = a.values(p).iter().zip(ca.iter()).map(|(x, y)| x * y).sum();
            let vb: f64 = b.values(p).iter().zip(cb.iter()).map(|(x, y)| x * y).sum();
            assert!((va - vb).abs() < 1e-12);
        }
    }
}
