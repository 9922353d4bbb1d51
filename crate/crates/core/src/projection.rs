//! Mass matrices, L2 projections and the HHO reduction operators.

use nalgebra::{DMatrix, DVector};

use crate::basis::{FaceBasis, PolynomialBasis};
use crate::context::{face_rule, source_order, CellContext, FieldRank, HhoDegrees, LocalLayout};
use crate::error::{HhoError, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::Point;

/// `M_ij = ∫ φ_i φ_j`; errors if the matrix is not positive definite.
pub fn mass_matrix(basis: &impl PolynomialBasis, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
    let n = basis.size();
    let mut m = DMatrix::zeros(n, n);
    let mut v = vec![0.0; n];
    for (p, w) in rule.iter() {
        basis.eval_values(*p, &mut v);
        for j in 0..n {
            for i in j..n {
                m[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    for j in 0..n {
        for i in 0..j {
            m[(i, j)] = m[(j, i)];
        }
    }
    if m.clone().cholesky().is_none() {
        return Err(HhoError::SingularMatrix(
            "mass matrix is not positive definite".into(),
        ));
    }
    Ok(m)
}

/// Coefficients `p` with `M p = ∫ f φ`.
pub fn l2_project(
    basis: &impl PolynomialBasis,
    rule: &QuadratureRule,
    f: impl Fn(Point) -> f64,
) -> Result<DVector<f64>> {
    let m = mass_matrix(basis, rule)?;
    let n = basis.size();
    let mut rhs = DVector::zeros(n);
    let mut v = vec![0.0; n];
    for (p, w) in rule.iter() {
        basis.eval_values(*p, &mut v);
        let fw = w * f(*p);
        for i in 0..n {
            rhs[i] += fw * v[i];
        }
    }
    Ok(m.cholesky().unwrap().solve(&rhs))
}

/// Projection of `f` onto `P^k(F)` in the face basis of mesh face `face`.
/// On 1D meshes this is the point value.
pub fn project_face(
    mesh: &Mesh,
    face: usize,
    k: usize,
    f: &dyn Fn(Point) -> f64,
) -> Result<DVector<f64>> {
    let basis = FaceBasis::for_mesh_face(mesh, face, k)?;
    let rule = face_rule(mesh, face, source_order(k))?;
    l2_project(&basis, &rule, f)
}

/// Local DoF vector with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDofVector {
    pub layout: LocalLayout,
    pub values: DVector<f64>,
}

impl LocalDofVector {
    pub fn cell_block(&self) -> &[f64] {
        &self.values.as_slice()[..self.layout.cell_len()]
    }

    pub fn face_block(&self, i: usize) -> &[f64] {
        &self.values.as_slice()[self.layout.face_range(i)]
    }
}

fn interleave(blocks: &[DVector<f64>]) -> DVector<f64> {
    let d = blocks.len();
    let n = blocks[0].len();
    DVector::from_fn(n * d, |i, _| blocks[i % d][i / d])
}

/// `Î_T(v) = (Π^{k'}_T v, (Π^k_F v)_F)` for a scalar function.
pub fn reduce_local(
    mesh: &Mesh,
    ctx: &CellContext,
    f: &dyn Fn(Point) -> f64,
) -> Result<LocalDofVector> {
    let k = ctx.degrees.k_face;
    let layout = LocalLayout {
        components: 1,
        ..ctx.layout()
    };
    let mut values = DVector::zeros(layout.len());
    let cell = ctx.project_cell(mesh, ctx.n_cell(), source_order(k), f)?;
    values.rows_mut(0, layout.cell_len()).copy_from(&cell);
    for (i, fc) in ctx.faces.iter().enumerate() {
        let pf = project_face(mesh, fc.face, k, f)?;
        values
            .rows_mut(layout.face_range(i).start, layout.face_len())
            .copy_from(&pf);
    }
    Ok(LocalDofVector { layout, values })
}

/// Component-wise reduction of a 2D vector field (interleaved layout).
pub fn reduce_local_vector(
    mesh: &Mesh,
    ctx: &CellContext,
    f: &dyn Fn(Point) -> [f64; 2],
) -> Result<LocalDofVector> {
    let comps: Vec<LocalDofVector> = (0..2)
        .map(|c| reduce_local(mesh, ctx, &|p| f(p)[c]))
        .collect::<Result<_>>()?;
    let layout = LocalLayout {
        components: 2,
        ..comps[0].layout
    };
    let values = interleave(&[comps[0].values.clone(), comps[1].values.clone()]);
    Ok(LocalDofVector { layout, values })
}

/// Cell and face coefficients over a whole mesh. Blocks of vector fields
/// interleave components.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridField {
    pub degrees: HhoDegrees,
    pub cells: Vec<DVector<f64>>,
    pub faces: Vec<DVector<f64>>,
}

impl HybridField {
    pub fn zeros(mesh: &Mesh, degrees: HhoDegrees) -> Self {
        let d = degrees.components();
        let nc = crate::basis::polynomial_dimension(degrees.k_cell, mesh.dim()) * d;
        let nf = crate::basis::polynomial_dimension(degrees.k_face, mesh.dim() - 1) * d;
        HybridField {
            degrees,
            cells: vec![DVector::zeros(nc); mesh.num_cells()],
            faces: vec![DVector::zeros(nf); mesh.num_faces()],
        }
    }

    /// Gathers the local vector `[T | F_1 | … | F_n]` of a cell.
    pub fn local(&self, mesh: &Mesh, cell: usize) -> DVector<f64> {
        let fs = mesh.cell_faces(cell);
        let nc = self.cells[cell].len();
        let nf = self.faces.first().map_or(0, |f| f.len());
        let mut out = DVector::zeros(nc + fs.len() * nf);
        out.rows_mut(0, nc).copy_from(&self.cells[cell]);
        for (i, &f) in fs.iter().enumerate() {
            out.rows_mut(nc + i * nf, nf).copy_from(&self.faces[f]);
        }
        out
    }

    pub fn total_len(&self) -> usize {
        self.cells.iter().map(|c| c.len()).sum::<usize>()
            + self.faces.iter().map(|f| f.len()).sum::<usize>()
    }

    /// Flattens to `[cells… | faces…]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let it = self
            .cells
            .iter()
            .chain(self.faces.iter())
            .flat_map(|b| b.iter().copied());
        DVector::from_iterator(self.total_len(), it)
    }

    pub fn axpy(&mut self, a: f64, other: &HybridField) {
        for (x, y) in self.cells.iter_mut().zip(&other.cells) {
            x.axpy(a, y, 1.0);
        }
        for (x, y) in self.faces.iter_mut().zip(&other.faces) {
            x.axpy(a, y, 1.0);
        }
    }
}

/// Global reduction `Î_h(v)` of a scalar function.
pub fn reduce_global(
    mesh: &Mesh,
    contexts: &[CellContext],
    f: &dyn Fn(Point) -> f64,
) -> Result<HybridField> {
    let degrees = contexts
        .first()
        .map(|c| HhoDegrees {
            rank: FieldRank::Scalar,
            ..c.degrees
        })
        .ok_or_else(|| HhoError::InvalidInput("no cells".into()))?;
    let k = degrees.k_face;
    let cells = contexts
        .iter()
        .map(|ctx| ctx.project_cell(mesh, ctx.n_cell(), source_order(k), f))
        .collect::<Result<_>>()?;
    let faces = (0..mesh.num_faces())
        .map(|face| project_face(mesh, face, k, f))
        .collect::<Result<_>>()?;
    Ok(HybridField {
        degrees,
        cells,
        faces,
    })
}

/// Component-wise global reduction of a 2D vector field.
pub fn reduce_global_vector(
    mesh: &Mesh,
    contexts: &[CellContext],
    f: &dyn Fn(Point) -> [f64; 2],
) -> Result<HybridField> {
    let a = reduce_global(mesh, contexts, &|p| f(p)[0])?;
    let b = reduce_global(mesh, contexts, &|p| f(p)[1])?;
    let merge = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter()
            .zip(y)
            .map(|(u, v)| interleave(&[u.clone(), v.clone()]))
            .collect::<Vec<_>>()
    };
    Ok(HybridField {
        degrees: a.degrees.vector(),
        cells: merge(&a.cells, &b.cells),
        faces: merge(&a.faces, &b.faces),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;
    use crate::context::{cell_rule, ContextOptions};
    use crate::mesh::{build_interval_mesh, build_structured_mesh, CellShape, Rectangle};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn mass_matrix_example() {
        let b = Basis::new(1, 1, [0.0, 0.0], 2.0).unwrap();
        let rule = QuadratureRule::interval(-1.0, 1.0, 4).unwrap();
        let m = mass_matrix(&b, &rule).unwrap();
        assert_relative_eq!(m[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(m[(1, 1)], 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn projection_examples() {
        let b = Basis::new(1, 3, [0.4, 0.0], 0.6).unwrap();
        let rule = QuadratureRule::interval(0.1, 0.7, 10).unwrap();
        let c = l2_project(&b, &rule, |p| p[0].powi(3)).unwrap();
        for x in [0.1, 0.33, 0.7, 2.0] {
            let v: f64 = b
                .values([x, 0.0])
                .iter()
                .zip(c.iter())
                .map(|(a, b)| a * b)
                .sum();
            assert_relative_eq!(v, x.powi(3), epsilon = 1e-12);
        }
        let b0 = Basis::new(1, 0, [0.5, 0.0], 1.0).unwrap();
        let rule = QuadratureRule::interval(0.0, 1.0, 30).unwrap();
        let c = l2_project(&b0, &rule, |p| (PI * p[0]).sin()).unwrap();
        assert_relative_eq!(c[0], 2.0 / PI, epsilon = 1e-13);
    }

    #[test]
    fn projection_is_idempotent_orthogonal_and_monotone() {
        let mesh = build_structured_mesh(CellShape::Quad, 1, 1, Rectangle::UNIT).unwrap();
        let f = |p: Point| (2.0 * p[0] + p[1]).exp();
        let rule = cell_rule(&mesh, 0, 14).unwrap();
        let g = mesh.cell_geometry(0);
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let b = Basis::new(2, k, g.barycenter, g.diameter).unwrap();
            let c = l2_project(&b, &rule, f).unwrap();
            let eval =
                |p: Point| -> f64 { b.values(p).iter().zip(c.iter()).map(|(a, b)| a * b).sum() };
            let again = l2_project(&b, &rule, eval).unwrap();
            assert!((&again - &c).amax() < 1e-12 * c.amax());
            for i in 0..b.size() {
                let r = rule.integrate(|p| (f(p) - eval(p)) * b.values(p)[i]);
                assert!(r.abs() < 1e-10);
            }
            let err = rule.integrate(|p| (f(p) - eval(p)).powi(2)).sqrt();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn reduction_examples() {
        let mesh = build_interval_mesh(0.0, 1.0, 1, None).unwrap();
        let ctx =
            CellContext::new(&mesh, 0, HhoDegrees::equal(1), ContextOptions::default()).unwrap();
        let r = reduce_local(&mesh, &ctx, &|p| p[0]).unwrap();
        // cell basis 1, 2(x - 0.5): x = 0.5 + 0.5 * μ1
        assert_relative_eq!(r.cell_block()[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(r.cell_block()[1], 0.5, epsilon = 1e-14);
        assert_eq!(r.face_block(0), &[0.0]);
        assert_eq!(r.face_block(1), &[1.0]);

        let mesh = build_structured_mesh(CellShape::Quad, 2, 1, Rectangle::UNIT).unwrap();
        let ctxs: Vec<_> = (0..2)
            .map(|c| {
                CellContext::new(&mesh, c, HhoDegrees::equal(1), ContextOptions::default()).unwrap()
            })
            .collect();
        let one = reduce_global(&mesh, &ctxs, &|_| 1.0).unwrap();
        for c in &one.cells {
            assert_relative_eq!(c[0], 1.0, epsilon = 1e-14);
            assert!(c.rows(1, c.len() - 1).amax() < 1e-14);
        }
        for f in &one.faces {
            assert_relative_eq!(f[0], 1.0, epsilon = 1e-14);
            assert!(f[1].abs() < 1e-14);
        }
        let lin = |p: Point| 2.0 * p[0] - p[1];
        let glob = reduce_global(&mesh, &ctxs, &lin).unwrap();
        let interface = mesh.interior_faces().next().unwrap();
        for (c, ctx) in ctxs.iter().enumerate() {
            let loc = reduce_local(&mesh, ctx, &lin).unwrap();
            let i = mesh
                .cell_faces(c)
                .iter()
                .position(|&f| f == interface)
                .unwrap();
            assert_eq!(loc.face_block(i), glob.faces[interface].as_slice());
            assert_eq!(glob.local(&mesh, c), loc.values);
        }
        let vctx: Vec<_> = (0..2)
            .map(|c| {
                CellContext::new(
                    &mesh,
                    c,
                    HhoDegrees::equal(1).vector(),
                    ContextOptions::default(),
                )
                .unwrap()
            })
            .collect();
        let v = reduce_global_vector(&mesh, &vctx, &|p| [lin(p), p[1]]).unwrap();
        let w = reduce_global(&mesh, &vctx, &|p| p[1]).unwrap();
        for (vc, (gc, wc)) in v.cells.iter().zip(glob.cells.iter().zip(&w.cells)) {
            for i in 0..gc.len() {
                assert_eq!(vc[2 * i], gc[i]);
                assert_eq!(vc[2 * i + 1], wc[i]);
            }
        }
    }
}
