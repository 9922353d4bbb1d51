//! Per-cell precomputed data shared by the local operators: basis, quadrature,
//! basis tables at quadrature nodes, mass and stiffness matrices, and the
//! corresponding face data.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::{polynomial_dimension, Basis, CellBasis, FaceBasis, PolynomialBasis};
use crate::error::{HhoError, Result};
use crate::mesh::{CellGeometry, Mesh};
use crate::quadrature::QuadratureRule;
use crate::Point;

/// Cells whose mass matrix condition number exceeds this are rejected.
pub const MAX_MASS_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRank {
    Scalar,
    Vector,
}

/// Face degree `k`, cell degree `k' ∈ {k, k+1}` and field rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HhoDegrees {
    pub k_face: usize,
    pub k_cell: usize,
    pub rank: FieldRank,
}

impl HhoDegrees {
    pub fn new(k_face: usize, k_cell: usize, rank: FieldRank) -> Result<Self> {
        let d = HhoDegrees {
            k_face,
            k_cell,
            rank,
        };
        d.validate()?;
        Ok(d)
    }

    /// Equal-order scalar degrees `k' = k`.
    pub fn equal(k: usize) -> Self {
        HhoDegrees {
            k_face: k,
            k_cell: k,
            rank: FieldRank::Scalar,
        }
    }

    /// Mixed-order scalar degrees `k' = k + 1`.
    pub fn mixed(k: usize) -> Self {
        HhoDegrees {
            k_face: k,
            k_cell: k + 1,
            rank: FieldRank::Scalar,
        }
    }

    pub fn vector(self) -> Self {
        HhoDegrees {
            rank: FieldRank::Vector,
            ..self
        }
    }

    pub fn is_mixed(&self) -> bool {
        self.k_cell == self.k_face + 1
    }

    /// Number of field components (2 for vector fields, which exist only in 2D).
    pub fn components(&self) -> usize {
        match self.rank {
            FieldRank::Scalar => 1,
            FieldRank::Vector => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_cell != self.k_face && self.k_cell != self.k_face + 1 {
            return Err(HhoError::InvalidInput(format!(
                "cell degree {} must equal the face degree {} or exceed it by one",
                self.k_cell, self.k_face
            )));
        }
        if self.rank == FieldRank::Vector && self.k_face == 0 {
            return Err(HhoError::InvalidInput(
                "vector (elasticity) discretizations need face degree k ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContextOptions {
    /// Use the mass-orthonormalized cell basis instead of raw scaled monomials.
    pub orthonormal: bool,
}

/// Quadrature order used for all local bilinear forms.
pub fn bilinear_order(k: usize) -> usize {
    2 * (k + 1)
}

/// Quadrature order used for source terms and boundary data.
pub fn source_order(k: usize) -> usize {
    2 * (k + 1) + 2
}

/// Quadrature order used for error norms.
pub fn error_order(k: usize) -> usize {
    2 * (k + 2)
}

pub fn cell_rule(mesh: &Mesh, cell: usize, order: usize) -> Result<QuadratureRule> {
    let verts = mesh.cell_vertices(cell);
    if mesh.dim() == 1 {
        QuadratureRule::interval(verts[0][0], verts[1][0], order)
    } else {
        QuadratureRule::polygon(&verts, mesh.cell_geometry(cell).barycenter, order)
    }
}

pub fn face_rule(mesh: &Mesh, face: usize, order: usize) -> Result<QuadratureRule> {
    let vs = mesh.face_vertices(face);
    if mesh.dim() == 1 {
        Ok(QuadratureRule::point(mesh.vertices()[vs[0]]))
    } else {
        QuadratureRule::segment(mesh.vertices()[vs[0]], mesh.vertices()[vs[1]], order)
    }
}

/// Basis tables (values and gradients) at the nodes of a rule; rows are nodes.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub weights: Vec<f64>,
    pub points: Vec<Point>,
    pub values: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
}

impl BasisTable {
    pub fn new(basis: &impl PolynomialBasis, rule: &QuadratureRule) -> Self {
        let (nq, n) = (rule.len(), basis.size());
        let mut values = DMatrix::zeros(nq, n);
        let mut dx = DMatrix::zeros(nq, n);
        let mut dy = DMatrix::zeros(nq, n);
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        for (q, p) in rule.points.iter().enumerate() {
            basis.eval_gradients(*p, &mut v, &mut g);
            for i in 0..n {
                values[(q, i)] = v[i];
                dx[(q, i)] = g[i][0];
                dy[(q, i)] = g[i][1];
            }
        }
        BasisTable {
            weights: rule.weights.clone(),
            points: rule.points.clone(),
            values,
            dx,
            dy,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `∫ a_i b_j` for table columns, as `Aᵀ W B`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut wb = b.clone();
        for (q, w) in self.weights.iter().enumerate() {
            wb.row_mut(q).scale_mut(*w);
        }
        a.transpose() * wb
    }
}

#[derive(Debug, Clone)]
pub struct FaceContext {
    pub face: usize,
    pub measure: f64,
    /// Outward normal with respect to the owning cell.
    pub normal: Point,
    pub barycenter: Point,
    pub basis: FaceBasis,
    /// Cell basis (degree k+1) tabulated on the face rule.
    pub cell_table: BasisTable,
    /// Face basis tabulated on the same rule.
    pub face_values: DMatrix<f64>,
    /// Face mass matrix `∫_F ψ_a ψ_b`.
    pub mass: DMatrix<f64>,
    pub mass_chol: Cholesky<f64, Dyn>,
    /// Trace matrix `∫_F ψ_a φ_b` against the full degree-(k+1) cell basis.
    pub trace: DMatrix<f64>,
}

impl FaceContext {
    pub fn size(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass_inv_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.mass_chol.solve(m)
    }

    /// Integrals `∫_F g(x) ψ_a(x)` over the face bilinear rule, for polynomial `g`
    /// given by its values at the rule nodes.
    pub fn moments(&self, g_at_nodes: &[f64]) -> DVector<f64> {
        let n = self.size();
        let mut out = DVector::zeros(n);
        for (q, w) in self.cell_table.weights.iter().enumerate() {
            for a in 0..n {
                out[a] += w * g_at_nodes[q] * self.face_values[(q, a)];
            }
        }
        out
    }
}

/// Everything the local operators of one cell need.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub cell: usize,
    pub dim: usize,
    pub geometry: CellGeometry,
    pub vertices: Vec<Point>,
    pub degrees: HhoDegrees,
    /// Basis of degree k+1; lower degrees are prefixes.
    pub basis: CellBasis,
    pub table: BasisTable,
    /// Mass matrix of the full degree-(k+1) basis.
    pub mass: DMatrix<f64>,
    /// Stiffness `∫ ∇φ_i · ∇φ_j` of the degree-(k+1) basis.
    pub stiffness: DMatrix<f64>,
    pub faces: Vec<FaceContext>,
    chol_k: Cholesky<f64, Dyn>,
    chol_cell: Cholesky<f64, Dyn>,
}

impl CellContext {
    pub fn new(
        mesh: &Mesh,
        cell: usize,
        degrees: HhoDegrees,
        options: ContextOptions,
    ) -> Result<Self> {
        degrees.validate()?;
        if degrees.rank == FieldRank::Vector && mesh.dim() != 2 {
            return Err(HhoError::InvalidInput(
                "vector fields need a 2D mesh".into(),
            ));
        }
        let dim = mesh.dim();
        let k = degrees.k_face;
        let geometry = mesh.cell_geometry(cell).clone();
        let vertices = mesh.cell_vertices(cell);
        let order = bilinear_order(k);
        let rule = cell_rule(mesh, cell, order)?;
        let monomials = Basis::new(dim, k + 1, geometry.barycenter, geometry.diameter)?;
        let basis = if options.orthonormal {
            CellBasis::orthonormalized(monomials, &rule)?
        } else {
            CellBasis::monomial(monomials)
        };
        let table = BasisTable::new(&basis, &rule);
        let mass = symmetrize(table.gram(&table.values, &table.values));
        let stiffness =
            symmetrize(table.gram(&table.dx, &table.dx) + table.gram(&table.dy, &table.dy));

        let eig = mass.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_MASS_CONDITION {
            return Err(HhoError::IllConditioned { cell, condition });
        }

        let nk = polynomial_dimension(k, dim);
        let nc = polynomial_dimension(degrees.k_cell, dim);
        let chol = |n: usize| {
            Cholesky::new(mass.view((0, 0), (n, n)).into_owned())
                .ok_or_else(|| HhoError::SingularMatrix(format!("cell {cell} mass matrix")))
        };
        let chol_k = chol(nk)?;
        let chol_cell = chol(nc)?;

        let mut faces = Vec::with_capacity(geometry.faces.len());
        for cf in &geometry.faces {
            let fbasis = FaceBasis::for_mesh_face(mesh, cf.face, k)?;
            let frule = face_rule(mesh, cf.face, order)?;
            let cell_table = BasisTable::new(&basis, &frule);
            let ftable = BasisTable::new(&fbasis, &frule);
            let fmass = symmetrize(ftable.gram(&ftable.values, &ftable.values));
            let trace = ftable.gram(&ftable.values, &cell_table.values);
            let mass_chol = Cholesky::new(fmass.clone())
                .ok_or_else(|| HhoError::SingularMatrix(format!("face {} mass matrix", cf.face)))?;
            faces.push(FaceContext {
                face: cf.face,
                measure: cf.measure,
                normal: cf.normal,
                barycenter: cf.barycenter,
                basis: fbasis,
                cell_table,
                face_values: ftable.values,
                mass: fmass,
                mass_chol,
                trace,
            });
        }

        Ok(CellContext {
            cell,
            dim,
            geometry,
            vertices,
            degrees,
            basis,
            table,
            mass,
            stiffness,
            faces,
            chol_k,
            chol_cell,
        })
    }

    pub fn h(&self) -> f64 {
        self.geometry.diameter
    }

    /// Size of the reconstruction space `P^{k+1}(T)`.
    pub fn n_rec(&self) -> usize {
        polynomial_dimension(self.degrees.k_face + 1, self.dim)
    }

    /// Size of the cell unknown space `P^{k'}(T)`.
    pub fn n_cell(&self) -> usize {
        polynomial_dimension(self.degrees.k_cell, self.dim)
    }

    /// Size of `P^k(T)`.
    pub fn n_k(&self) -> usize {
        polynomial_dimension(self.degrees.k_face, self.dim)
    }

    /// Scalar face-block width.
    pub fn n_face(&self) -> usize {
        polynomial_dimension(self.degrees.k_face, self.dim - 1)
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Scalar local DoF count.
    pub fn n_local(&self) -> usize {
        self.n_cell() + self.num_faces() * self.n_face()
    }

    /// Offset of face block `i` in the scalar local layout.
    pub fn face_offset(&self, i: usize) -> usize {
        self.n_cell() + i * self.n_face()
    }

    pub fn layout(&self) -> LocalLayout {
        LocalLayout {
            cell: self.n_cell(),
            face: self.n_face(),
            num_faces: self.num_faces(),
            components: self.degrees.components(),
        }
    }

    /// Solves `M_k x = b` with the mass matrix of `P^k(T)`.
    pub fn solve_mass_k(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol_k.solve(b)
    }

    /// Solves `M_{k'} x = b` with the mass matrix of the cell unknown space.
    pub fn solve_mass_cell(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol_cell.solve(b)
    }

    /// `∫_T φ_i` for the degree-(k+1) basis.
    pub fn basis_integrals(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_rec());
        for (q, w) in self.table.weights.iter().enumerate() {
            for i in 0..self.n_rec() {
                out[i] += w * self.table.values[(q, i)];
            }
        }
        out
    }

    /// Evaluates a polynomial with coefficients in the cell basis (any prefix length).
    pub fn eval(&self, coeffs: &[f64], p: Point) -> f64 {
        let v = self.basis.values(p);
        coeffs.iter().zip(v.iter()).map(|(c, b)| c * b).sum()
    }

    /// Evaluates value and gradient of a polynomial in the cell basis.
    pub fn eval_with_gradient(&self, coeffs: &[f64], p: Point) -> (f64, [f64; 2]) {
        let n = self.basis.size();
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        self.basis.eval_gradients(p, &mut v, &mut g);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (i, c) in coeffs.iter().enumerate() {
            val += c * v[i];
            grad[0] += c * g[i][0];
            grad[1] += c * g[i][1];
        }
        (val, grad)
    }

    /// L2 projection onto the first `n` cell basis functions, with a rule of
    /// the given order for the right-hand side.
    pub fn project_cell(
        &self,
        mesh: &Mesh,
        n: usize,
        order: usize,
        f: &dyn Fn(Point) -> f64,
    ) -> Result<DVector<f64>> {
        let rule = cell_rule(mesh, self.cell, order)?;
        let mut rhs = DVector::zeros(n);
        let mut v = vec![0.0; self.basis.size()];
        for (p, w) in rule.iter() {
            self.basis.eval_values(*p, &mut v);
            let fw = w * f(*p);
            for i in 0..n {
                rhs[i] += fw * v[i];
            }
        }
        let chol = Cholesky::new(self.mass.view((0, 0), (n, n)).into_owned())
            .ok_or_else(|| HhoError::SingularMatrix(format!("cell {} mass matrix", self.cell)))?;
        Ok(chol.solve(&rhs))
    }
}

/// Block structure `[T | F_1 | … | F_n]` of a local DoF vector. Vector
/// fields interleave components inside each block (`index·d + component`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalLayout {
    pub cell: usize,
    pub face: usize,
    pub num_faces: usize,
    pub components: usize,
}

impl LocalLayout {
    pub fn cell_len(&self) -> usize {
        self.cell * self.components
    }

    pub fn face_len(&self) -> usize {
        self.face * self.components
    }

    pub fn len(&self) -> usize {
        self.cell_len() + self.num_faces * self.face_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn face_range(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.cell_len() + i * self.face_len();
        start..start + self.face_len()
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `kron(a, I_d)`: scalar operator lifted to interleaved vector components.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    if d == 1 {
        return a.clone();
    }
    let mut out = DMatrix::zeros(a.nrows() * d, a.ncols() * d);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                for c in 0..d {
                    out[(i * d + c, j * d + c)] = v;
                }
            }
        }
    }
    out
}
