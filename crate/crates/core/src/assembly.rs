//! Face numbering, static condensation, global assembly, boundary conditions,
//! the reduced solve and cell recovery.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::basis::polynomial_dimension;
use crate::basis::{FaceBasis, PolynomialBasis};
use crate::context::{face_rule, source_order, FieldRank, HhoDegrees};
use crate::error::{HhoError, Result};
use crate::mesh::{BoundaryKind, Mesh};
use crate::sparse::{cg_block_jacobi, cholesky_solve, CscMatrix, IterativeReport};
use crate::Point;

/// Global numbering of face unknowns.
///
/// Face `f` owns the full-system rows `f·width .. (f+1)·width`. Faces that are
/// not Dirichlet are additionally numbered consecutively, in face order, in
/// the reduced system.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub width: usize,
    pub cell_width: usize,
    pub num_cells: usize,
    pub dirichlet: Vec<bool>,
    pub reduced_index: Vec<Option<usize>>,
    pub num_free_faces: usize,
}

impl DofMap {
    pub fn num_faces(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn full_size(&self) -> usize {
        self.num_faces() * self.width
    }

    pub fn reduced_size(&self) -> usize {
        self.num_free_faces * self.width
    }

    /// Dimension of the uncondensed hybrid space (cells and all faces).
    pub fn hybrid_dimension(&self) -> usize {
        self.num_cells * self.cell_width + self.full_size()
    }

    /// Full-system indices of the face unknowns of a cell, in local order.
    pub fn cell_map(&self, mesh: &Mesh, cell: usize) -> Vec<usize> {
        mesh.cell_faces(cell)
            .iter()
            .flat_map(|&f| (0..self.width).map(move |a| f * self.width + a))
            .collect()
    }

    /// Reduced-system indices of the face unknowns of a cell (`None` on
    /// Dirichlet faces).
    pub fn reduced_cell_map(&self, mesh: &Mesh, cell: usize) -> Vec<Option<usize>> {
        mesh.cell_faces(cell)
            .iter()
            .flat_map(|&f| {
                (0..self.width).map(move |a| self.reduced_index[f].map(|r| r * self.width + a))
            })
            .collect()
    }
}

pub fn build_dof_map(mesh: &Mesh, degrees: HhoDegrees) -> Result<DofMap> {
    let comps = match degrees.rank {
        FieldRank::Scalar => 1,
        FieldRank::Vector => mesh.dim(),
    };
    let width = polynomial_dimension(degrees.k_face, mesh.dim() - 1) * comps;
    let cell_width = polynomial_dimension(degrees.k_cell, mesh.dim()) * comps;
    let mut dirichlet = vec![false; mesh.num_faces()];
    let mut reduced_index = vec![None; mesh.num_faces()];
    let mut next = 0;
    for f in 0..mesh.num_faces() {
        if mesh.is_boundary_face(f) {
            match mesh.boundary_tag(f) {
                None => return Err(HhoError::UntaggedBoundary { face: f }),
                Some(BoundaryKind::Dirichlet) => {
                    dirichlet[f] = true;
                    continue;
                }
                Some(BoundaryKind::Neumann) => {}
            }
        }
        reduced_index[f] = Some(next);
        next += 1;
    }
    Ok(DofMap {
        width,
        cell_width,
        num_cells: mesh.num_cells(),
        dirichlet,
        reduced_index,
        num_free_faces: next,
    })
}

/// Local matrix and right-hand side of one cell; the first `cell_len` rows are
/// cell unknowns, the rest face unknowns.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub l: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cell_len: usize,
}

/// Schur complement on the face unknowns plus the data to recover the cell unknowns.
#[derive(Debug, Clone)]
pub struct CondensedCell {
    pub lc: DMatrix<f64>,
    pub bc: DVector<f64>,
    ltt: Cholesky<f64, Dyn>,
    ltf: DMatrix<f64>,
    bt: DVector<f64>,
}

/// `L^c = L_FF − L_FT L_TT^{-1} L_TF`, `b^c = b_F − L_FT L_TT^{-1} b_T`.
pub fn condense(local: &LocalSystem) -> Result<CondensedCell> {
    let n = local.l.nrows();
    let t = local.cell_len;
    let nf = n - t;
    let ltt = local.l.view((0, 0), (t, t)).into_owned();
    let ltf = local.l.view((0, t), (t, nf)).into_owned();
    let lft = local.l.view((t, 0), (nf, t)).into_owned();
    let lff = local.l.view((t, t), (nf, nf)).into_owned();
    let bt = local.b.rows(0, t).into_owned();
    let bf = local.b.rows(t, nf).into_owned();
    let chol = Cholesky::new(ltt)
        .ok_or_else(|| HhoError::SingularMatrix("cell block of the local matrix".into()))?;
    let x = chol.solve(&ltf);
    let y = chol.solve(&bt);
    let lc = lff - &lft * x;
    let lc = (&lc + lc.transpose()) * 0.5;
    let bc = bf - lft * y;
    Ok(CondensedCell {
        lc,
        bc,
        ltt: chol,
        ltf,
        bt,
    })
}

impl CondensedCell {
    /// `u_T = L_TT^{-1}(b_T − L_TF u_F)`.
    pub fn recover(&self, face_values: &DVector<f64>) -> DVector<f64> {
        self.ltt.solve(&(&self.bt - &self.ltf * face_values))
    }
}

/// Global face system over all faces (before boundary conditions).
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
}

/// Accumulates the condensed cell contributions in ascending cell order.
pub fn assemble(mesh: &Mesh, cells: &[CondensedCell], map: &DofMap) -> Result<GlobalSystem> {
    let n = map.full_size();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (c, cc) in cells.iter().enumerate() {
        let g = map.cell_map(mesh, c);
        if g.len() != cc.lc.nrows() {
            return Err(HhoError::InvalidInput(format!(
                "cell {c}: condensed block has {} rows, map has {}",
                cc.lc.nrows(),
                g.len()
            )));
        }
        for (j, &gj) in g.iter().enumerate() {
            for (i, &gi) in g.iter().enumerate() {
                triplets.push((gi, gj, cc.lc[(i, j)]));
            }
            rhs[gj] += cc.bc[j];
        }
    }
    Ok(GlobalSystem {
        matrix: CscMatrix::from_triplets(n, n, &triplets)?,
        rhs,
    })
}

/// Reduced system after eliminating Dirichlet face unknowns.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
}

/// Eliminates Dirichlet unknowns: keeps free rows/columns and updates the
/// right-hand side with `b' = b − L_{·,D} u_D`. `dirichlet_values` holds one
/// block per face (only Dirichlet faces are read).
pub fn apply_dirichlet(
    system: &GlobalSystem,
    map: &DofMap,
    dirichlet_values: &[DVector<f64>],
) -> Result<ReducedSystem> {
    let w = map.width;
    let reduced = |i: usize| map.reduced_index[i / w].map(|r| r * w + i % w);
    let mut rhs = vec![0.0; map.reduced_size()];
    for (i, b) in system.rhs.iter().enumerate() {
        if let Some(r) = reduced(i) {
            rhs[r] += b;
        }
    }
    let mut triplets = Vec::with_capacity(system.matrix.nnz());
    for (i, j, v) in system.matrix.iter() {
        let Some(ri) = reduced(i) else { continue };
        match reduced(j) {
            Some(rj) => triplets.push((ri, rj, v)),
            None => {
                let ud = dirichlet_values[j / w][j % w];
                rhs[ri] -= v * ud;
            }
        }
    }
    let n = map.reduced_size();
    Ok(ReducedSystem {
        matrix: CscMatrix::from_triplets(n, n, &triplets)?,
        rhs,
    })
}

/// Projection `Π^k_F` of boundary data onto every Dirichlet face (zero blocks
/// elsewhere). `g` returns up to two components; scalar problems use the first.
pub fn dirichlet_data(
    mesh: &Mesh,
    degrees: HhoDegrees,
    map: &DofMap,
    g: &(dyn Fn(Point) -> [f64; 2] + Sync),
) -> Result<Vec<DVector<f64>>> {
    (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            if map.dirichlet[f] {
                project_face_components(mesh, f, degrees, &|p, _| g(p))
            } else {
                Ok(DVector::zeros(map.width))
            }
        })
        .collect()
}

fn project_face_components(
    mesh: &Mesh,
    face: usize,
    degrees: HhoDegrees,
    g: &dyn Fn(Point, Point) -> [f64; 2],
) -> Result<DVector<f64>> {
    let comps = degrees.components();
    let basis = FaceBasis::for_mesh_face(mesh, face, degrees.k_face)?;
    let rule = face_rule(mesh, face, source_order(degrees.k_face))?;
    let normal = mesh.face_normal(face);
    let nf = basis.size();
    let mut m = DMatrix::zeros(nf, nf);
    let mut rhs = DMatrix::zeros(nf, comps);
    let mut v = vec![0.0; nf];
    for (p, w) in rule.iter() {
        basis.eval_values(*p, &mut v);
        let gv = g(*p, normal);
        for i in 0..nf {
            for c in 0..comps {
                rhs[(i, c)] += w * gv[c] * v[i];
            }
            for j in 0..nf {
                m[(i, j)] += w * v[i] * v[j];
            }
        }
    }
    let x = m
        .cholesky()
        .ok_or_else(|| HhoError::SingularMatrix(format!("face {face} mass matrix")))?
        .solve(&rhs);
    Ok(DVector::from_fn(nf * comps, |i, _| {
        x[(i / comps, i % comps)]
    }))
}

/// Neumann contributions `∫_F g_N · ψ` per face (zero blocks on other faces).
/// `g` receives the point and the outward unit normal.
pub fn neumann_rhs(
    mesh: &Mesh,
    degrees: HhoDegrees,
    g: &(dyn Fn(Point, Point) -> [f64; 2] + Sync),
) -> Result<Vec<DVector<f64>>> {
    let comps = degrees.components();
    let nf = polynomial_dimension(degrees.k_face, mesh.dim() - 1);
    (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let mut out = DVector::zeros(nf * comps);
            if mesh.boundary_tag(f) != Some(BoundaryKind::Neumann) || !mesh.is_boundary_face(f) {
                return Ok(out);
            }
            let basis = FaceBasis::for_mesh_face(mesh, f, degrees.k_face)?;
            let rule = face_rule(mesh, f, source_order(degrees.k_face))?;
            let normal = mesh.face_normal(f);
            let mut v = vec![0.0; nf];
            for (p, w) in rule.iter() {
                basis.eval_values(*p, &mut v);
                let gv = g(*p, normal);
                for i in 0..nf {
                    for c in 0..comps {
                        out[i * comps + c] += w * gv[c] * v[i];
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Relative residual target of the iterative solver.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Direct,
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub relative_residual: f64,
    pub iterations: Option<usize>,
}

/// Solves the reduced face system.
pub fn solve_reduced(
    system: &ReducedSystem,
    block: usize,
    options: SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let (x, iterations) = match options.kind {
        SolverKind::Direct => (cholesky_solve(&system.matrix, &system.rhs)?, None),
        SolverKind::Cg => {
            let (x, IterativeReport { iterations, .. }) = cg_block_jacobi(
                &system.matrix,
                &system.rhs,
                block,
                options.tol,
                options.max_iter,
            )?;
            (x, Some(iterations))
        }
    };
    let ax = system.matrix.mul_vec(&x);
    let bnorm = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rnorm = ax
        .iter()
        .zip(&system.rhs)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let relative_residual = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
    Ok((
        x,
        SolveReport {
            relative_residual,
            iterations,
        },
    ))
}

/// Merges the reduced solution with Dirichlet data into one block per face.
pub fn face_values(
    map: &DofMap,
    reduced: &[f64],
    dirichlet_values: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let w = map.width;
    (0..map.num_faces())
        .map(|f| match map.reduced_index[f] {
            Some(r) => DVector::from_column_slice(&reduced[r * w..(r + 1) * w]),
            None => dirichlet_values[f].clone(),
        })
        .collect()
}

/// Cell unknowns from face unknowns, cell by cell.
pub fn recover_cells(
    mesh: &Mesh,
    cells: &[CondensedCell],
    faces: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    cells
        .par_iter()
        .enumerate()
        .map(|(c, cc)| {
            let local: Vec<f64> = mesh
                .cell_faces(c)
                .iter()
                .flat_map(|&f| faces[f].iter().copied())
                .collect();
            cc.recover(&DVector::from_vec(local))
        })
        .collect()
}
