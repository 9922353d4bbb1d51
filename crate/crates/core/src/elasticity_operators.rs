//! Local operators for linear elasticity in 2D: symmetric strain
//! reconstruction, divergence reconstruction, displacement reconstruction with
//! rigid-body constraints, stabilization, local form and tractions.
//!
//! Vector DoFs interleave components: scalar index `j` and component `c` map to
//! `2j + c` inside the local layout `[T | F_1 | … | F_n]`.

use nalgebra::{DMatrix, DVector};

use crate::context::{kron_identity, symmetrize, CellContext, FieldRank};
use crate::error::{HhoError, Result};
use crate::local_operators::{
    complement_of_pk, gradient_reconstruction, stabilization_flux_correction, stack_rows,
    Stabilization, StabilizationKind,
};

/// Orthonormal basis of symmetric 2×2 tensors used for strain coefficients.
pub const SYM_BASIS: [[[f64; 2]; 2]; 3] = [
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
    [
        [0.0, std::f64::consts::FRAC_1_SQRT_2],
        [std::f64::consts::FRAC_1_SQRT_2, 0.0],
    ],
];

/// Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Lame {
    pub mu: f64,
    pub lambda: f64,
}

impl Lame {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() || !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(HhoError::InvalidInput(format!(
                "Lamé parameters need μ > 0 and λ ≥ 0, got μ = {mu}, λ = {lambda}"
            )));
        }
        Ok(Lame { mu, lambda })
    }
}

#[derive(Debug, Clone)]
pub struct ElasticOperators {
    pub lame: Lame,
    /// Coefficients of `E_sym(v̂) = Σ_s e_s S_s` with `e_s ∈ P^k(T)`.
    pub strain: Vec<DMatrix<f64>>,
    /// `Dv = e_0 + e_1`.
    pub divergence: DMatrix<f64>,
    /// Displacement reconstruction into `P^{k+1}(T; R²)`, interleaved.
    pub displacement: DMatrix<f64>,
    /// Stabilization operators; `penalty` excludes the `2μ` factor.
    pub stabilization: Stabilization,
    pub l: DMatrix<f64>,
}

fn check_vector(ctx: &CellContext) -> Result<()> {
    if ctx.degrees.rank != FieldRank::Vector || ctx.dim != 2 {
        return Err(HhoError::InvalidInput(
            "elasticity operators need a vector-valued 2D cell context".into(),
        ));
    }
    Ok(())
}

/// Strain reconstruction matrices `e_s` (one per symmetric basis tensor).
pub fn strain_reconstruction(ctx: &CellContext) -> Result<Vec<DMatrix<f64>>> {
    check_vector(ctx)?;
    let g = gradient_reconstruction(ctx);
    let (nk, n) = (ctx.n_k(), ctx.n_local());
    Ok(SYM_BASIS
        .iter()
        .map(|s| {
            // (E v, φ S) = Σ_{r,c} S_rc (G_c v_r, φ)
            let mut e = DMatrix::zeros(nk, 2 * n);
            for j in 0..n {
                for r in 0..2 {
                    for c in 0..2 {
                        if s[r][c] != 0.0 {
                            let mut col = e.column_mut(2 * j + r);
                            col.axpy(s[r][c], &g[c].column(j), 1.0);
                        }
                    }
                }
            }
            e
        })
        .collect())
}

/// Divergence reconstruction as the trace of the strain reconstruction.
pub fn divergence_reconstruction(ctx: &CellContext) -> Result<DMatrix<f64>> {
    let e = strain_reconstruction(ctx)?;
    Ok(divergence_from_strain(&e))
}

fn divergence_from_strain(e: &[DMatrix<f64>]) -> DMatrix<f64> {
    &e[0] + &e[1]
}

/// Symmetric-gradient stiffness on `P^{k+1}(T; R²)`, interleaved.
fn strain_stiffness(ctx: &CellContext) -> DMatrix<f64> {
    let nr = ctx.n_rec();
    let t = &ctx.table;
    let d = [
        [t.gram(&t.dx, &t.dx), t.gram(&t.dx, &t.dy)],
        [t.gram(&t.dy, &t.dx), t.gram(&t.dy, &t.dy)],
    ];
    let k = &ctx.stiffness;
    let mut out = DMatrix::zeros(2 * nr, 2 * nr);
    for a in 0..nr {
        for b in 0..nr {
            for s in 0..2 {
                for r in 0..2 {
                    let delta = if r == s { k[(a, b)] } else { 0.0 };
                    out[(2 * a + s, 2 * b + r)] = 0.5 * (delta + d[r][s][(a, b)]);
                }
            }
        }
    }
    symmetrize(out)
}

/// Displacement reconstruction `Dep`, solved as a saddle-point system with
/// Lagrange multipliers for the two mean values and the mean rotation.
pub fn displacement_reconstruction(ctx: &CellContext) -> Result<DMatrix<f64>> {
    check_vector(ctx)?;
    let (nr, nc, n, nf) = (ctx.n_rec(), ctx.n_cell(), ctx.n_local(), ctx.n_face());
    let ke = strain_stiffness(ctx);
    let mut h = DMatrix::zeros(2 * nr, 2 * n);
    for j in 0..nc {
        for r in 0..2 {
            h.column_mut(2 * j + r).copy_from(&ke.column(2 * j + r));
        }
    }
    for (i, fc) in ctx.faces.iter().enumerate() {
        let tab = &fc.cell_table;
        let dn = &tab.dx * fc.normal[0] + &tab.dy * fc.normal[1];
        let cell_vals = tab.values.columns(0, nc).into_owned();
        let parts = |chi: &DMatrix<f64>| {
            (
                tab.gram(&dn, chi),
                [tab.gram(&tab.dx, chi), tab.gram(&tab.dy, chi)],
            )
        };
        let (pn_c, pr_c) = parts(&cell_vals);
        let (pn_f, pr_f) = parts(&fc.face_values);
        let off = ctx.face_offset(i);
        for a in 0..nr {
            for s in 0..2 {
                for r in 0..2 {
                    let delta = if r == s { 1.0 } else { 0.0 };
                    for j in 0..nc {
                        h[(2 * a + s, 2 * j + r)] -=
                            0.5 * (delta * pn_c[(a, j)] + fc.normal[s] * pr_c[r][(a, j)]);
                    }
                    for j in 0..nf {
                        h[(2 * a + s, 2 * (off + j) + r)] +=
                            0.5 * (delta * pn_f[(a, j)] + fc.normal[s] * pr_f[r][(a, j)]);
                    }
                }
            }
        }
    }

    let t = &ctx.table;
    let ints = ctx.basis_integrals();
    let mut c = DMatrix::zeros(3, 2 * nr);
    for b in 0..nr {
        let (mut ix, mut iy) = (0.0, 0.0);
        for (q, w) in t.weights.iter().enumerate() {
            ix += w * t.dx[(q, b)];
            iy += w * t.dy[(q, b)];
        }
        c[(0, 2 * b)] = ints[b];
        c[(1, 2 * b + 1)] = ints[b];
        c[(2, 2 * b)] = 0.5 * iy;
        c[(2, 2 * b + 1)] = -0.5 * ix;
    }
    let mut g = DMatrix::zeros(3, 2 * n);
    for j in 0..nc {
        g[(0, 2 * j)] = ints[j];
        g[(1, 2 * j + 1)] = ints[j];
    }
    for (i, fc) in ctx.faces.iter().enumerate() {
        let off = ctx.face_offset(i);
        for j in 0..nf {
            let m: f64 = (0..fc.cell_table.len())
                .map(|q| fc.cell_table.weights[q] * fc.face_values[(q, j)])
                .sum();
            g[(2, 2 * (off + j))] = 0.5 * fc.normal[1] * m;
            g[(2, 2 * (off + j) + 1)] = -0.5 * fc.normal[0] * m;
        }
    }

    let size = 2 * nr + 3;
    let mut sys = DMatrix::zeros(size, size);
    sys.view_mut((0, 0), (2 * nr, 2 * nr)).copy_from(&ke);
    sys.view_mut((2 * nr, 0), (3, 2 * nr)).copy_from(&c);
    sys.view_mut((0, 2 * nr), (2 * nr, 3))
        .copy_from(&c.transpose());
    let mut rhs = DMatrix::zeros(size, 2 * n);
    rhs.view_mut((0, 0), (2 * nr, 2 * n)).copy_from(&h);
    rhs.view_mut((2 * nr, 0), (3, 2 * n)).copy_from(&g);
    let sol = sys.lu().solve(&rhs).ok_or_else(|| {
        HhoError::SingularMatrix(format!("displacement reconstruction of cell {}", ctx.cell))
    })?;
    Ok(sol.rows(0, 2 * nr).into_owned())
}

/// Elastic stabilization operators (vector analogues of the scalar ones).
/// The returned penalty is `h_T^{-1} Σ S_iᵀ M_i S_i`, without the `2μ` weight.
pub fn stabilization_elastic(ctx: &CellContext, dep: &DMatrix<f64>) -> Result<Stabilization> {
    check_vector(ctx)?;
    let (nc, n, nf) = (ctx.n_cell(), ctx.n_local(), ctx.n_face());
    let mixed = ctx.degrees.is_mixed();
    let dmat = if mixed {
        None
    } else {
        Some(kron_identity(&complement_of_pk(ctx), 2) * dep)
    };
    let faces: Vec<DMatrix<f64>> = ctx
        .faces
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let tr = kron_identity(&fc.trace, 2);
            let mut rhs = match &dmat {
                Some(d) => &tr * d,
                None => DMatrix::zeros(2 * nf, 2 * n),
            };
            let mut cell = rhs.columns_mut(0, 2 * nc);
            cell += tr.columns(0, 2 * nc);
            let mut s = kron_identity(&fc.mass_chol.inverse(), 2) * rhs;
            let off = 2 * ctx.face_offset(i);
            for a in 0..2 * nf {
                s[(a, off + a)] -= 1.0;
            }
            s
        })
        .collect();
    let mut penalty = DMatrix::zeros(2 * n, 2 * n);
    for (s, fc) in faces.iter().zip(&ctx.faces) {
        penalty += s.transpose() * kron_identity(&fc.mass, 2) * s;
    }
    Ok(Stabilization {
        kind: if mixed {
            StabilizationKind::LehrenfeldSchoberl
        } else {
            StabilizationKind::EqualOrder
        },
        faces,
        penalty: symmetrize(penalty / ctx.h()),
    })
}

/// Local elastic matrix
/// `2μ (E v, E w) + λ (D v, D w) + 2μ h_T^{-1} Σ (S_i v, S_i w)_{F_i}`.
pub fn local_bilinear_elastic(ctx: &CellContext, lame: Lame) -> Result<ElasticOperators> {
    check_vector(ctx)?;
    let lame = Lame::new(lame.mu, lame.lambda)?;
    let strain = strain_reconstruction(ctx)?;
    let divergence = divergence_from_strain(&strain);
    let displacement = displacement_reconstruction(ctx)?;
    let stabilization = stabilization_elastic(ctx, &displacement)?;
    let mk = ctx.mass.view((0, 0), (ctx.n_k(), ctx.n_k())).into_owned();
    let mut consistency = DMatrix::zeros(2 * ctx.n_local(), 2 * ctx.n_local());
    for e in &strain {
        consistency += e.transpose() * &mk * e;
    }
    let l = (consistency + &stabilization.penalty) * (2.0 * lame.mu)
        + divergence.transpose() * &mk * &divergence * lame.lambda;
    Ok(ElasticOperators {
        lame,
        strain,
        divergence,
        displacement,
        stabilization,
        l: symmetrize(l),
    })
}

/// Matrices mapping local DoFs to traction coefficients on each face:
/// `T = −σ_h n + 2μ h_T^{-1} (S̃* ∘ S)` with `σ_h = 2μ E_sym + λ Dv I`.
pub fn traction_matrices(ctx: &CellContext, ops: &ElasticOperators) -> Vec<DMatrix<f64>> {
    let (nk, nf) = (ctx.n_k(), ctx.n_face());
    let Lame { mu, lambda } = ops.lame;
    let stacked = stack_rows(&ops.stabilization.faces);
    let correction = stabilization_flux_correction(ctx, &stacked, 2, 2.0 * mu / ctx.h());
    ctx.faces
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let n = fc.normal;
            let ttilde = fc.trace.columns(0, nk).into_owned();
            let mut out = DMatrix::zeros(2 * nf, ops.l.ncols());
            for r in 0..2 {
                // (σ_h n)_r as P^k(T) coefficients
                let mut sn = &ops.divergence * (lambda * n[r]);
                for (s, e) in SYM_BASIS.iter().zip(&ops.strain) {
                    let coef = 2.0 * mu * (s[r][0] * n[0] + s[r][1] * n[1]);
                    if coef != 0.0 {
                        sn += e * coef;
                    }
                }
                let proj = fc.mass_chol.solve(&(&ttilde * sn));
                for a in 0..nf {
                    out.row_mut(2 * a + r).copy_from(&(-proj.row(a)));
                }
            }
            out + correction.rows(i * 2 * nf, 2 * nf)
        })
        .collect()
}

/// Traction coefficients (interleaved components) on each face of the cell.
pub fn traction_recovery(
    ctx: &CellContext,
    ops: &ElasticOperators,
    v: &DVector<f64>,
) -> Vec<DVector<f64>> {
    traction_matrices(ctx, ops).iter().map(|m| m * v).collect()
}

/// Stress coefficients `(σ_xx, σ_yy, σ_xy)` in `P^k(T)` from local DoFs.
pub fn stress_coefficients(ops: &ElasticOperators, v: &DVector<f64>) -> [DVector<f64>; 3] {
    let Lame { mu, lambda } = ops.lame;
    let e: Vec<DVector<f64>> = ops.strain.iter().map(|m| m * v).collect();
    let dv = &ops.divergence * v;
    [
        &e[0] * (2.0 * mu) + &dv * lambda,
        &e[1] * (2.0 * mu) + &dv * lambda,
        &e[2] * (2.0 * mu * std::f64::consts::FRAC_1_SQRT_2),
    ]
}
