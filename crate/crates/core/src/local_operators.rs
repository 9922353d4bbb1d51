//! Poisson-side local operators: potential reconstruction, gradient
//! reconstruction, the two stabilizations, the local bilinear form and the
//! numerical fluxes.
//!
//! All matrices act on the scalar local layout `[T | F_1 | … | F_n]`.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::context::{symmetrize, CellContext};
use crate::error::{HhoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StabilizationKind {
    /// Equal-order stabilization with the reconstruction correction.
    EqualOrder,
    /// Lehrenfeld–Schöberl stabilization of the mixed-order variant.
    LehrenfeldSchoberl,
}

/// Output of [`reconstruction`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Stiffness of `P^{k+1}(T)` without the constant row and column.
    pub kstar: DMatrix<f64>,
    /// Right-hand side map (rows: non-constant basis functions).
    pub h: DMatrix<f64>,
    /// `K*^{-1} H`: non-constant coefficients of the reconstruction.
    pub r_star: DMatrix<f64>,
    /// Full reconstruction: mean-fix row followed by `r_star`.
    pub r: DMatrix<f64>,
    /// Consistency matrix `Hᵀ R*`.
    pub a: DMatrix<f64>,
}

/// Per-face stabilization operators and the assembled penalty matrix.
#[derive(Debug, Clone)]
pub struct Stabilization {
    pub kind: StabilizationKind,
    /// `S_i` maps local DoFs to coefficients in the basis of face `i`.
    pub faces: Vec<DMatrix<f64>>,
    /// `Σ_i h_T^{-1} S_iᵀ M_i S_i`.
    pub penalty: DMatrix<f64>,
}

impl Stabilization {
    /// All face operators stacked vertically.
    pub fn stacked(&self) -> DMatrix<f64> {
        stack_rows(&self.faces)
    }
}

#[derive(Debug, Clone)]
pub struct PoissonOperators {
    pub reconstruction: Reconstruction,
    /// One matrix per space direction, mapping to `P^k(T)` coefficients.
    pub gradient: Vec<DMatrix<f64>>,
    pub stabilization: Stabilization,
    /// `A + penalty`.
    pub l: DMatrix<f64>,
}

pub(crate) fn stack_rows(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let ncols = blocks.first().map_or(0, |b| b.ncols());
    let nrows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Normal derivative table `n·∇φ` of the cell basis at face nodes.
fn normal_derivatives(ctx: &CellContext, i: usize) -> DMatrix<f64> {
    let fc = &ctx.faces[i];
    &fc.cell_table.dx * fc.normal[0] + &fc.cell_table.dy * fc.normal[1]
}

pub fn reconstruction(ctx: &CellContext) -> Result<Reconstruction> {
    let (nr, nc, n) = (ctx.n_rec(), ctx.n_cell(), ctx.n_local());
    let k = &ctx.stiffness;
    let mut h_full = DMatrix::zeros(nr, n);
    h_full
        .view_mut((0, 0), (nr, nc))
        .copy_from(&k.view((0, 0), (nr, nc)));
    for (i, fc) in ctx.faces.iter().enumerate() {
        let dn = normal_derivatives(ctx, i);
        let cell_part = fc
            .cell_table
            .gram(&dn, &fc.cell_table.values.columns(0, nc).into_owned());
        let face_part = fc.cell_table.gram(&dn, &fc.face_values);
        let mut hc = h_full.view_mut((0, 0), (nr, nc));
        hc -= cell_part;
        h_full
            .view_mut((0, ctx.face_offset(i)), (nr, ctx.n_face()))
            .copy_from(&face_part);
    }
    let kstar = k.view((1, 1), (nr - 1, nr - 1)).into_owned();
    let h = h_full.rows(1, nr - 1).into_owned();
    let chol = kstar
        .clone()
        .cholesky()
        .ok_or_else(|| HhoError::SingularMatrix(format!("K* of cell {}", ctx.cell)))?;
    let r_star = chol.solve(&h);

    let ints = ctx.basis_integrals();
    let mut r0 = DMatrix::zeros(1, n);
    for j in 0..nc {
        r0[(0, j)] = ints[j];
    }
    r0 -= ints.rows(1, nr - 1).transpose() * &r_star;
    r0 /= ints[0];
    let mut r = DMatrix::zeros(nr, n);
    r.row_mut(0).copy_from(&r0.row(0));
    r.view_mut((1, 0), (nr - 1, n)).copy_from(&r_star);
    let a = symmetrize(h.transpose() * &r_star);
    Ok(Reconstruction {
        kstar,
        h,
        r_star,
        r,
        a,
    })
}

/// Right-hand sides `B_c` of the gradient reconstruction, one per direction:
/// `(G v̂, q e_c) = −(v_T, ∂_c q) + Σ_F (v_F, n_c q)_F` for `q ∈ P^k(T)`.
pub fn gradient_rhs(ctx: &CellContext) -> Vec<DMatrix<f64>> {
    let (nk, nc, n) = (ctx.n_k(), ctx.n_cell(), ctx.n_local());
    let t = &ctx.table;
    (0..ctx.dim)
        .map(|c| {
            let d = if c == 0 { &t.dx } else { &t.dy };
            let mut b = DMatrix::zeros(nk, n);
            let vol = t.gram(
                &d.columns(0, nk).into_owned(),
                &t.values.columns(0, nc).into_owned(),
            );
            b.view_mut((0, 0), (nk, nc)).copy_from(&(-vol));
            for (i, fc) in ctx.faces.iter().enumerate() {
                let tr = fc.trace.columns(0, nk).transpose() * fc.normal[c];
                b.view_mut((0, ctx.face_offset(i)), (nk, ctx.n_face()))
                    .copy_from(&tr);
            }
            b
        })
        .collect()
}

/// Gradient reconstruction into `P^k(T; R^d)`: `G_c = M_k^{-1} B_c`.
pub fn gradient_reconstruction(ctx: &CellContext) -> Vec<DMatrix<f64>> {
    gradient_rhs(ctx)
        .iter()
        .map(|b| ctx.solve_mass_k(b))
        .collect()
}

fn face_selector(ctx: &CellContext, i: usize) -> DMatrix<f64> {
    let nf = ctx.n_face();
    let mut s = DMatrix::zeros(nf, ctx.n_local());
    for a in 0..nf {
        s[(a, ctx.face_offset(i) + a)] = 1.0;
    }
    s
}

fn penalty(ctx: &CellContext, faces: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = ctx.n_local();
    let mut p = DMatrix::zeros(n, n);
    for (s, fc) in faces.iter().zip(&ctx.faces) {
        p += s.transpose() * &fc.mass * s;
    }
    symmetrize(p / ctx.h())
}

/// `I - Π^k_T` on coefficients of `P^{k+1}(T)`.
pub(crate) fn complement_of_pk(ctx: &CellContext) -> DMatrix<f64> {
    let (nr, nk) = (ctx.n_rec(), ctx.n_k());
    let q = ctx.mass.view((0, 0), (nk, nr)).into_owned();
    let pi = ctx.solve_mass_k(&q);
    let mut d = DMatrix::identity(nr, nr);
    let mut top = d.view_mut((0, 0), (nk, nr));
    top -= pi;
    d
}

/// Equal-order stabilization
/// `S_i = M_i^{-1}(T_i v_T + T'_i (I − Π^k_T) R v̂) − v_{F_i}`.
pub fn stabilization_equal_order(ctx: &CellContext, r: &DMatrix<f64>) -> Result<Stabilization> {
    if ctx.degrees.is_mixed() {
        return Err(HhoError::InvalidInput(
            "equal-order stabilization needs k' = k".into(),
        ));
    }
    let nc = ctx.n_cell();
    let d = complement_of_pk(ctx);
    let dr = d * r;
    let faces = ctx
        .faces
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let mut rhs = &fc.trace * &dr;
            let mut cell = rhs.columns_mut(0, nc);
            cell += fc.trace.columns(0, nc);
            fc.mass_inv_mul(&rhs) - face_selector(ctx, i)
        })
        .collect::<Vec<_>>();
    let penalty = penalty(ctx, &faces);
    Ok(Stabilization {
        kind: StabilizationKind::EqualOrder,
        faces,
        penalty,
    })
}

/// Lehrenfeld–Schöberl stabilization `Z_i = M_i^{-1} T_i v_T − v_{F_i}`.
pub fn stabilization_ls(ctx: &CellContext) -> Result<Stabilization> {
    if !ctx.degrees.is_mixed() {
        return Err(HhoError::InvalidInput(
            "the Lehrenfeld–Schöberl stabilization needs k' = k + 1".into(),
        ));
    }
    let (nc, n) = (ctx.n_cell(), ctx.n_local());
    let faces = ctx
        .faces
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let mut t = DMatrix::zeros(ctx.n_face(), n);
            t.columns_mut(0, nc).copy_from(&fc.trace.columns(0, nc));
            fc.mass_inv_mul(&t) - face_selector(ctx, i)
        })
        .collect::<Vec<_>>();
    let penalty = penalty(ctx, &faces);
    Ok(Stabilization {
        kind: StabilizationKind::LehrenfeldSchoberl,
        faces,
        penalty,
    })
}

/// Local matrix `L = A + Σ h_T^{-1} S_iᵀ M_i S_i`, choosing the stabilization
/// from the degrees (equal-order or mixed-order).
pub fn local_bilinear(ctx: &CellContext) -> Result<PoissonOperators> {
    let reconstruction = reconstruction(ctx)?;
    let stabilization = if ctx.degrees.is_mixed() {
        stabilization_ls(ctx)?
    } else {
        stabilization_equal_order(ctx, &reconstruction.r)?
    };
    let l = symmetrize(&reconstruction.a + &stabilization.penalty);
    Ok(PoissonOperators {
        gradient: gradient_reconstruction(ctx),
        reconstruction,
        stabilization,
        l,
    })
}

/// Block-diagonal face mass matrix `M_∂` and its inverse.
pub(crate) fn boundary_mass(ctx: &CellContext, components: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let nf = ctx.n_face() * components;
    let m = ctx.num_faces() * nf;
    let mut mass = DMatrix::zeros(m, m);
    let mut inv = DMatrix::zeros(m, m);
    for (i, fc) in ctx.faces.iter().enumerate() {
        let mi = crate::context::kron_identity(&fc.mass, components);
        let ii = crate::context::kron_identity(&fc.mass_chol.inverse(), components);
        mass.view_mut((i * nf, i * nf), (nf, nf)).copy_from(&mi);
        inv.view_mut((i * nf, i * nf), (nf, nf)).copy_from(&ii);
    }
    (mass, inv)
}

/// `h_T^{-1} (S̃* ∘ S)` as a matrix on local DoFs, stacked over faces, where
/// `S(0, w) = −S̃ w` and the adjoint is taken in `L²(∂T)`.
pub(crate) fn stabilization_flux_correction(
    ctx: &CellContext,
    stacked: &DMatrix<f64>,
    components: usize,
    weight: f64,
) -> DMatrix<f64> {
    let cl = ctx.n_cell() * components;
    let nfl = stacked.ncols() - cl;
    let s_tilde = -stacked.columns(cl, nfl).into_owned();
    let (mass, inv) = boundary_mass(ctx, components);
    inv * s_tilde.transpose() * mass * stacked * weight
}

/// Matrices `Φ_i` with `φ_{F_i} = Φ_i v̂`, the numerical flux
/// `−n·∇R(v̂)|_F + h_T^{-1}(S̃*∘S)(v̂)` in the basis of face `i`.
pub fn flux_matrices(ctx: &CellContext, ops: &PoissonOperators) -> Vec<DMatrix<f64>> {
    let correction =
        stabilization_flux_correction(ctx, &ops.stabilization.stacked(), 1, 1.0 / ctx.h());
    let nf = ctx.n_face();
    ctx.faces
        .iter()
        .enumerate()
        .map(|(i, fc)| {
            let dn = normal_derivatives(ctx, i);
            let n_i = -fc.cell_table.gram(&fc.face_values, &dn);
            fc.mass_inv_mul(&(n_i * &ops.reconstruction.r)) + correction.rows(i * nf, nf)
        })
        .collect()
}

/// Numerical flux coefficients on each face of the cell.
pub fn numerical_flux(
    ctx: &CellContext,
    ops: &PoissonOperators,
    v: &DVector<f64>,
) -> Vec<DVector<f64>> {
    flux_matrices(ctx, ops).iter().map(|m| m * v).collect()
}

/// Gram matrix of the discrete H¹-like seminorm
/// `‖∇v_T‖² + Σ_F h_F^{-1} ‖v_F − v_T‖²_F` (h_F = h_T in 1D).
pub fn seminorm_gram(ctx: &CellContext) -> DMatrix<f64> {
    let (nc, n) = (ctx.n_cell(), ctx.n_local());
    let mut g = DMatrix::zeros(n, n);
    g.view_mut((0, 0), (nc, nc))
        .copy_from(&ctx.stiffness.view((0, 0), (nc, nc)));
    for (i, fc) in ctx.faces.iter().enumerate() {
        let hf = if ctx.dim == 1 { ctx.h() } else { fc.measure };
        let cv = fc.cell_table.values.columns(0, nc).into_owned();
        let mut jump = DMatrix::zeros(fc.cell_table.len(), n);
        jump.columns_mut(0, nc).copy_from(&cv);
        let o = ctx.face_offset(i);
        let mut fcols = jump.columns_mut(o, ctx.n_face());
        fcols -= &fc.face_values;
        g += fc.cell_table.gram(&jump, &jump) / hf;
    }
    symmetrize(g)
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

impl PoissonOperators {
    pub fn build(ctx: &CellContext) -> Result<Self> {
        local_bilinear(ctx)
    }

    /// Debug dump of all local matrices.
    pub fn to_json(&self, ctx: &CellContext) -> Value {
        json!({
            "cell": ctx.cell,
            "k_face": ctx.degrees.k_face,
            "k_cell": ctx.degrees.k_cell,
            "mass": matrix_json(&ctx.mass),
            "kstar": matrix_json(&self.reconstruction.kstar),
            "h": matrix_json(&self.reconstruction.h),
            "r": matrix_json(&self.reconstruction.r),
            "a": matrix_json(&self.reconstruction.a),
            "g": self.gradient.iter().map(matrix_json).collect::<Vec<_>>(),
            "stabilization": format!("{:?}", self.stabilization.kind),
            "s": self.stabilization.faces.iter().map(matrix_json).collect::<Vec<_>>(),
            "penalty": matrix_json(&self.stabilization.penalty),
            "l": matrix_json(&self.l),
            "face_mass": ctx.faces.iter().map(|f| matrix_json(&f.mass)).collect::<Vec<_>>(),
            "face_trace": ctx.faces.iter().map(|f| matrix_json(&f.trace)).collect::<Vec<_>>(),
        })
    }
}
