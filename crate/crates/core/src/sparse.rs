//! Compressed sparse column storage, a direct sparse Cholesky solve backed by
//! `faer`, and a block-Jacobi preconditioned conjugate gradient fallback.

use std::io::Write;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::error::{HhoError, Result};

/// Square or rectangular CSC matrix storing the full pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds the matrix from `(row, col, value)` triplets, summing duplicates.
    /// Entries are sorted stably, so the summation order only depends on the
    /// order of the input and results are reproducible bit for bit.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= nrows || j >= ncols) {
            return Err(HhoError::InvalidInput(format!(
                "entry ({i}, {j}) outside a {nrows}×{ncols} matrix"
            )));
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].1, triplets[t].0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(i);
                values.push(v);
                col_ptr[j + 1] += 1;
                last = Some((i, j));
            }
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(CscMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries column by column.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(p) => self.values[self.col_ptr[j] + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij − A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Writes one `row col value` line per stored entry, 0-based.
    pub fn write_coordinate(&self, mut w: impl Write) -> Result<()> {
        for (i, j, v) in self.iter() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` by sparse Cholesky.
pub fn cholesky_solve(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let trips: Vec<Triplet<usize, usize, f64>> = a
        .iter()
        .filter(|&(i, j, _)| i >= j)
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| HhoError::Solver(format!("sparse matrix construction: {e:?}")))?;
    let llt = m.sp_cholesky(Side::Lower).map_err(|e| {
        HhoError::Solver(format!("matrix is not symmetric positive definite ({e:?})"))
    })?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(HhoError::Solver(
            "non-finite solution from the direct solver".into(),
        ));
    }
    Ok(out)
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterativeReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients preconditioned by the inverses of the diagonal blocks
/// of size `block` (one block per face).
pub fn cg_block_jacobi(
    a: &CscMatrix,
    b: &[f64],
    block: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterativeReport)> {
    let n = a.nrows();
    if block == 0 || !n.is_multiple_of(block) {
        return Err(HhoError::InvalidInput(format!(
            "block size {block} does not divide {n}"
        )));
    }
    let nb = n / block;
    let mut inv_blocks = Vec::with_capacity(nb);
    for k in 0..nb {
        let o = k * block;
        let d = DMatrix::from_fn(block, block, |i, j| a.get(o + i, o + j));
        let chol = d.cholesky().ok_or_else(|| {
            HhoError::Solver(format!("diagonal block {k} is not positive definite"))
        })?;
        inv_blocks.push(chol.inverse());
    }
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (k, inv) in inv_blocks.iter().enumerate() {
            let o = k * block;
            for i in 0..block {
                z[o + i] = (0..block).map(|j| inv[(i, j)] * r[o + j]).sum();
            }
        }
        z
    };
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            IterativeReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(HhoError::Solver(
                "matrix is not positive definite (CG breakdown)".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            // Confirm with the true residual.
            let ax = a.mul_vec(&x);
            let true_rel = ax
                .iter()
                .zip(b)
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                .sqrt()
                / bnorm;
            if true_rel <= 10.0 * tol {
                return Ok((
                    x,
                    IterativeReport {
                        iterations: it,
                        relative_residual: true_rel,
                    },
                ));
            }
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(HhoError::Solver(format!(
        "conjugate gradients did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}
