//! Sparse symmetric linear solves: direct Cholesky with a regularization
//! ladder, or block-Jacobi preconditioned conjugate gradients.

use std::ops::Range;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Col, Par, Side};
use nalgebra::DMatrix;

use crate::{Error, Result};

/// Number of regularization rungs tried after a failed factorization.
const REGULARIZATION_RUNGS: i32 = 6;

/// Compressed sparse rows with duplicates summed in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        // stable bucket by row, then merge duplicate columns within each row
        let mut start = vec![0; n + 1];
        for &(r, _, _) in entries {
            start[r + 1] += 1;
        }
        for r in 0..n {
            start[r + 1] += start[r];
        }
        let mut next = start.clone();
        let mut bucket = vec![(0usize, 0.0f64); entries.len()];
        for &(r, c, v) in entries {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len() / 4);
        let mut values: Vec<f64> = Vec::with_capacity(entries.len() / 4);
        // slot of each column in the current row; sums follow insertion order
        let mut slot = vec![usize::MAX; n];
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            row.clear();
            for &(c, v) in &bucket[start[r]..start[r + 1]] {
                if slot[c] == usize::MAX {
                    slot[c] = row.len();
                    row.push((c, v));
                } else {
                    row[slot[c]].1 += v;
                }
            }
            for &(c, _) in &row {
                slot[c] = usize::MAX;
            }
            row.sort_unstable_by_key(|e| e.0);
            col_idx.extend(row.iter().map(|e| e.0));
            values.extend(row.iter().map(|e| e.1));
            row_ptr[r + 1] = col_idx.len();
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c)
            .map(|k| self.values[self.row_ptr[r] + k])
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

fn cholesky_solve(a: &Csr, b: &[f64], shift: f64) -> Option<Vec<f64>> {
    // row r of the symmetric CSR, restricted to c <= r, is column r of the
    // upper triangle in CSC form
    let mut col_ptr = Vec::with_capacity(a.n + 1);
    let mut row_idx = Vec::with_capacity(a.values.len() / 2 + a.n);
    let mut values = Vec::with_capacity(a.values.len() / 2 + a.n);
    col_ptr.push(0);
    for r in 0..a.n {
        let mut has_diagonal = false;
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.col_idx[k];
            if c > r {
                break;
            }
            row_idx.push(c);
            if c == r {
                has_diagonal = true;
                values.push(a.values[k] + shift);
            } else {
                values.push(a.values[k]);
            }
        }
        if !has_diagonal {
            row_idx.push(r);
            values.push(shift);
        }
        col_ptr.push(row_idx.len());
    }
    let symbolic = SymbolicSparseColMatRef::new_checked(a.n, a.n, &col_ptr, None, &row_idx);
    let m = SparseColMatRef::new(symbolic, &values);
    let llt = m.sp_cholesky(Side::Upper).ok()?;
    let rhs = Col::from_fn(a.n, |i| b[i]);
    let x = llt.solve(&rhs);
    let x: Vec<f64> = (0..a.n).map(|i| x[i]).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solve `A x = b` for symmetric positive (semi)definite `A`, retrying with
/// growing diagonal shifts when the factorization fails.
pub fn solve_direct(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    faer::set_global_parallelism(Par::Seq);
    if let Some(x) = cholesky_solve(a, b, 0.0) {
        return Ok(x);
    }
    let scale = a
        .diagonal()
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
        .max(1e-300);
    for k in 0..REGULARIZATION_RUNGS {
        let shift = 1e-10 * scale * 10f64.powi(k);
        if let Some(x) = cholesky_solve(a, b, shift) {
            log::debug!("factorization needed diagonal shift {shift:e}");
            return Ok(x);
        }
    }
    Err(Error::LinearSolve(format!(
        "Cholesky failed after {REGULARIZATION_RUNGS} regularization rungs"
    )))
}

/// Preconditioned conjugate gradients with a block-Jacobi preconditioner;
/// `blocks` partition `0..n`.
pub fn solve_pcg(
    a: &Csr,
    b: &[f64],
    blocks: &[Range<usize>],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_blocks: Vec<(Range<usize>, DMatrix<f64>)> = blocks
        .iter()
        .map(|r| {
            let k = r.len();
            let m = DMatrix::from_fn(k, k, |i, j| a.get(r.start + i, r.start + j));
            let inv = m
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .unwrap_or_else(|| {
                    DMatrix::from_diagonal(&m.diagonal().map(|d| {
                        if d.abs() > 0.0 {
                            1.0 / d
                        } else {
                            1.0
                        }
                    }))
                });
            (r.clone(), inv)
        })
        .collect();
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (range, inv) in &inv_blocks {
            let rb = nalgebra::DVector::from_column_slice(&r[range.clone()]);
            let zb = inv * rb;
            z[range.clone()].copy_from_slice(zb.as_slice());
        }
        z
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iters {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    if res.is_finite() && res < 1e-2 {
        log::warn!("PCG stopped at relative residual {res:e}");
        Ok(x)
    } else {
        Err(Error::LinearSolve(format!(
            "PCG did not converge (relative residual {res:e})"
        )))
    }
}
