use super::{dot, Matrix};
use crate::error::{Error, Result};

/// Relative threshold (against the largest singular value) below which a
/// singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;
const ORTH_TOL: f64 = 1e-15;

/// Thin singular value decomposition `m = U diag(s) Vᵀ`.
///
/// For an `r x c` input with `k = min(r, c)`, `u` is `r x k`, `v` is `c x k`
/// and `singular_values` has length `k`, sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub u: Matrix,
    pub v: Matrix,
    pub numerical_rank: usize,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let (r, c, k) = (self.u.rows(), self.v.rows(), self.singular_values.len());
        let mut out = Matrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out[(i, j)] = (0..k).map(|t| self.u[(i, t)] * self.singular_values[t] * self.v[(j, t)]).sum();
            }
        }
        out
    }

    pub fn smallest(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() >= m.cols() {
        let (u, s, v) = jacobi_tall(m)?;
        Ok(finish(u, s, v))
    } else {
        let (u, s, v) = jacobi_tall(&m.transpose())?;
        let t = finish(u, s, v);
        Ok(SvdResult { u: t.v, v: t.u, ..t })
    }
}

/// Orthonormal basis of the right null space `ker(m)`, as columns of an
/// `cols x dim(ker)` matrix, plus the singular values counted as nonzero.
pub(crate) fn kernel_and_nonzero(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let n = m.cols();
    // Pad with zero rows so the right factor is a full n x n basis.
    let padded = if m.rows() < n {
        let mut p = Matrix::zeros(n, n);
        p.as_mut_slice()[..m.rows() * n].copy_from_slice(m.as_slice());
        p
    } else {
        m.clone()
    };
    let (u, s, v) = jacobi_tall(&padded)?;
    let res = finish(u, s, v);
    let rank = res.numerical_rank;
    let mut kernel = Matrix::zeros(n, n - rank);
    for (t, col) in (rank..n).enumerate() {
        for i in 0..n {
            kernel[(i, t)] = res.v[(i, col)];
        }
    }
    Ok((kernel, res.singular_values[..rank].to_vec()))
}

type Columns = Vec<Vec<f64>>;

fn jacobi_tall(m: &Matrix) -> Result<(Columns, Vec<f64>, Columns)> {
    let (rows, n) = (m.rows(), m.cols());
    debug_assert!(rows >= n);
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let mut a: Columns = (0..n).map(|j| m.column(j)).collect();
    let mut v: Columns = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // columns below this squared norm are numerically zero
    let negligible = f64::EPSILON.powi(2) * a.iter().map(|c| dot(c, c)).sum::<f64>();
    let mut converged = n < 2;
    let mut worst = 0.0;
    for _ in 0..MAX_SWEEPS {
        worst = 0.0_f64;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha <= negligible || beta <= negligible || gamma == 0.0 {
                    continue;
                }
                let ratio = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                if ratio <= ORTH_TOL {
                    continue;
                }
                worst = worst.max(ratio);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNonConvergence { sweeps: MAX_SWEEPS, residual: worst });
    }

    let s: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    Ok((a, s, v))
}

fn rotate(cols: &mut Columns, p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Sorts, normalises the left factor, and completes it to an orthonormal set.
fn finish(a: Columns, s: Vec<f64>, v: Columns) -> SvdResult {
    let n = s.len();
    let rows = a.first().map_or(0, Vec::len);
    let vrows = v.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let smax = order.first().map_or(0.0, |&i| s[i]);
    let tiny = smax * f64::EPSILON * (rows.max(1) as f64);

    let mut u_cols: Columns = Vec::with_capacity(n);
    let mut sv = Vec::with_capacity(n);
    let mut v_cols: Columns = Vec::with_capacity(n);
    for &j in &order {
        sv.push(s[j]);
        v_cols.push(v[j].clone());
        if s[j] > tiny && s[j] > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / s[j]).collect());
        } else {
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, rows);

    let numerical_rank = if smax > 0.0 { sv.iter().filter(|&&x| x > RANK_TOL * smax).count() } else { 0 };

    let mut u = Matrix::zeros(rows, n);
    let mut vm = Matrix::zeros(vrows, n);
    for t in 0..n {
        for i in 0..rows {
            u[(i, t)] = u_cols[t][i];
        }
        for i in 0..vrows {
            vm[(i, t)] = v_cols[t][i];
        }
    }
    SvdResult { singular_values: sv, u, v: vm, numerical_rank }
}

/// Fills empty columns with unit vectors orthogonal to all filled ones.
fn complete_orthonormal(cols: &mut Columns, dim: usize) {
    let mut candidate = 0;
    for t in 0..cols.len() {
        if !cols[t].is_empty() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 1e-8 {
                cols[t] = e.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}
