//! Small dense linear-algebra kernels used by the solvers and oracles.
//!
//! Everything here targets matrices of modest size (sparsity budgets,
//! merged CoSaMP supports, latent dimensions), where a hand-rolled
//! factorization is simpler and faster than pulling in a LAPACK binding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Solves `A x = b` for square `A` by LU with partial pivoting.
///
/// Returns `None` if a pivot is (numerically) zero, i.e. the system is
/// singular at working precision.
pub fn solve_lu(a: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    let scale = lu.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu[(col, col)].abs();
        for r in col + 1..n {
            let v = lu[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= scale * 1e-14 {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                lu.swap((col, c), (pivot_row, c));
            }
            x.swap(col, pivot_row);
        }
        let inv = 1.0 / lu[(col, col)];
        for r in col + 1..n {
            let f = lu[(r, col)] * inv;
            if f == 0.0 {
                continue;
            }
            for c in col + 1..n {
                lu[(r, c)] -= f * lu[(col, c)];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= lu[(col, col)];
        for r in 0..col {
            let f = lu[(r, col)];
            x[r] -= f * x[col];
        }
    }
    Some(x)
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues in descending
/// order and eigenvectors as the corresponding columns.
pub fn jacobi_eigh(a: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        let vals = Array1::from_iter(m.diag().iter().copied());
        return (vals, v);
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * frobenius(&m.view()).max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let vals = Array1::from_iter(order.iter().map(|&i| m[(i, i)]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, new_col)] = v[(r, old_col)];
        }
    }
    (vals, vecs)
}

/// Spectral norm (largest singular value) of a symmetric matrix.
pub fn sym_spectral_norm(a: &ArrayView2<f64>) -> f64 {
    let (vals, _) = jacobi_eigh(a);
    vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of a general rectangular matrix via the Gram matrix of its
/// smaller side.
pub fn spectral_norm(a: &ArrayView2<f64>) -> f64 {
    let (m, n) = (a.nrows(), a.ncols());
    let gram = if n <= m { a.t().dot(a) } else { a.dot(&a.t()) };
    let (vals, _) = jacobi_eigh(&gram.view());
    vals.iter()
        .fold(0.0f64, |acc, v| acc.max(*v))
        .max(0.0)
        .sqrt()
}

/// Smallest singular value of a tall matrix (`m >= n`).
pub fn min_singular_value(a: &ArrayView2<f64>) -> f64 {
    assert!(a.nrows() >= a.ncols());
    let gram = a.t().dot(a);
    let (vals, _) = jacobi_eigh(&gram.view());
    vals.iter()
        .fold(f64::INFINITY, |acc, v| acc.min(*v))
        .max(0.0)
        .sqrt()
}

/// Least squares `min ||b - A x||_2` for tall-or-square `A` over a small
/// column count.
///
/// The fast path solves the normal equations by Cholesky; if the Gram matrix
/// is rank-deficient the minimum-norm solution is computed from its
/// eigendecomposition instead (pseudo-inverse), and the caller is told via
/// the returned flag so it can log the event.
pub fn least_squares(a: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Result<(Array1<f64>, bool)> {
    let (m, k) = (a.nrows(), a.ncols());
    if b.len() != m {
        return Err(Error::dimension_mismatch(format!(
            "least_squares: matrix has {m} rows but rhs has {} entries",
            b.len()
        )));
    }
    if k == 0 {
        return Ok((Array1::zeros(0), false));
    }
    let gram = a.t().dot(a);
    let rhs = a.t().dot(b);
    if let Some(chol) = cholesky(&gram.view()) {
        let x = chol_solve(&chol, &rhs.view());
        return Ok((x, false));
    }
    // Rank-deficient: minimum-norm solution through the Gram eigensystem.
    let (vals, vecs) = jacobi_eigh(&gram.view());
    let vmax = vals.iter().fold(0.0f64, |acc, v| acc.max(*v));
    let tol = vmax * (k as f64) * 1e-12;
    let mut x = Array1::<f64>::zeros(k);
    for i in 0..k {
        if vals[i] > tol {
            let col = vecs.column(i);
            let coeff = col.dot(&rhs) / vals[i];
            for r in 0..k {
                x[r] += coeff * col[r];
            }
        }
    }
    Ok((x, true))
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix, or `None` if a pivot drops below tolerance.
fn cholesky(a: &ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    let scale = a
        .diag()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= scale * 1e-13 {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Some(l)
}

fn chol_solve(l: &Array2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let f = l[(i, k)];
            y[i] -= f * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let f = l[(k, i)];
            y[i] -= f * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

pub fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm2(v: &ArrayView1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Indices of the `k` largest-magnitude entries, ties broken by lowest index.
pub fn top_k_by_magnitude(v: &ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let k = k.min(v.len());
    idx.sort_by(|&i, &j| {
        v[j].abs()
            .partial_cmp(&v[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}
