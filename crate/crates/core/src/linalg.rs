//! Small dense symmetric solvers for the least-squares meta-learner.
//!
//! Systems here are normal equations of at most a few dozen unknowns, so a
//! hand-rolled Cholesky plus a Jacobi-eigendecomposition pseudo-inverse (for
//! the minimum-norm solution of singular systems) is all that is needed.
//! Everything is deterministic: fixed sweep order, fixed thresholds.

use crate::error::{Error, Result};

/// Relative pivot threshold below which Cholesky declares the system
/// numerically singular.
const CHOLESKY_TOL: f64 = 1e-12;

/// Relative eigenvalue threshold below which the pseudo-inverse treats an
/// eigenvalue as zero.
const PINV_TOL: f64 = 1e-12;

/// Solves `a x = b` for symmetric positive-definite `a` (row-major, dim x
/// dim) by Cholesky factorization. Fails if a pivot falls below the
/// tolerance, signalling a (near-)singular system.
pub fn cholesky_solve(a: &[f64], b: &[f64], dim: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim);
    let scale = a
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= scale * CHOLESKY_TOL {
                    return Err(Error::validation("cholesky: matrix not positive definite"));
                }
                l[i * dim + j] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * dim + k] * y[k];
        }
        y[i] = sum / l[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in i + 1..dim {
            sum -= l[k * dim + i] * x[k];
        }
        x[i] = sum / l[i * dim + i];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues, eigenvectors as row-major columns matrix `v`),
/// with `a = v diag(vals) v^T`.
fn jacobi_eigen(a: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..dim {
            for q in p + 1..dim {
                off += m[p * dim + q] * m[p * dim + q];
            }
        }
        let frob: f64 = m.iter().map(|x| x * x).sum();
        if off <= frob * 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k * dim + p];
                    let mkq = m[k * dim + q];
                    m[k * dim + p] = c * mkp - s * mkq;
                    m[k * dim + q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p * dim + k];
                    let mqk = m[q * dim + k];
                    m[p * dim + k] = c * mpk - s * mqk;
                    m[q * dim + k] = s * mpk + c * mqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..dim).map(|i| m[i * dim + i]).collect();
    (vals, v)
}

/// Minimum-norm solution of `a x = b` for symmetric positive-semidefinite
/// `a` via the eigendecomposition pseudo-inverse. For normal equations
/// `a = X^T X`, `b = X^T y` this is the minimum-norm least-squares solution.
pub fn pinv_solve(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let (vals, v) = jacobi_eigen(a, dim);
    let max_val = vals.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let cutoff = max_val * dim as f64 * PINV_TOL;
    // x = V diag(1/vals where |val| > cutoff) V^T b
    let mut vtb = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = 0.0;
        for k in 0..dim {
            sum += v[k * dim + i] * b[k];
        }
        vtb[i] = sum;
    }
    for i in 0..dim {
        vtb[i] = if vals[i].abs() > cutoff {
            vtb[i] / vals[i]
        } else {
            0.0
        };
    }
    let mut x = vec![0.0; dim];
    for k in 0..dim {
        let mut sum = 0.0;
        for i in 0..dim {
            sum += v[k * dim + i] * vtb[i];
        }
        x[k] = sum;
    }
    x
}

/// Solves ridge-regularized normal equations `(g + ridge*P) beta = b`, where
/// `P` is the identity with a zero in the intercept slot (index 0). Falls
/// back to the minimum-norm pseudo-inverse solution when the system is
/// singular at ridge zero.
pub fn ridge_normal_solve(g: &[f64], b: &[f64], dim: usize, ridge: f64) -> Vec<f64> {
    let mut a = g.to_vec();
    if ridge > 0.0 {
        for i in 1..dim {
            a[i * dim + i] += ridge;
        }
    }
    match cholesky_solve(&a, b, dim) {
        Ok(x) => x,
        Err(_) => pinv_solve(&a, b, dim),
    }
}
