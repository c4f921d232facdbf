//! Small dense/tridiagonal helpers shared by the spectral code.

use nalgebra::linalg::SymmetricTridiagonal;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson
/// shifts. `diag` is overwritten with the eigenvalues in ascending order.
/// `off[i]` couples rows `i` and `i + 1`; it is destroyed.
pub fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64], max_sweeps: usize) -> Result<()> {
    let n = diag.len();
    assert!(off.len() + 1 >= n, "off-diagonal too short");
    if n == 0 {
        return Ok(());
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let mut total = 0usize;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            total += 1;
            if iter > max_sweeps {
                return Err(Error::EigenNoConvergence {
                    iterations: total,
                    residual: e[l].abs(),
                });
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    diag.sort_by(f64::total_cmp);
    Ok(())
}

/// Ascending eigenvalues of a dense symmetric matrix (lower triangle read).
pub fn symmetric_eigenvalues(m: DMatrix<f64>, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let (d, e) = SymmetricTridiagonal::new(m).unpack_tridiagonal();
    let mut d: Vec<f64> = d.iter().copied().collect();
    let mut e: Vec<f64> = e.iter().copied().collect();
    tridiagonal_eigenvalues(&mut d, &mut e, max_sweeps)?;
    Ok(d)
}

/// Eigenvector of a symmetric tridiagonal matrix for the (converged) eigenvalue
/// `theta`, by a few steps of inverse iteration. Returned with unit norm.
pub fn tridiagonal_eigenvector(diag: &[f64], off: &[f64], theta: f64) -> Vec<f64> {
    let n = diag.len();
    let scale = diag
        .iter()
        .chain(off.iter())
        .fold(1.0f64, |a, &x| a.max(x.abs()));
    let shift = theta + scale * 1e-13;
    let mut v = vec![1.0; n];
    for _ in 0..3 {
        v = solve_tridiagonal(diag, off, shift, &v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            v = vec![1.0 / (n as f64).sqrt(); n];
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Solves `(T - shift I) x = rhs` by the Thomas algorithm; vanishing pivots are
/// replaced by a tiny value, which is what inverse iteration wants anyway.
fn solve_tridiagonal(diag: &[f64], off: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let guard = |p: f64| {
        if p.abs() < 1e-300 {
            1e-300f64.copysign(p)
        } else {
            p
        }
    };
    let mut c = vec![0.0; n];
    let mut x = rhs.to_vec();
    let mut piv = guard(diag[0] - shift);
    if n > 1 {
        c[0] = off[0] / piv;
    }
    x[0] /= piv;
    for i in 1..n {
        piv = guard(diag[i] - shift - off[i - 1] * c[i - 1]);
        if i + 1 < n {
            c[i] = off[i] / piv;
        }
        x[i] = (x[i] - off[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}
