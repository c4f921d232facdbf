//! Empirical spectra of the normalized Laplacian `L̂ = I − D^{-1/2} A D^{-1/2}`.
//!
//! All work is done on the symmetric `L̂`; eigenvalues of the transition
//! matrix `P = D^{-1} A` follow from `μ_j = 1 − λ_j`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sbm::Network;

/// Sweep budget per eigenvalue for the dense tridiagonal QL solver.
pub const DENSE_SWEEPS: usize = 60;

/// Largest network handled by the dense reference path.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEmpirical {
    /// Ascending eigenvalues of `L̂`.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
    /// `max_{j≥2} |1 − λ_j|`, the second-largest modulus among eigenvalues of `P`.
    pub mu2_abs: f64,
    /// Whether that modulus is attained on the positive side (`1 − λ_2`).
    pub mu2_positive: bool,
}

impl SpectrumEmpirical {
    fn from_sorted(eigenvalues: Vec<f64>) -> Self {
        let n = eigenvalues.len();
        let lambda2 = if n >= 2 { eigenvalues[1] } else { f64::NAN };
        let (mu2_abs, mu2_positive) = if n >= 2 {
            let low = (1.0 - eigenvalues[1]).abs();
            let high = (1.0 - eigenvalues[n - 1]).abs();
            (low.max(high), low >= high)
        } else {
            (0.0, true)
        };
        Self {
            eigenvalues,
            lambda2,
            mu2_abs,
            mu2_positive,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for v in &self.eigenvalues {
            writeln!(out, "{v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_degrees(net: &Network) -> Result<()> {
    match (0..net.n()).find(|&i| net.degree(i) == 0) {
        Some(node) => Err(Error::IsolatedNode { node }),
        None => Ok(()),
    }
}

pub fn normalized_laplacian_dense(net: &Network) -> Result<DMatrix<f64>> {
    check_degrees(net)?;
    let n = net.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (net.degree(i) as f64).sqrt())
        .collect();
    let mut l = DMatrix::identity(n, n);
    for (i, j) in net.edges() {
        let v = -inv_sqrt[i] * inv_sqrt[j];
        l[(i, j)] = v;
        l[(j, i)] = v;
    }
    Ok(l)
}

/// Full dense eigen-decomposition of `L̂` (values only).
pub fn normalized_laplacian_spectrum(net: &Network) -> Result<SpectrumEmpirical> {
    let l = normalized_laplacian_dense(net)?;
    let eigenvalues = linalg::symmetric_eigenvalues(l, DENSE_SWEEPS)?;
    Ok(SpectrumEmpirical::from_sorted(eigenvalues))
}

/// `y = L̂ x` without materializing the matrix.
fn apply_laplacian(net: &Network, inv_sqrt: &[f64], x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let acc: f64 = net
            .neighbors(i)
            .iter()
            .map(|&j| inv_sqrt[j as usize] * x[j as usize])
            .sum();
        *yi = x[i] - inv_sqrt[i] * acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
}

/// Second-smallest eigenvalue of `L̂` by Lanczos with full reorthogonalization
/// on the complement of the trivial eigenvector `D^{1/2} 1`.
///
/// Stops once the Ritz residual bound (or its gap-refined square) drops below
/// `tol`; the Krylov dimension is capped at `n − 1`, where the answer is exact.
pub fn lambda2_only(net: &Network, tol: f64) -> Result<f64> {
    check_degrees(net)?;
    let n = net.n();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "lambda2 needs at least two nodes".into(),
        ));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (net.degree(i) as f64).sqrt())
        .collect();
    let mut trivial: Vec<f64> = (0..n).map(|i| (net.degree(i) as f64).sqrt()).collect();
    let norm = dot(&trivial, &trivial).sqrt();
    trivial.iter_mut().for_each(|x| *x /= norm);

    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2b_3c4d);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut basis: Vec<Vec<f64>> = vec![trivial];
    orthogonalize(&mut v, &basis);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let max_dim = n - 1;
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last_residual = f64::INFINITY;
    for k in 0..max_dim {
        basis.push(v.clone());
        apply_laplacian(net, &inv_sqrt, &v, &mut w);
        let alpha = dot(&w, &v);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let beta = dot(&w, &w).sqrt();

        let dim = k + 1;
        let exhausted = dim == max_dim || beta <= 1e-14;
        if exhausted || dim % 5 == 0 || dim < 5 {
            let mut d = alphas.clone();
            let mut e = betas.clone();
            linalg::tridiagonal_eigenvalues(&mut d, &mut e, DENSE_SWEEPS)?;
            let theta = d[0];
            if exhausted {
                return Ok(theta);
            }
            let s = linalg::tridiagonal_eigenvector(&alphas, &betas, theta);
            let residual = beta * s[dim - 1].abs();
            let gap = if dim > 1 { d[1] - theta } else { f64::INFINITY };
            last_residual = residual;
            let refined =
                dim >= 10 && gap.is_finite() && gap > 0.0 && residual * residual / gap <= tol;
            if residual <= tol || refined {
                return Ok(theta);
            }
        }
        betas.push(beta);
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / beta);
    }
    Err(Error::EigenNoConvergence {
        iterations: max_dim,
        residual: last_residual,
    })
}

/// λ2 through the dense path up to [`DENSE_LIMIT`] nodes, Lanczos beyond.
pub fn lambda2(net: &Network) -> Result<f64> {
    if net.n() <= DENSE_LIMIT {
        Ok(normalized_laplacian_spectrum(net)?.lambda2)
    } else {
        lambda2_only(net, 1e-8)
    }
}

/// Equal-width histogram of a sample, for plotting empirical spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && hi > lo, "histogram needs bins > 0 and hi > lo");
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| lo + b as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { edges, counts }
    }

    /// Counts normalized by `total * bin width`; pass `total = n` to get a
    /// density that integrates to the in-range fraction of the sample.
    pub fn density(&self, total: usize) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}
