//! Random-matrix prediction of the normalized-Laplacian spectrum of an SBM.
//!
//! The diagonal of `L̂` is identically one, so the blockwise resolvent
//! diagonals `t_r(z)` solve
//!
//! ```text
//! t_r = 1 / (z − 1 − Σ_s n_s V_rs t_s),        r = 1..K
//! ```
//!
//! From the converged `t` we get the bulk density
//! `ρ(λ) = −(1/nπ) Σ_r n_r Im t_r(λ + iη)`, the support edges (where the
//! real fixed point stops being stable, i.e. the spectral radius of
//! `J_rs = n_s V_rs t_r²` reaches one) and the isolated eigenvalues, the real
//! roots of `det(I + T(z) E N)` outside the support. The sign in that
//! determinant is `+` because the rank-K expectation enters `L̂` as `−S E Sᵀ`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbm::SbmModel;

const SINGULAR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight `α` of the new iterate in `t ← (1−α) t + α F(t)`.
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Step of the real-axis scans for support edges and isolated roots.
    pub scan_step: f64,
    /// Window scanned for the support edges.
    pub support_window: (f64, f64),
    /// Window scanned for isolated eigenvalues.
    pub isolated_window: (f64, f64),
    /// Absolute tolerance of the bisection on support edges.
    pub edge_tol: f64,
    /// Absolute tolerance of the bisection on isolated roots.
    pub root_tol: f64,
    /// `|det|` below which a touching minimum counts as a double root.
    pub double_root_tol: f64,
    /// Shift isolated values by [`RmtPredictor::degree_shift`] before
    /// reading off λ2.
    pub degree_correction: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 10_000,
            tol: 1e-10,
            scan_step: 1e-3,
            support_window: (0.0, 2.0),
            isolated_window: (-0.5, 2.5),
            edge_tol: 1e-7,
            root_tol: 1e-8,
            double_root_tol: 1e-10,
            degree_correction: true,
        }
    }
}

/// Grid on which the bulk density is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Imaginary offset of the evaluation points `λ + iη`.
    pub eta: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 2.0,
            points: 801,
            eta: 1e-3,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.lo],
            m => (0..m)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (m - 1) as f64)
                .collect(),
        }
    }
}

/// Converged (or last) state of the fixed-point iteration at one `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesState {
    pub z: Complex64,
    pub t: Vec<Complex64>,
    /// `max_r |F_r(t) − t_r|` at the returned `t`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub left: f64,
    pub right: f64,
    /// Zero-variance model: there is no bulk and both edges sit at 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolatedRoot {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub converged: Vec<bool>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub eta: f64,
    pub max_residual: f64,
    pub unconverged_points: usize,
    pub degenerate_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrediction {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(rename = "lambdaL")]
    pub lambda_l: f64,
    #[serde(rename = "lambdaR")]
    pub lambda_r: f64,
    /// Roots of the determinant, ascending, repeated according to multiplicity.
    pub isolated: Vec<f64>,
    /// `isolated` plus the degree shift of each root (equal to `isolated`
    /// when the correction is off).
    pub isolated_corrected: Vec<f64>,
    pub predicted_lambda2: f64,
    /// No (corrected) nontrivial isolated value left of the bulk: λ2 sits at λL.
    pub merged: bool,
    pub diagnostics: Diagnostics,
}

impl SpectralPrediction {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "lambda,density")?;
        for (x, y) in self.grid.iter().zip(&self.density) {
            writeln!(out, "{x},{y}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Integral of the density over the grid (trapezoid rule).
    pub fn density_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Predicted λ2 without the density curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda2Prediction {
    pub lambda2: f64,
    /// Second root of the determinant itself, without the degree shift.
    pub raw_lambda2: f64,
    #[serde(rename = "lambdaL")]
    pub lambda_l: f64,
    #[serde(rename = "lambdaR")]
    pub lambda_r: f64,
    pub merged: bool,
}

/// Precomputed block kernels of one model.
#[derive(Debug, Clone)]
pub struct RmtPredictor {
    k: usize,
    n: f64,
    sizes: Vec<f64>,
    /// `n_s V_rs`
    nv: DMatrix<f64>,
    /// `E_rs n_s`
    en: DMatrix<f64>,
    cfg: SolverConfig,
}

impl RmtPredictor {
    pub fn new(model: &SbmModel) -> Result<Self> {
        Self::with_config(model, SolverConfig::default())
    }

    pub fn with_config(model: &SbmModel, cfg: SolverConfig) -> Result<Self> {
        let bm = model.block_matrices()?;
        let k = model.k();
        let sizes: Vec<f64> = model.sizes().iter().map(|&s| s as f64).collect();
        let nv = DMatrix::from_fn(k, k, |r, s| sizes[s] * bm.variance[(r, s)]);
        let en = DMatrix::from_fn(k, k, |r, s| bm.expectation[(r, s)] * sizes[s]);
        Ok(Self {
            k,
            n: model.n() as f64,
            sizes,
            nv,
            en,
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn zero_variance(&self) -> bool {
        self.nv.iter().all(|&v| v == 0.0)
    }

    /// `F(z, t)`, the right-hand side of the self-consistent equations.
    fn map(&self, z: Complex64, t: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        for (r, o) in out.iter_mut().enumerate().take(self.k) {
            let mut den = z - 1.0;
            for (s, ts) in t.iter().enumerate().take(self.k) {
                den -= self.nv[(r, s)] * ts;
            }
            if den.norm() < SINGULAR {
                return Err(Error::SingularPoint { z: z.to_string() });
            }
            *o = den.inv();
        }
        Ok(())
    }

    /// Damped fixed-point iteration from `t0`; retries with plain iteration if
    /// the damped run does not converge.
    pub fn fixed_point(&self, z: Complex64, t0: &[Complex64]) -> Result<StieltjesState> {
        let damped = self.iterate(z, t0, self.cfg.damping)?;
        if damped.residual <= self.cfg.tol || self.cfg.damping == 1.0 {
            return self.finish(damped);
        }
        let plain = self.iterate(z, t0, 1.0)?;
        if plain.residual <= self.cfg.tol {
            return Ok(plain);
        }
        self.finish(damped)
    }

    fn finish(&self, state: StieltjesState) -> Result<StieltjesState> {
        if state.residual <= self.cfg.tol {
            Ok(state)
        } else {
            Err(Error::FixedPointNoConvergence {
                z: state.z.to_string(),
                iterations: state.iterations,
                residual: state.residual,
            })
        }
    }

    /// Runs the iteration with a given damping, returning the last state
    /// whether or not it converged.
    pub fn iterate(&self, z: Complex64, t0: &[Complex64], alpha: f64) -> Result<StieltjesState> {
        assert_eq!(t0.len(), self.k, "t0 must have one entry per block");
        let mut t = t0.to_vec();
        let mut f = vec![Complex64::new(0.0, 0.0); self.k];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.cfg.max_iters {
            self.map(z, &t, &mut f)?;
            iterations += 1;
            residual = t
                .iter()
                .zip(&f)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if residual <= self.cfg.tol {
                t.copy_from_slice(&f);
                break;
            }
            for (ti, fi) in t.iter_mut().zip(&f) {
                *ti = (1.0 - alpha) * *ti + alpha * fi;
            }
        }
        Ok(StieltjesState {
            z,
            t,
            residual,
            iterations,
        })
    }

    fn density_from(&self, t: &[Complex64]) -> f64 {
        let s: f64 = self.sizes.iter().zip(t).map(|(n, ti)| n * ti.im).sum();
        (-s / (self.n * std::f64::consts::PI)).max(0.0)
    }

    /// Density at `λ + iη` for each grid point, warm-started along the grid.
    /// Points whose fixed point fails are flagged and carry density 0.
    pub fn bulk_density(&self, grid: &[f64], eta: f64) -> Result<DensityCurve> {
        if eta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {eta}"
            )));
        }
        let mut density = Vec::with_capacity(grid.len());
        let mut converged = Vec::with_capacity(grid.len());
        let mut max_residual = 0.0f64;
        let mut warm: Option<Vec<Complex64>> = None;
        for &x in grid {
            let z = Complex64::new(x, eta);
            let t0 = warm
                .clone()
                .unwrap_or_else(|| vec![(z - 1.0).inv(); self.k]);
            match self.fixed_point(z, &t0) {
                Ok(state) => {
                    max_residual = max_residual.max(state.residual);
                    density.push(self.density_from(&state.t));
                    converged.push(true);
                    warm = Some(state.t);
                }
                Err(Error::FixedPointNoConvergence { residual, .. }) => {
                    max_residual = max_residual.max(residual);
                    density.push(0.0);
                    converged.push(false);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(DensityCurve {
            grid: grid.to_vec(),
            density,
            converged,
            max_residual,
        })
    }

    /// Plain real-axis iteration. Returns the converged real fixed point, or
    /// `None` when the iteration does not settle.
    fn real_fixed_point(&self, z: f64, t0: &[f64]) -> Option<Vec<f64>> {
        let k = self.k;
        let mut t = t0.to_vec();
        let mut f = vec![0.0; k];
        for _ in 0..self.cfg.max_iters {
            for (r, fr) in f.iter_mut().enumerate() {
                let mut den = z - 1.0;
                for (s, ts) in t.iter().enumerate() {
                    den -= self.nv[(r, s)] * ts;
                }
                if den.abs() < SINGULAR {
                    return None;
                }
                *fr = 1.0 / den;
            }
            let residual = t
                .iter()
                .zip(&f)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            t.copy_from_slice(&f);
            if !residual.is_finite() {
                return None;
            }
            if residual <= self.cfg.tol {
                return Some(t);
            }
        }
        None
    }

    /// Spectral radius of `J_rs = n_s V_rs t_r²`.
    pub fn jacobian_radius(&self, t: &[f64]) -> f64 {
        if self.k == 1 {
            return (self.nv[(0, 0)] * t[0] * t[0]).abs();
        }
        let j = DMatrix::from_fn(self.k, self.k, |r, s| self.nv[(r, s)] * t[r] * t[r]);
        j.complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Stable real fixed point at `z`, if `z` lies outside the support.
    fn outside_state(&self, z: f64, t0: &[f64]) -> Option<Vec<f64>> {
        let t = self.real_fixed_point(z, t0)?;
        (self.jacobian_radius(&t) < 1.0).then_some(t)
    }

    fn cold_start(z: f64, k: usize) -> Vec<f64> {
        vec![1.0 / (z - 1.0); k]
    }

    /// Bulk support edges located by scanning inward from both ends of the
    /// window and bisecting on the stability of the real fixed point.
    pub fn support_boundaries(&self) -> Result<Support> {
        if self.zero_variance() {
            return Ok(Support {
                left: 1.0,
                right: 1.0,
                degenerate: true,
            });
        }
        let (lo, hi) = self.cfg.support_window;
        let left = self.scan_edge(lo, hi, 1.0)?;
        let right = self.scan_edge(hi, lo, -1.0)?;
        Ok(Support {
            left,
            right,
            degenerate: false,
        })
    }

    fn scan_edge(&self, start: f64, end: f64, dir: f64) -> Result<f64> {
        let err = || Error::NoBracket {
            lo: self.cfg.support_window.0,
            hi: self.cfg.support_window.1,
        };
        let h = self.cfg.scan_step;
        let mut t = self
            .outside_state(start, &Self::cold_start(start, self.k))
            .ok_or_else(err)?;
        let mut outside = start;
        let steps = ((end - start).abs() / h).ceil() as usize;
        let mut inside = None;
        for i in 1..=steps {
            let z = start + dir * h * i as f64;
            match self.outside_state(z, &t) {
                Some(next) => {
                    t = next;
                    outside = z;
                }
                None => {
                    inside = Some(z);
                    break;
                }
            }
        }
        let mut inside = inside.ok_or_else(err)?;
        while (inside - outside).abs() > self.cfg.edge_tol {
            let mid = 0.5 * (inside + outside);
            match self.outside_state(mid, &t) {
                Some(next) => {
                    t = next;
                    outside = mid;
                }
                None => inside = mid,
            }
        }
        Ok(0.5 * (inside + outside))
    }

    /// `det(I + T(z) E N)` for a real fixed point `t`.
    pub fn isolated_determinant(&self, t: &[f64]) -> f64 {
        let m = DMatrix::from_fn(self.k, self.k, |r, s| {
            let id = if r == s { 1.0 } else { 0.0 };
            id + t[r] * self.en[(r, s)]
        });
        m.determinant()
    }

    /// Real roots of `det(I + T(z) E N)` outside the bulk, ascending.
    pub fn isolated_roots(&self, support: &Support) -> Result<Vec<IsolatedRoot>> {
        let (wlo, whi) = self.cfg.isolated_window;
        let h = self.cfg.scan_step;
        let mut roots = Vec::new();
        // left of the bulk: scan from the window edge toward λL
        if support.left - h > wlo {
            let samples = self.sample_segment(wlo, support.left - h);
            roots.extend(self.roots_in(&samples));
        }
        if support.right + h < whi {
            let mut samples = self.sample_segment(whi, support.right + h);
            samples.reverse();
            roots.extend(self.roots_in(&samples));
        }
        if support.degenerate {
            // no bulk: the excluded point z = 1 is itself a pole of t
            roots.retain(|r: &IsolatedRoot| (r.value - 1.0).abs() > h);
        }
        roots.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(roots)
    }

    /// Isolated eigenvalues ascending, repeated according to multiplicity.
    pub fn isolated_eigenvalues(&self, support: &Support) -> Result<Vec<f64>> {
        Ok(self
            .isolated_roots(support)?
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value, r.multiplicity))
            .collect())
    }

    /// Samples `(z, det, t)` from `start` toward `end` with warm starts; stops at
    /// the first point where the real fixed point is lost.
    fn sample_segment(&self, start: f64, end: f64) -> Vec<(f64, f64, Vec<f64>)> {
        let h = self.cfg.scan_step;
        let dir = if end >= start { 1.0 } else { -1.0 };
        let steps = ((end - start).abs() / h).floor() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut t = Self::cold_start(start, self.k);
        for i in 0..=steps {
            let z = start + dir * h * i as f64;
            match self.outside_state(z, &t) {
                Some(next) => {
                    out.push((z, self.isolated_determinant(&next), next.clone()));
                    t = next;
                }
                None => break,
            }
        }
        out
    }

    fn det_at(&self, z: f64, t0: &[f64]) -> Option<(f64, Vec<f64>)> {
        let t = self.real_fixed_point(z, t0)?;
        Some((self.isolated_determinant(&t), t))
    }

    fn roots_in(&self, samples: &[(f64, f64, Vec<f64>)]) -> Vec<IsolatedRoot> {
        let mut roots = Vec::new();
        for w in samples.windows(2) {
            let (z0, f0, t0) = &w[0];
            let (z1, f1, _) = &w[1];
            if *f0 == 0.0 {
                roots.push(IsolatedRoot {
                    value: *z0,
                    multiplicity: 1,
                });
            } else if f0.signum() != f1.signum() && *f1 != 0.0 {
                if let Some(z) = self.bisect_root(*z0, *f0, *z1, t0) {
                    roots.push(IsolatedRoot {
                        value: z,
                        multiplicity: 1,
                    });
                }
            }
        }
        for w in samples.windows(3) {
            let (za, fa, _) = &w[0];
            let (_, fb, tb) = &w[1];
            let (zc, fc, _) = &w[2];
            let touching = fa.signum() == fb.signum()
                && fb.signum() == fc.signum()
                && fb.abs() < fa.abs()
                && fb.abs() <= fc.abs();
            if touching {
                if let Some((z, fmin)) = self.minimize_abs_det(*za, *zc, tb) {
                    if fmin < self.cfg.double_root_tol {
                        roots.push(IsolatedRoot {
                            value: z,
                            multiplicity: 2,
                        });
                    }
                }
            }
        }
        roots
    }

    fn bisect_root(&self, mut a: f64, fa: f64, mut b: f64, t0: &[f64]) -> Option<f64> {
        let sa = fa.signum();
        let mut t = t0.to_vec();
        while (b - a).abs() > self.cfg.root_tol {
            let mid = 0.5 * (a + b);
            let (fm, tm) = self.det_at(mid, &t)?;
            t = tm;
            if fm == 0.0 {
                return Some(mid);
            }
            if fm.signum() == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        Some(0.5 * (a + b))
    }

    /// Golden-section minimization of `|det|` on `[a, b]`.
    fn minimize_abs_det(&self, mut a: f64, mut b: f64, t0: &[f64]) -> Option<(f64, f64)> {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut t = t0.to_vec();
        let eval = |z: f64, t: &mut Vec<f64>| -> Option<f64> {
            let (f, tn) = self.det_at(z, t)?;
            *t = tn;
            Some(f.abs())
        };
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = eval(c, &mut t)?;
        let mut fd = eval(d, &mut t)?;
        while (b - a).abs() > self.cfg.root_tol * 1e-2 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = eval(c, &mut t)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = eval(d, &mut t)?;
            }
        }
        let z = 0.5 * (a + b);
        Some((z, eval(z, &mut t)?))
    }

    /// Block values of the null vector of `I + T(z) E N` at an isolated root.
    fn root_block_vector(&self, z: f64) -> Option<Vec<f64>> {
        let t = self.real_fixed_point(z, &Self::cold_start(z, self.k))?;
        let m = DMatrix::from_fn(self.k, self.k, |r, s| {
            let id = if r == s { 1.0 } else { 0.0 };
            id + t[r] * self.en[(r, s)]
        });
        let svd = m.svd(false, true);
        let v_t = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        Some(v_t.row(imin).iter().copied().collect())
    }

    /// Upward shift of an isolated root from normalizing by realized rather
    /// than expected degrees: `Σ_r w_r Σ_s n_s V_rs`, where `w_r` is the share
    /// of the eigenvector's mass on block `r`. For the trivial root this
    /// returns it exactly to zero.
    pub fn degree_shift(&self, z: f64) -> f64 {
        let Some(phi) = self.root_block_vector(z) else {
            return 0.0;
        };
        let mass: Vec<f64> = phi
            .iter()
            .zip(&self.sizes)
            .map(|(p, n)| n * p * p)
            .collect();
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        (0..self.k)
            .map(|r| mass[r] / total * self.nv.row(r).sum())
            .sum()
    }

    /// Isolated values with the degree shift applied (if enabled).
    pub fn corrected(&self, isolated: &[f64]) -> Vec<f64> {
        if !self.cfg.degree_correction {
            return isolated.to_vec();
        }
        isolated.iter().map(|&z| z + self.degree_shift(z)).collect()
    }

    /// λ2 prediction: the second isolated value left of the bulk (the smallest
    /// is the trivial eigenvalue), or λL once it has merged into the bulk.
    pub fn predict_lambda2(&self) -> Result<Lambda2Prediction> {
        let support = self.support_boundaries()?;
        let isolated = self.isolated_eigenvalues(&support)?;
        Ok(self.lambda2_from(&support, &isolated).0)
    }

    fn lambda2_from(&self, support: &Support, isolated: &[f64]) -> (Lambda2Prediction, Vec<f64>) {
        let corrected = self.corrected(isolated);
        let left: Vec<usize> = (0..isolated.len())
            .filter(|&i| isolated[i] < support.left)
            .collect();
        let (lambda2, raw_lambda2, merged) = if left.len() >= 2 {
            let i = left[1];
            if corrected[i] < support.left {
                (corrected[i], isolated[i], false)
            } else {
                (support.left, isolated[i], true)
            }
        } else {
            (support.left, support.left, true)
        };
        let pred = Lambda2Prediction {
            lambda2,
            raw_lambda2,
            lambda_l: support.left,
            lambda_r: support.right,
            merged,
        };
        (pred, corrected)
    }

    pub fn predict(&self, grid: &GridSpec) -> Result<SpectralPrediction> {
        let support = self.support_boundaries()?;
        let isolated = self.isolated_eigenvalues(&support)?;
        let (l2, isolated_corrected) = self.lambda2_from(&support, &isolated);
        let points = grid.points();
        let curve = self.bulk_density(&points, grid.eta)?;
        let unconverged = curve.converged.iter().filter(|&&c| !c).count();
        Ok(SpectralPrediction {
            grid: curve.grid,
            density: curve.density,
            lambda_l: support.left,
            lambda_r: support.right,
            isolated,
            isolated_corrected,
            predicted_lambda2: l2.lambda2,
            merged: l2.merged,
            diagnostics: Diagnostics {
                eta: grid.eta,
                max_residual: curve.max_residual,
                unconverged_points: unconverged,
                degenerate_support: support.degenerate,
            },
        })
    }
}

pub fn fixed_point(
    model: &SbmModel,
    z: Complex64,
    t0: &[Complex64],
    cfg: SolverConfig,
) -> Result<StieltjesState> {
    RmtPredictor::with_config(model, cfg)?.fixed_point(z, t0)
}

pub fn bulk_density(model: &SbmModel, grid: &[f64], eta: f64) -> Result<DensityCurve> {
    RmtPredictor::new(model)?.bulk_density(grid, eta)
}

pub fn support_boundaries(model: &SbmModel) -> Result<Support> {
    RmtPredictor::new(model)?.support_boundaries()
}

pub fn isolated_eigenvalues(model: &SbmModel) -> Result<Vec<f64>> {
    let p = RmtPredictor::new(model)?;
    let support = p.support_boundaries()?;
    p.isolated_eigenvalues(&support)
}

pub fn predict(model: &SbmModel, grid: &GridSpec) -> Result<SpectralPrediction> {
    RmtPredictor::new(model)?.predict(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::TwoLevelProbs;

    fn er(n: usize, p: f64) -> SbmModel {
        SbmModel::two_level(vec![n], TwoLevelProbs::new(p, p).unwrap(), 0).unwrap()
    }

    fn two(sizes: Vec<usize>, p_in: f64, p_out: f64) -> SbmModel {
        SbmModel::two_level(sizes, TwoLevelProbs::new(p_in, p_out).unwrap(), 0).unwrap()
    }

    /// Closed-form root of `a t² − (z−1) t + 1 = 0` with `Im t ≤ 0`.
    fn semicircle_t(z: Complex64, a: f64) -> Complex64 {
        let w = z - 1.0;
        let disc = (w * w - 4.0 * a).sqrt();
        let r1 = (w - disc) / (2.0 * a);
        let r2 = (w + disc) / (2.0 * a);
        if r1.im <= 0.0 && r1.norm() <= r2.norm() || r2.im > 0.0 {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn single_block_matches_quadratic() {
        let p = RmtPredictor::new(&er(1000, 0.1)).unwrap();
        let a = 0.9 / 100.0;
        let z = Complex64::new(1.0, 0.01);
        let state = p.fixed_point(z, &[Complex64::new(0.0, -1.0)]).unwrap();
        let exact = semicircle_t(z, a);
        assert!(exact.im <= 0.0);
        assert!(
            (state.t[0] - exact).norm() < 1e-10,
            "{} vs {exact}",
            state.t[0]
        );
    }

    #[test]
    fn zero_variance_decouples() {
        let p = RmtPredictor::new(&two(vec![5, 7], 1.0, 1.0)).unwrap();
        let z = Complex64::new(0.3, 0.2);
        let state = p.fixed_point(z, &[Complex64::new(0.0, -1.0); 2]).unwrap();
        let expected = (z - 1.0).inv();
        for t in &state.t {
            assert!((t - expected).norm() < 1e-12);
        }
        let support = p.support_boundaries().unwrap();
        assert!(support.degenerate);
        assert_eq!((support.left, support.right), (1.0, 1.0));
    }

    #[test]
    fn resolvent_sign() {
        let p = RmtPredictor::new(&two(vec![700, 300], 0.1, 0.02)).unwrap();
        let mut t = vec![Complex64::new(-1.0, -1.0); 2];
        for i in 0..=40 {
            let z = Complex64::new(0.6 + 0.02 * i as f64, 1e-3);
            let s = p.fixed_point(z, &t).unwrap();
            assert!(s.t.iter().all(|ti| ti.im <= 0.0), "z = {z}");
            t = s.t;
        }
    }

    #[test]
    fn semicircle_edges() {
        let (n, pr): (f64, f64) = (1000.0, 0.1);
        let r = 2.0 * ((1.0 - pr) / (n * pr)).sqrt();
        let s = support_boundaries(&er(1000, 0.1)).unwrap();
        assert!((s.left - (1.0 - r)).abs() < 1e-4, "{}", s.left);
        assert!((s.right - (1.0 + r)).abs() < 1e-4, "{}", s.right);
        assert!((s.left - 0.81026).abs() < 1e-4);
        assert!((s.right - 1.18974).abs() < 1e-4);
    }

    #[test]
    fn single_block_has_only_trivial_root() {
        let p = RmtPredictor::new(&er(1000, 0.1)).unwrap();
        let support = p.support_boundaries().unwrap();
        let iso = p.isolated_eigenvalues(&support).unwrap();
        assert_eq!(iso.len(), 1, "{iso:?}");
        // trivial root sits at −nV
        assert!((iso[0] + 0.009).abs() < 1e-6, "{iso:?}");
    }

    #[test]
    fn constant_pi_has_no_second_isolated_value() {
        let p = RmtPredictor::new(&two(vec![700, 300], 0.1, 0.1)).unwrap();
        let l2 = p.predict_lambda2().unwrap();
        assert!(l2.merged);
        assert_eq!(l2.lambda2, l2.lambda_l);
        let support = p.support_boundaries().unwrap();
        let iso = p.isolated_eigenvalues(&support).unwrap();
        assert_eq!(iso.len(), 1, "{iso:?}");
        assert!(iso[0].abs() < 0.05);
    }

    #[test]
    fn disconnected_equal_blocks_give_double_trivial_root() {
        let p = RmtPredictor::new(&two(vec![500, 500], 0.1, 0.0)).unwrap();
        let support = p.support_boundaries().unwrap();
        let roots = p.isolated_roots(&support).unwrap();
        assert_eq!(roots.len(), 1, "{roots:?}");
        assert_eq!(roots[0].multiplicity, 2);
        let l2 = p.predict_lambda2().unwrap();
        assert!(!l2.merged);
        // −nV of each block: (1 − p)/(n_r p) = 0.018, shifted back to zero
        assert!((l2.raw_lambda2 + 0.018).abs() < 1e-6, "{}", l2.raw_lambda2);
        assert!(l2.lambda2.abs() < 1e-6, "{}", l2.lambda2);
    }

    #[test]
    fn equal_blocks_root_matches_closed_form() {
        // For two equal blocks t is shared, and the nontrivial root solves
        // 1 + θ t = 0 with θ = Δ/(p_in+p_out): z = 1 − θ − a/θ.
        let (n, p_in, p_out) = (1000usize, 0.1, 0.02);
        let p = RmtPredictor::new(&two(vec![n / 2, n / 2], p_in, p_out)).unwrap();
        let theta = (p_in - p_out) / (p_in + p_out);
        let dhat = (n / 2) as f64 * (p_in + p_out);
        let a = (n / 2) as f64 * (p_in * (1.0 - p_in) + p_out * (1.0 - p_out)) / (dhat * dhat);
        let expected = 1.0 - theta - a / theta;
        let l2 = p.predict_lambda2().unwrap();
        assert!(!l2.merged);
        assert!(
            (l2.raw_lambda2 - expected).abs() < 1e-6,
            "{} vs {expected}",
            l2.raw_lambda2
        );
        // equal blocks: every root moves up by the same a
        assert!((l2.lambda2 - (expected + a)).abs() < 1e-6, "{}", l2.lambda2);
    }

    #[test]
    fn density_is_nonnegative_and_normalized() {
        let grid = GridSpec {
            lo: 0.5,
            hi: 1.5,
            points: 1001,
            eta: 1e-3,
        };
        let pred = predict(&two(vec![700, 300], 0.1, 0.02), &grid).unwrap();
        assert!(pred.density.iter().all(|&d| d >= 0.0));
        assert_eq!(pred.diagnostics.unconverged_points, 0);
        let mass = pred.density_mass();
        assert!((0.9..=1.0).contains(&mass), "mass {mass}");
    }

    #[test]
    fn degree_shift_zeroes_trivial_root() {
        for model in [er(800, 0.05), two(vec![700, 300], 0.1, 0.01)] {
            let p = RmtPredictor::new(&model).unwrap();
            let support = p.support_boundaries().unwrap();
            let iso = p.isolated_eigenvalues(&support).unwrap();
            let fixed = p.corrected(&iso);
            assert!(fixed[0].abs() < 1e-3, "{fixed:?}");
        }
    }

    #[test]
    fn correction_can_be_disabled() {
        let cfg = SolverConfig {
            degree_correction: false,
            ..SolverConfig::default()
        };
        let p = RmtPredictor::with_config(&two(vec![700, 300], 0.1, 0.01), cfg).unwrap();
        let l2 = p.predict_lambda2().unwrap();
        assert_eq!(l2.lambda2, l2.raw_lambda2);
    }

    #[test]
    fn rejects_nonpositive_eta() {
        assert!(bulk_density(&er(100, 0.5), &[1.0], 0.0).is_err());
    }
}
