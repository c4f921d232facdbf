//! Least-squares fits of `τ = a / (c − Δ)`.

use serde::{Deserialize, Serialize};

use super::SweepRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalFit {
    pub a: f64,
    pub c: f64,
    pub rss: f64,
    pub r2: f64,
    pub points: usize,
    pub pole_fixed: bool,
}

impl ReciprocalFit {
    pub fn eval(&self, delta: f64) -> f64 {
        self.a / (self.c - delta)
    }
}

/// Best `a` for a fixed pole and its residual sum of squares.
fn solve_a(x: &[f64], y: &[f64], c: f64) -> (f64, f64) {
    let basis: Vec<f64> = x.iter().map(|d| 1.0 / (c - d)).collect();
    let sxy: f64 = basis.iter().zip(y).map(|(b, t)| b * t).sum();
    let sxx: f64 = basis.iter().map(|b| b * b).sum();
    let a = sxy / sxx;
    let rss = basis.iter().zip(y).map(|(b, t)| (t - a * b).powi(2)).sum();
    (a, rss)
}

fn r_squared(y: &[f64], rss: f64) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|t| (t - m).powi(2)).sum();
    1.0 - rss / tss
}

/// Fits `y ≈ a / (c − x)`. With `fix_pole` the fit is linear regression of
/// `y` on `1/(c − x)` through the origin; otherwise `c` is searched right of
/// the data on a log grid, then refined by golden section.
pub fn fit_reciprocal(x: &[f64], y: &[f64], fix_pole: Option<f64>) -> Result<ReciprocalFit> {
    assert_eq!(x.len(), y.len(), "fit needs paired samples");
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let max_x = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_x = x.iter().copied().fold(f64::INFINITY, f64::min);

    if let Some(c) = fix_pole {
        if c <= max_x {
            return Err(Error::PoleInsideData {
                pole: c,
                max_delta: max_x,
            });
        }
        let (a, rss) = solve_a(&x, &y, c);
        return Ok(ReciprocalFit {
            a,
            c,
            rss,
            r2: r_squared(&y, rss),
            points: x.len(),
            pole_fixed: true,
        });
    }

    // search the offset u = c − max_x on a log scale
    let scale = (max_x - min_x).max(max_x.abs()).max(1e-12);
    let rss_at = |log_u: f64| solve_a(&x, &y, max_x + log_u.exp()).1;
    let (lo, hi) = ((scale * 1e-8).ln(), (scale * 1e4).ln());
    let steps = 600;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| rss_at(g)).collect();
    let best = (0..vals.len())
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(steps)];
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c1 = b - g * (b - a);
    let mut c2 = a + g * (b - a);
    let (mut f1, mut f2) = (rss_at(c1), rss_at(c2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = rss_at(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = rss_at(c2);
        }
    }
    let mut log_u = 0.5 * (a + b);
    if vals[best] < rss_at(log_u) {
        log_u = grid[best];
    }
    let c = max_x + log_u.exp();
    let (a, rss) = solve_a(&x, &y, c);
    Ok(ReciprocalFit {
        a,
        c,
        rss,
        r2: r_squared(&y, rss),
        points: x.len(),
        pole_fixed: false,
    })
}

/// Fit over the uncensored rows of a sweep, `τ_median` against Δ.
pub fn fit_rows(rows: &[SweepRow], fix_pole: Option<f64>) -> Result<ReciprocalFit> {
    let (x, y) = usable(rows, |r| r.delta);
    fit_reciprocal(&x, &y, fix_pole)
}

/// `τ ≈ b / λ2` against the predicted λ2, as `a / (0 − (−λ2))`.
pub fn fit_inverse_lambda2(rows: &[SweepRow]) -> Result<ReciprocalFit> {
    let (x, y) = usable(rows, |r| -r.lambda2_pred);
    fit_reciprocal(&x, &y, Some(0.0))
}

fn usable(rows: &[SweepRow], key: impl Fn(&SweepRow) -> f64) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .filter(|r| r.censored == 0 && r.tau_median.is_finite())
        .map(|r| (key(r), r.tau_median))
        .unzip()
}
