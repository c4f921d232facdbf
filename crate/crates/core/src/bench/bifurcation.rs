//! Location of the spectral bifurcation Δ1*, where the nontrivial isolated
//! eigenvalue merges into the bulk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rmt::RmtPredictor;
use crate::sbm::{SbmModel, TwoLevelProbs};

/// Bisection tolerance on Δ.
pub const BISECTION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub p_out: f64,
    pub lambda2: f64,
    #[serde(rename = "lambdaL")]
    pub lambda_l: f64,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    /// Largest Δ found merged; the true crossing lies in `[delta1_star, upper]`.
    pub delta1_star: f64,
    pub upper: f64,
    pub curve: Vec<CurvePoint>,
}

fn point(sizes: &[usize], p_in: f64, delta: f64) -> Result<CurvePoint> {
    let p_out = (p_in - delta).max(0.0);
    let model = SbmModel::two_level(sizes.to_vec(), TwoLevelProbs::new(p_in, p_out)?, 0)?;
    let l2 = RmtPredictor::new(&model)?.predict_lambda2()?;
    Ok(CurvePoint {
        delta,
        p_out,
        lambda2: l2.lambda2,
        lambda_l: l2.lambda_l,
        merged: l2.merged,
    })
}

/// Predicted λ2 for each Δ (with `p_out = p_in − Δ`).
pub fn lambda2_curve(sizes: &[usize], p_in: f64, deltas: &[f64]) -> Result<Vec<CurvePoint>> {
    deltas.iter().map(|&d| point(sizes, p_in, d)).collect()
}

/// Largest merged Δ on an ascending grid, refined by bisection against the
/// next (unmerged) grid point.
pub fn detect_bifurcation(sizes: &[usize], p_in: f64, deltas: &[f64]) -> Result<Bifurcation> {
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "Δ grid must be strictly increasing".into(),
        ));
    }
    let curve = lambda2_curve(sizes, p_in, deltas)?;
    let last_merged = curve.iter().rposition(|p| p.merged);
    let (mut lo, mut hi) = match last_merged {
        Some(i) if i + 1 < curve.len() => (curve[i].delta, curve[i + 1].delta),
        Some(_) => return Err(Error::OutOfRange("merged over the whole Δ grid".into())),
        None => return Err(Error::OutOfRange("no merged point on the Δ grid".into())),
    };
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if point(sizes, p_in, mid)?.merged {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Bifurcation {
        delta1_star: lo,
        upper: hi,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_grid_is_out_of_range() {
        assert!(matches!(
            detect_bifurcation(&[700, 300], 0.1, &[0.0]),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        assert!(detect_bifurcation(&[700, 300], 0.1, &[0.05, 0.01]).is_err());
    }
}
