//! Synchronous scalar consensus `x(t+1) = P x(t)` with `P = D⁻¹A`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbm::Network;

/// Extra rounds the stopping criterion must keep holding before τε is declared.
pub const LOOKAHEAD: usize = 50;

/// Stationary distribution of the random walk, `π_i = d_i / 2|E|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
}

impl StationaryDist {
    /// `⟨x, π⟩`
    pub fn weighted_mean(&self, x: &[f64]) -> f64 {
        self.pi.iter().zip(x).map(|(p, v)| p * v).sum()
    }
}

pub fn stationary(net: &Network) -> Result<StationaryDist> {
    if let Some(node) = (0..net.n()).find(|&i| net.degree(i) == 0) {
        return Err(Error::IsolatedNode { node });
    }
    if !net.is_connected() {
        return Err(Error::Disconnected);
    }
    let total = 2.0 * net.edge_count() as f64;
    Ok(StationaryDist {
        pi: (0..net.n()).map(|i| net.degree(i) as f64 / total).collect(),
    })
}

/// One round of neighbor averaging, `y = P x`.
pub fn step(net: &Network, x: &[f64], y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate() {
        let nb = net.neighbors(i);
        let sum: f64 = nb.iter().map(|&j| x[j as usize]).sum();
        *yi = sum / nb.len() as f64;
    }
}

/// I.i.d. uniform `[0, 1)` initial values.
pub fn uniform_x0(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRun {
    pub x0: Vec<f64>,
    /// Consensus value `x̄ = ⟨x(0), π⟩`; the fixed point is `x̄·1`.
    pub x_star: f64,
    /// `None` when the criterion was not confirmed within `max_rounds`.
    pub tau_eps: Option<usize>,
    pub censored: bool,
    /// `‖x(t) − x*‖_∞ / ‖x(0) − x*‖_∞` for every simulated round.
    pub error_trace: Vec<f64>,
    pub epsilon: f64,
    /// Final state.
    pub x: Vec<f64>,
}

impl ConsensusRun {
    pub fn rounds(&self) -> usize {
        self.error_trace.len().saturating_sub(1)
    }

    /// Geometric decay rate of the error over `rounds` rounds ending `skip`
    /// rounds before the error first drops under `floor`.
    pub fn tail_rate(&self, floor: f64, skip: usize, rounds: usize) -> Option<f64> {
        let end = self.error_trace.iter().position(|&e| e < floor)?;
        let hi = end.checked_sub(skip)?;
        let lo = hi.checked_sub(rounds)?;
        let (a, b) = (self.error_trace[lo], self.error_trace[hi]);
        if a <= 0.0 || b <= 0.0 {
            return None;
        }
        Some((b / a).powf(1.0 / rounds as f64))
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "round,error")?;
        for (t, e) in self.error_trace.iter().enumerate() {
            writeln!(out, "{t},{e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs consensus from `x0` until the normalized sup-norm error stays within
/// `epsilon` for [`LOOKAHEAD`] further rounds, or `max_rounds` is reached.
///
/// The comparison allows for the floating-point resolution of the normalized
/// error, so an error that is exactly `ε` in exact arithmetic is accepted.
pub fn run(net: &Network, x0: &[f64], epsilon: f64, max_rounds: usize) -> Result<ConsensusRun> {
    if x0.len() != net.n() {
        return Err(Error::InvalidArgument(format!(
            "x0 has {} entries for {} nodes",
            x0.len(),
            net.n()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let pi = stationary(net)?;
    let x_star = pi.weighted_mean(x0);
    let sup_err = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max((v - x_star).abs()));
    let e0 = sup_err(x0);
    if e0 == 0.0 {
        return Ok(ConsensusRun {
            x0: x0.to_vec(),
            x_star,
            tau_eps: Some(0),
            censored: false,
            error_trace: vec![0.0],
            epsilon,
            x: x0.to_vec(),
        });
    }
    let scale = x0.iter().fold(x_star.abs(), |m, v| m.max(v.abs()));
    let tol = epsilon + 16.0 * f64::EPSILON * scale / e0;

    let mut x = x0.to_vec();
    let mut y = vec![0.0; x.len()];
    let mut trace = vec![1.0];
    // first round of the current run of rounds that satisfy the criterion
    let mut since = if 1.0 <= tol { Some(0) } else { None };
    let mut tau = None;
    for t in 1..=max_rounds {
        if let Some(s) = since {
            if t - 1 - s >= LOOKAHEAD {
                tau = Some(s);
                break;
            }
        }
        step(net, &x, &mut y);
        std::mem::swap(&mut x, &mut y);
        let e = sup_err(&x) / e0;
        trace.push(e);
        if e <= tol {
            since.get_or_insert(t);
        } else {
            since = None;
        }
    }
    if tau.is_none() {
        if let Some(s) = since {
            if trace.len() - 1 - s >= LOOKAHEAD {
                tau = Some(s);
            }
        }
    }
    Ok(ConsensusRun {
        x0: x0.to_vec(),
        x_star,
        tau_eps: tau,
        censored: tau.is_none(),
        error_trace: trace,
        epsilon,
        x,
    })
}

/// Upper bounds on τε from `|μ2|`: `|ln ε| / |ln |μ2||` and the first-order
/// `|ln ε| / (1 − |μ2|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauBound {
    pub exact: f64,
    pub first_order: f64,
}

pub fn tau_bound(mu2_abs: f64, epsilon: f64) -> Result<TauBound> {
    let m = mu2_abs.abs();
    if m >= 1.0 {
        return Err(Error::DivergentBound(m));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    let num = epsilon.ln().abs();
    if num == 0.0 {
        return Ok(TauBound {
            exact: 0.0,
            first_order: 0.0,
        });
    }
    Ok(TauBound {
        exact: if m == 0.0 { 0.0 } else { num / m.ln().abs() },
        first_order: num / (1.0 - m),
    })
}

/// Run summary as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub p_in: Option<f64>,
    pub p_out: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub tau_eps: Option<usize>,
    pub censored: bool,
    pub lambda2_empirical: f64,
    pub mu2_abs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_examples() {
        let pi = stationary(&Network::complete(4)).unwrap().pi;
        assert!(pi.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let pi = stationary(&Network::path(3)).unwrap().pi;
        assert_eq!(pi, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn stationary_rejects_disconnected() {
        let net = Network::from_edge_list(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(stationary(&net), Err(Error::Disconnected)));
        assert!(run(&net, &[0.0; 4], 1e-3, 10).is_err());
    }

    #[test]
    fn constant_start_is_converged() {
        let r = run(&Network::path(5), &[0.3; 5], 1e-10, 100).unwrap();
        assert_eq!(r.tau_eps, Some(0));
        assert!(!r.censored);
    }

    #[test]
    fn complete_graph_contracts_tenfold_per_round() {
        // μ2 = −1/10 on K_11, so the error is exactly 10^−t
        let mut x0 = vec![0.0; 11];
        x0[0] = 1.0;
        let r = run(&Network::complete(11), &x0, 1e-10, 1000).unwrap();
        assert_eq!(r.tau_eps, Some(10));
        for (t, e) in r.error_trace.iter().enumerate().take(12) {
            let expected = 10f64.powi(-(t as i32));
            assert!((e - expected).abs() <= 1e-15, "t={t} e={e}");
        }
    }

    #[test]
    fn single_edge_is_censored() {
        let r = run(&Network::path(2), &[0.0, 1.0], 1e-10, 500).unwrap();
        assert!(r.censored);
        assert_eq!(r.tau_eps, None);
        assert!(r.error_trace.iter().all(|&e| (e - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bounds() {
        let b = tau_bound(0.1, 1e-10).unwrap();
        assert!((b.exact - 10.0).abs() < 1e-12);
        let b = tau_bound(0.5, 1.0).unwrap();
        assert_eq!((b.exact, b.first_order), (0.0, 0.0));
        let mut prev = 0.0;
        for m in [0.5, 0.9, 0.99, 0.999] {
            let b = tau_bound(m, 1e-6).unwrap();
            assert!(b.exact > prev && b.first_order >= b.exact);
            prev = b.exact;
        }
        assert!(matches!(tau_bound(1.0, 0.1), Err(Error::DivergentBound(_))));
    }

    #[test]
    fn tau_is_first_round_of_the_final_good_run() {
        let net =
            Network::from_edge_list(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let r = run(&net, &uniform_x0(6, 3), 1e-4, 10_000).unwrap();
        let tau = r.tau_eps.unwrap();
        assert!(r.error_trace[tau..].iter().all(|&e| e <= 1e-4));
        assert!(tau == 0 || r.error_trace[tau - 1] > 1e-4);
        assert_eq!(r.rounds(), tau + LOOKAHEAD);
    }
}
