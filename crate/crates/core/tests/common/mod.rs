//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError};

use sbm_consensus::consensus;
use sbm_consensus::data::partition_indices;
use sbm_consensus::rmt::RmtPredictor;
use sbm_consensus::sbm::{SbmModel, TwoLevelProbs};
use sbm_consensus::spectra;

pub fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5b3c_2024),
        failure_persistence: None,
        ..Config::default()
    }
}

/// Block sizes plus a symmetric probability matrix.
pub fn block_model() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, u64)> {
    (1usize..=3).prop_flat_map(|k| {
        (
            prop::collection::vec(20usize..120, k),
            prop::collection::vec(0.02f64..0.8, k * (k + 1) / 2),
            any::<u64>(),
        )
    })
}

pub fn build(sizes: &[usize], upper: &[f64], seed: u64) -> SbmModel {
    let k = sizes.len();
    let mut m = DMatrix::zeros(k, k);
    let mut it = upper.iter();
    for r in 0..k {
        for s in r..k {
            let p = *it.next().unwrap();
            m[(r, s)] = p;
            m[(s, r)] = p;
        }
    }
    SbmModel::new(sizes.to_vec(), m, seed).unwrap()
}

/// Edge counts per block pair lie within 4σ of their binomial mean.
pub fn edge_statistics(sizes: &[usize], upper: &[f64], seed: u64) -> Result<(), TestCaseError> {
    let model = build(sizes, upper, seed);
    let net = model.sample();
    let k = sizes.len();
    let mem = net.membership();
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for (i, j) in net.edges() {
        let (r, s) = (mem[i].min(mem[j]), mem[i].max(mem[j]));
        counts[(r, s)] += 1.0;
    }
    for r in 0..k {
        for s in r..k {
            let trials = if r == s {
                (sizes[r] * (sizes[r] - 1) / 2) as f64
            } else {
                (sizes[r] * sizes[s]) as f64
            };
            let p = model.prob(r, s);
            let mean = trials * p;
            let sd = (trials * p * (1.0 - p)).sqrt();
            prop_assert!(
                (counts[(r, s)] - mean).abs() <= 4.0 * sd,
                "block ({r},{s}): {} edges, expected {mean} ± {sd}",
                counts[(r, s)]
            );
        }
    }
    Ok(())
}

/// The normalized Laplacian has unit diagonal, so its eigenvalues sum to n.
pub fn trace_identity(sizes: &[usize], upper: &[f64], seed: u64) -> Result<(), TestCaseError> {
    let net = build(sizes, upper, seed).sample();
    prop_assume!((0..net.n()).all(|i| net.degree(i) > 0));
    let s = spectra::normalized_laplacian_spectrum(&net).unwrap();
    let sum: f64 = s.eigenvalues.iter().sum();
    let n = net.n() as f64;
    prop_assert!((sum - n).abs() <= 1e-9 * n, "sum {sum} vs n {n}");
    prop_assert!(s
        .eigenvalues
        .iter()
        .all(|&l| (-1e-9..=2.0 + 1e-9).contains(&l)));
    Ok(())
}

/// `⟨x(t), π⟩` is invariant under `x ← P x`.
pub fn conservation(sizes: &[usize], upper: &[f64], seed: u64) -> Result<(), TestCaseError> {
    let net = build(sizes, upper, seed).sample();
    prop_assume!(net.is_connected());
    let pi = consensus::stationary(&net).unwrap();
    let mut x = consensus::uniform_x0(net.n(), seed);
    let m0 = pi.weighted_mean(&x);
    let mut y = vec![0.0; x.len()];
    for _ in 0..40 {
        consensus::step(&net, &x, &mut y);
        std::mem::swap(&mut x, &mut y);
        let m = pi.weighted_mean(&x);
        prop_assert!((m - m0).abs() <= 1e-10 * m0.abs(), "{m} vs {m0}");
    }
    Ok(())
}

/// Converged `Im t_r(λ + iη) ≤ 0` at every grid point.
pub fn resolvent_sign(sizes: &[usize], upper: &[f64], eta: f64) -> Result<(), TestCaseError> {
    let model = build(sizes, upper, 0);
    let p = RmtPredictor::new(&model).unwrap();
    let mut t0 = vec![Complex64::new(0.0, -1.0); sizes.len()];
    for i in 0..=40 {
        let z = Complex64::new(i as f64 * 0.05, eta);
        let st = p.fixed_point(z, &t0).unwrap();
        for t in &st.t {
            prop_assert!(t.im <= 0.0, "Im t = {} at z = {z}", t.im);
        }
        t0 = st.t;
    }
    Ok(())
}

pub fn two_block() -> impl Strategy<Value = (usize, usize, f64)> {
    (50usize..600, 50usize..600, 0.05f64..0.9)
}

/// Predicted λ2 is non-increasing in Δ.
pub fn lambda2_monotone(n1: usize, n2: usize, p_in: f64) -> Result<(), TestCaseError> {
    let mut prev = f64::INFINITY;
    for k in 0..8 {
        let delta = p_in * (1.0 - 1e-3) * k as f64 / 7.0;
        let model = SbmModel::two_level(
            vec![n1, n2],
            TwoLevelProbs::new(p_in, p_in - delta).unwrap(),
            0,
        )
        .unwrap();
        let l2 = RmtPredictor::new(&model)
            .unwrap()
            .predict_lambda2()
            .unwrap()
            .lambda2;
        prop_assert!(
            l2 <= prev + 1e-6,
            "λ2 rose from {prev} to {l2} at Δ = {delta}"
        );
        prev = l2;
    }
    Ok(())
}

/// Shards are disjoint, cover every index and differ in size by at most one.
pub fn partition_cover(n_examples: usize, n_nodes: usize, seed: u64) -> Result<(), TestCaseError> {
    let p = partition_indices(n_examples, n_nodes, seed).unwrap();
    prop_assert_eq!(p.shards.len(), n_nodes);
    let mut seen = vec![false; n_examples];
    for shard in &p.shards {
        for &i in shard {
            prop_assert!(!seen[i], "index {} assigned twice", i);
            seen[i] = true;
        }
    }
    prop_assert!(seen.iter().all(|&s| s));
    let sizes = p.sizes();
    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    prop_assert!(hi - lo <= 1);
    Ok(())
}
