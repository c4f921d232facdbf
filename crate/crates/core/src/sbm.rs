//! Stochastic block models: definition, sampling, and blockwise moment kernels.
//!
//! Nodes of a sampled [`Network`] are numbered contiguously by community, so
//! block `r` owns the index range `offset_r .. offset_r + n_r`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Within/between community edge probabilities of a two-level SBM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelProbs {
    pub p_in: f64,
    pub p_out: f64,
}

impl TwoLevelProbs {
    pub fn new(p_in: f64, p_out: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_in) {
            return Err(Error::InvalidModel(format!("p_in = {p_in} outside [0, 1]")));
        }
        if !(0.0..=p_in).contains(&p_out) {
            return Err(Error::InvalidModel(format!(
                "p_out = {p_out} outside [0, p_in = {p_in}]"
            )));
        }
        Ok(Self { p_in, p_out })
    }

    /// Community prevalence `p_in - p_out`.
    pub fn delta(&self) -> f64 {
        self.p_in - self.p_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct SbmModel {
    sizes: Vec<usize>,
    probs: DMatrix<f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    sizes: Vec<usize>,
    probs: Vec<Vec<f64>>,
    seed: u64,
}

impl TryFrom<RawModel> for SbmModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let k = raw.probs.len();
        if raw.probs.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel(
                "probability matrix is not square".into(),
            ));
        }
        let probs = DMatrix::from_fn(k, k, |r, s| raw.probs[r][s]);
        SbmModel::new(raw.sizes, probs, raw.seed)
    }
}

impl From<SbmModel> for RawModel {
    fn from(m: SbmModel) -> Self {
        let k = m.k();
        RawModel {
            probs: (0..k)
                .map(|r| (0..k).map(|s| m.probs[(r, s)]).collect())
                .collect(),
            sizes: m.sizes,
            seed: m.seed,
        }
    }
}

impl SbmModel {
    pub fn new(sizes: Vec<usize>, probs: DMatrix<f64>, seed: u64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidModel("no communities".into()));
        }
        if let Some(r) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidModel(format!("community {r} is empty")));
        }
        let k = sizes.len();
        if probs.nrows() != k || probs.ncols() != k {
            return Err(Error::InvalidModel(format!(
                "probability matrix is {}x{}, expected {k}x{k}",
                probs.nrows(),
                probs.ncols()
            )));
        }
        for r in 0..k {
            for s in 0..k {
                let p = probs[(r, s)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!(
                        "Pi[{r}][{s}] = {p} outside [0, 1]"
                    )));
                }
                if p != probs[(s, r)] {
                    return Err(Error::InvalidModel(format!(
                        "Pi is not symmetric at ({r}, {s})"
                    )));
                }
            }
        }
        Ok(Self { sizes, probs, seed })
    }

    /// Two-level model: `p_in` on the diagonal of Π, `p_out` elsewhere.
    pub fn two_level(sizes: Vec<usize>, probs: TwoLevelProbs, seed: u64) -> Result<Self> {
        let k = sizes.len();
        let pi = DMatrix::from_fn(k, k, |r, s| if r == s { probs.p_in } else { probs.p_out });
        Self::new(sizes, pi, seed)
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, r: usize, s: usize) -> f64 {
        self.probs[(r, s)]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Community index of every node, nodes ordered by block.
    pub fn membership(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(r, &n)| std::iter::repeat_n(r, n))
            .collect()
    }

    /// Samples every unordered pair once with probability `Π[c_i][c_j]`.
    pub fn sample(&self) -> Network {
        let membership = self.membership();
        let n = membership.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            let ci = membership[i];
            for j in (i + 1)..n {
                let p = self.probs[(ci, membership[j])];
                if rng.random::<f64>() < p {
                    adj[i].push(j as u32);
                    adj[j].push(i as u32);
                }
            }
        }
        Network {
            adj,
            membership,
            sizes: self.sizes.clone(),
            seed: Some(self.seed),
        }
    }

    /// Samples with seeds `seed, seed + 1, ...` until a connected network appears.
    pub fn sample_connected(&self, max_attempts: usize) -> Result<Network> {
        for attempt in 0..max_attempts.max(1) {
            let net = self
                .with_seed(self.seed.wrapping_add(attempt as u64))
                .sample();
            if net.is_connected() {
                return Ok(net);
            }
        }
        Err(Error::Disconnected)
    }

    /// Expected degree of a node in each block: `D̂_r = Σ_s n_s Π_rs`.
    pub fn expected_degrees(&self) -> DVector<f64> {
        let k = self.k();
        DVector::from_fn(k, |r, _| {
            (0..k)
                .map(|s| self.sizes[s] as f64 * self.probs[(r, s)])
                .sum()
        })
    }

    /// Normalized-Laplacian kernels `E = D̂^{-1/2} Π D̂^{-1/2}` and
    /// `V = D̂^{-1} [Π∘(1−Π)] D̂^{-1}`.
    pub fn block_matrices(&self) -> Result<BlockMatrices> {
        let dhat = self.expected_degrees();
        if let Some(block) = dhat.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroExpectedDegree { block });
        }
        let k = self.k();
        let expectation =
            DMatrix::from_fn(k, k, |r, s| self.probs[(r, s)] / (dhat[r] * dhat[s]).sqrt());
        let variance = DMatrix::from_fn(k, k, |r, s| {
            let p = self.probs[(r, s)];
            p * (1.0 - p) / (dhat[r] * dhat[s])
        });
        Ok(BlockMatrices {
            expectation,
            variance,
            expected_degree: dhat,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrices {
    pub expectation: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    pub expected_degree: DVector<f64>,
}

/// Undirected simple graph with community labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkJson", into = "NetworkJson")]
pub struct Network {
    adj: Vec<Vec<u32>>,
    membership: Vec<usize>,
    sizes: Vec<usize>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    n: usize,
    sizes: Vec<usize>,
    membership: Vec<usize>,
    seed: Option<u64>,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<NetworkJson> for Network {
    type Error = Error;

    fn try_from(raw: NetworkJson) -> Result<Self> {
        if raw.membership.len() != raw.n {
            return Err(Error::InvalidArgument(format!(
                "membership has {} entries for n = {}",
                raw.membership.len(),
                raw.n
            )));
        }
        let mut net = Network::from_edges(raw.sizes, raw.edges)?;
        if net.membership != raw.membership {
            return Err(Error::InvalidArgument(
                "membership is not ordered by block sizes".into(),
            ));
        }
        net.seed = raw.seed;
        Ok(net)
    }
}

impl From<Network> for NetworkJson {
    fn from(net: Network) -> Self {
        NetworkJson {
            n: net.n(),
            edges: net.edges().collect(),
            sizes: net.sizes,
            membership: net.membership,
            seed: net.seed,
        }
    }
}

impl Network {
    /// Builds a network over `Σ sizes` nodes, rejecting self-edges, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges<I>(sizes: Vec<usize>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let membership: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(r, &n)| std::iter::repeat_n(r, n))
            .collect();
        let n = membership.len();
        let mut adj = vec![Vec::new(); n];
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-edge at node {i}")));
            }
            adj[i].push(j as u32);
            adj[j].push(i as u32);
        }
        for (i, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge at node {i}"
                )));
            }
        }
        Ok(Self {
            adj,
            membership,
            sizes,
            seed: None,
        })
    }

    /// Single-community network from an edge list.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(vec![n], edges.iter().copied())
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Self::from_edges(vec![n], edges).expect("complete graph is simple")
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(vec![n], (1..n).map(|i| (i - 1, i))).expect("path graph is simple")
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adj[i] {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for (i, j) in self.edges() {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Writes the plain-text edge list: `n K sizes...` then one `i j` per line.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "{} {}", self.n(), self.k())?;
        for s in &self.sizes {
            write!(out, " {s}")?;
        }
        writeln!(out)?;
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header?;
        let fields: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        if fields.len() < 2 {
            return Err(parse_err(1, "header needs `n K sizes...`".into()));
        }
        let (n, k) = (fields[0], fields[1]);
        let sizes = fields[2..].to_vec();
        if sizes.len() != k || sizes.iter().sum::<usize>() != n {
            return Err(parse_err(
                1,
                format!("sizes {sizes:?} inconsistent with n = {n}, K = {k}"),
            ));
        }
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(parse_err(idx + 1, format!("expected `i j`, got {line:?}"))),
            }
        }
        Network::from_edges(sizes, edges)
    }
}
