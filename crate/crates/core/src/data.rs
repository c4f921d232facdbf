//! Labeled sparse datasets: text ingestion, horizontal partitioning across
//! nodes and synthetic separable blobs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds from unsorted pairs; rejects duplicate indices.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(format!(
                "duplicate feature index {}",
                w[0].0
            )));
        }
        Ok(Self {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let (indices, values) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        Self { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| w[i as usize] * v)
            .sum()
    }

    /// `w += a x`
    pub fn axpy(&self, a: f64, w: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            w[i as usize] += a * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: SparseVector,
    /// +1 or −1
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub d: usize,
    pub examples: Vec<Example>,
    pub name: String,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Fraction of examples classified correctly by `sign(⟨w, x⟩)` (ties count as +1).
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .examples
            .iter()
            .filter(|e| {
                let s = if e.x.dot(w) >= 0.0 { 1.0 } else { -1.0 };
                s == e.y
            })
            .count();
        hits as f64 / self.len() as f64
    }

    /// `(ν/2)‖w‖² + mean hinge loss`.
    pub fn objective(&self, w: &[f64], nu: f64) -> f64 {
        let reg = 0.5 * nu * w.iter().map(|v| v * v).sum::<f64>();
        if self.is_empty() {
            return reg;
        }
        let loss: f64 = self
            .examples
            .iter()
            .map(|e| (1.0 - e.y * e.x.dot(w)).max(0.0))
            .sum();
        reg + loss / self.len() as f64
    }

    pub fn subset(&self, idx: &[usize], name: &str) -> Self {
        Self {
            d: self.d,
            examples: idx.iter().map(|&i| self.examples[i].clone()).collect(),
            name: name.to_string(),
        }
    }

    /// Shuffled split into `(train, test)` with `round(test_fraction·len)` test examples.
    pub fn split(&self, test_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((self.len() as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
        let (test, train) = idx.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (
            self.subset(&train, &format!("{}/train", self.name)),
            self.subset(&test, &format!("{}/test", self.name)),
        )
    }

    /// Dense copies of all feature vectors.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.examples
            .iter()
            .map(|e| {
                let mut row = vec![0.0; self.d];
                e.x.axpy(1.0, &mut row);
                row
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexBase {
    Zero,
    One,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// `None` autodetects: zero-based if any index 0 appears, else one-based.
    pub index_base: Option<IndexBase>,
    /// One-vs-rest: this label becomes +1, every other label −1.
    pub target_class: Option<f64>,
    /// Fixed feature dimension; indices beyond it are rejected.
    pub dim: Option<usize>,
    /// Append a constant-1 feature after the last dimension.
    pub append_bias: bool,
}

struct RawLine {
    line: usize,
    label: f64,
    pairs: Vec<(u64, f64)>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_line(path: &Path, line: usize, text: &str) -> Result<Option<RawLine>> {
    let text = text.split('#').next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let mut tokens = text.split_whitespace();
    let label_tok = tokens.next().unwrap_or_default();
    let label: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad label '{label_tok}'")))?;
    if !label.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite label '{label_tok}'"),
        ));
    }
    let mut pairs = Vec::new();
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(path, line, format!("expected idx:val, got '{tok}'")))?;
        let i: u64 = i
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad index in '{tok}'")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad value in '{tok}'")))?;
        if !v.is_finite() {
            return Err(parse_err(
                path,
                line,
                format!("non-finite value in '{tok}'"),
            ));
        }
        pairs.push((i, v));
    }
    Ok(Some(RawLine { line, label, pairs }))
}

fn label_map(path: &Path, raw: &[RawLine], target: Option<f64>) -> Result<impl Fn(f64) -> f64> {
    let distinct: BTreeSet<u64> = raw.iter().map(|r| r.label.to_bits()).collect();
    let labels: Vec<f64> = distinct.iter().map(|&b| f64::from_bits(b)).collect();
    let mode = match target {
        Some(c) => Some(c),
        None => {
            let pm = labels.iter().all(|&l| l == 1.0 || l == -1.0);
            let zo = labels.iter().all(|&l| l == 0.0 || l == 1.0);
            if !(pm || zo) {
                let bad = raw
                    .iter()
                    .find(|r| !(r.label == 1.0 || r.label == -1.0 || r.label == 0.0))
                    .or_else(|| raw.last())
                    .map(|r| r.line)
                    .unwrap_or(0);
                return Err(parse_err(
                    path,
                    bad,
                    format!("labels {labels:?} are not binary; set a target class"),
                ));
            }
            None
        }
    };
    Ok(move |l: f64| match mode {
        Some(c) => {
            if l == c {
                1.0
            } else {
                -1.0
            }
        }
        None => {
            if l == 1.0 {
                1.0
            } else {
                -1.0
            }
        }
    })
}

/// Reads `label idx:val idx:val ...` lines. Blank lines and `#` comments are
/// skipped; absent indices are zeros.
pub fn load_sparse_text(path: &Path, opts: &LoadOptions) -> Result<LabeledDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut raw = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        if let Some(r) = parse_line(path, k + 1, &line?)? {
            raw.push(r);
        }
    }
    let base = opts.index_base.unwrap_or_else(|| {
        if raw.iter().any(|r| r.pairs.iter().any(|p| p.0 == 0)) {
            IndexBase::Zero
        } else {
            IndexBase::One
        }
    });
    let map = label_map(path, &raw, opts.target_class)?;
    let mut max_dim = 0usize;
    let mut examples = Vec::with_capacity(raw.len());
    for r in raw {
        let mut pairs = Vec::with_capacity(r.pairs.len());
        for (i, v) in r.pairs {
            let i = match base {
                IndexBase::Zero => i,
                IndexBase::One => i
                    .checked_sub(1)
                    .ok_or_else(|| parse_err(path, r.line, "index 0 in one-based file"))?,
            };
            if i >= u32::MAX as u64 || opts.dim.is_some_and(|d| i as usize >= d) {
                return Err(parse_err(
                    path,
                    r.line,
                    format!("feature index {i} out of range"),
                ));
            }
            max_dim = max_dim.max(i as usize + 1);
            pairs.push((i as u32, v));
        }
        let x =
            SparseVector::from_pairs(pairs).map_err(|e| parse_err(path, r.line, e.to_string()))?;
        examples.push(Example { x, y: map(r.label) });
    }
    let mut d = opts.dim.unwrap_or(max_dim);
    if opts.append_bias {
        for e in &mut examples {
            e.x.indices.push(d as u32);
            e.x.values.push(1.0);
        }
        d += 1;
    }
    Ok(LabeledDataset {
        d,
        examples,
        name: path.display().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub d: usize,
    pub examples: usize,
    pub index_base: IndexBase,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes one-based sparse text plus a `<path>.json` metadata sidecar.
pub fn write_sparse_text(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in &ds.examples {
        write!(out, "{}", if e.y > 0.0 { "+1" } else { "-1" })?;
        for (i, v) in e.x.indices.iter().zip(&e.x.values) {
            write!(out, " {}:{v}", i + 1)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    let meta = DatasetMeta {
        name: ds.name.clone(),
        d: ds.d,
        examples: ds.len(),
        index_base: IndexBase::One,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(sidecar_path(path))?), &meta)?;
    Ok(())
}

/// Loads a file written by [`write_sparse_text`], taking dimension, index
/// base and name from its sidecar.
pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let meta: DatasetMeta =
        serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let opts = LoadOptions {
        index_base: Some(meta.index_base),
        dim: Some(meta.d),
        ..LoadOptions::default()
    };
    let mut ds = load_sparse_text(path, &opts)?;
    ds.name = meta.name;
    Ok(ds)
}

/// Disjoint shards of example indices, one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn has_empty(&self) -> bool {
        self.shards.iter().any(|s| s.is_empty())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.len()).collect()
    }
}

/// Shuffled round-robin assignment of `n_examples` indices to `n_nodes` shards.
/// Shard sizes differ by at most one; each shard is sorted.
pub fn partition_indices(n_examples: usize, n_nodes: usize, seed: u64) -> Result<Partition> {
    if n_nodes == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    let mut idx: Vec<usize> = (0..n_examples).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut shards = vec![Vec::with_capacity(n_examples / n_nodes + 1); n_nodes];
    for (k, i) in idx.into_iter().enumerate() {
        shards[k % n_nodes].push(i);
    }
    shards.iter_mut().for_each(|s| s.sort_unstable());
    Ok(Partition { shards })
}

pub fn partition_equal(ds: &LabeledDataset, n_nodes: usize, seed: u64) -> Result<Partition> {
    partition_indices(ds.len(), n_nodes, seed)
}

/// Spread of each blob along the separating direction.
pub const BLOB_RADIUS: f64 = 3.0;

/// Two unit-variance Gaussian clouds centred at `±margin·u` for a random unit
/// normal `u` of a hyperplane through the origin. Each point's offset along
/// `u` is clipped to [`BLOB_RADIUS`], so the classes are linearly separable
/// whenever `margin > BLOB_RADIUS`. Labels alternate `+1, −1, ...`.
pub fn make_blobs(n_examples: usize, d: usize, margin: f64, seed: u64) -> Result<LabeledDataset> {
    if margin.is_nan() || margin <= 0.0 || d == 0 {
        return Err(Error::InvalidArgument(
            "make_blobs needs margin > 0 and d ≥ 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
    let examples = (0..n_examples)
        .map(|k| {
            let y = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let along: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
            let clipped = along.clamp(-BLOB_RADIUS, BLOB_RADIUS);
            for (xi, ui) in x.iter_mut().zip(&u) {
                *xi += (clipped - along + y * margin) * ui;
            }
            Example {
                x: SparseVector::from_dense(&x),
                y,
            }
        })
        .collect();
    Ok(LabeledDataset {
        d,
        examples,
        name: format!("blobs(n={n_examples},d={d},margin={margin},seed={seed})"),
    })
}
