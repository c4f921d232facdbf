//! Experiment harness: Δ sweeps of consensus time, reciprocal fits and
//! bifurcation detection, plus the `sbmc` command line.

mod bifurcation;
pub mod cli;
mod fit;
pub mod stats;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bifurcation::{detect_bifurcation, lambda2_curve, Bifurcation, CurvePoint, BISECTION_TOL};
pub use fit::{fit_inverse_lambda2, fit_reciprocal, fit_rows, ReciprocalFit};

use crate::consensus;
use crate::data::{self, LabeledDataset, LoadOptions};
use crate::error::{Error, Result};
use crate::gossip::{self, GadgetConfig};
use crate::rmt::{GridSpec, RmtPredictor};
use crate::sbm::{SbmModel, TwoLevelProbs};
use crate::spectra;

/// Retries allowed when sampling a connected network.
pub const CONNECT_ATTEMPTS: usize = 100;

const X0_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Scalar,
    Gadget,
}

/// Flat key-value configuration shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub p_in: f64,
    /// Single `p_out` for one-off runs.
    pub p_out: Option<f64>,
    /// Explicit sweep grid; overrides the log-spaced range below.
    pub p_out_list: Option<Vec<f64>>,
    pub p_out_min: f64,
    /// Defaults to `p_in`.
    pub p_out_max: Option<f64>,
    pub p_out_points: usize,
    pub seeds_per_point: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub mode: Mode,
    /// Sparse text dataset for gadget mode; synthetic blobs when absent.
    pub dataset: Option<PathBuf>,
    pub target_class: Option<f64>,
    pub blob_examples: usize,
    pub blob_dim: usize,
    pub blob_margin: f64,
    pub test_fraction: f64,
    pub nu: f64,
    pub steps_per_round: usize,
    pub learning_rounds: Option<usize>,
    pub adopt: bool,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub eta: f64,
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = GadgetConfig::default();
        let grid = GridSpec::default();
        Self {
            sizes: vec![700, 300],
            p_in: 0.1,
            p_out: None,
            p_out_list: None,
            p_out_min: 1e-3,
            p_out_max: None,
            p_out_points: 12,
            seeds_per_point: 5,
            seed: 0,
            epsilon: 1e-10,
            max_rounds: 200_000,
            mode: Mode::Scalar,
            dataset: None,
            target_class: None,
            blob_examples: 10_000,
            blob_dim: 20,
            blob_margin: 1.0,
            test_fraction: 0.2,
            nu: g.nu,
            steps_per_round: g.steps_per_round,
            learning_rounds: g.learning_rounds,
            adopt: g.adopt,
            grid_lo: grid.lo,
            grid_hi: grid.hi,
            grid_points: grid.points,
            eta: grid.eta,
            threads: None,
        }
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be non-empty and positive".into()));
        }
        if !(self.p_in > 0.0 && self.p_in <= 1.0) {
            return Err(Error::Config(format!(
                "p_in = {} outside (0, 1]",
                self.p_in
            )));
        }
        if self.seeds_per_point == 0 {
            return Err(Error::Config("seeds_per_point must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        for p in self.p_out_values()? {
            if !(p > 0.0 && p <= self.p_in) {
                return Err(Error::Config(format!("p_out = {p} outside (0, p_in]")));
            }
        }
        Ok(())
    }

    /// Sweep grid in ascending `p_out` (descending Δ).
    pub fn p_out_values(&self) -> Result<Vec<f64>> {
        let mut v = match &self.p_out_list {
            Some(list) => list.clone(),
            None => {
                let hi = self.p_out_max.unwrap_or(self.p_in);
                if !(self.p_out_min > 0.0 && hi >= self.p_out_min) {
                    return Err(Error::Config("need 0 < p_out_min <= p_out_max".into()));
                }
                stats::log_space(self.p_out_min, hi, self.p_out_points)
            }
        };
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// The single `p_out` of one-off runs (falls back to the first grid value).
    pub fn single_p_out(&self) -> Result<f64> {
        match self.p_out {
            Some(p) => Ok(p),
            None => self
                .p_out_values()?
                .first()
                .copied()
                .ok_or_else(|| Error::Config("no p_out given".into())),
        }
    }

    pub fn model(&self, p_out: f64, seed: u64) -> Result<SbmModel> {
        SbmModel::two_level(
            self.sizes.clone(),
            TwoLevelProbs::new(self.p_in, p_out)?,
            seed,
        )
    }

    pub fn gadget(&self, seed: u64) -> GadgetConfig {
        GadgetConfig {
            nu: self.nu,
            epsilon: self.epsilon,
            max_rounds: self.max_rounds,
            steps_per_round: self.steps_per_round,
            learning_rounds: self.learning_rounds,
            adopt: self.adopt,
            seed,
            eval_every: 50,
            ..GadgetConfig::default()
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            lo: self.grid_lo,
            hi: self.grid_hi,
            points: self.grid_points,
            eta: self.eta,
        }
    }

    /// Train/test data for gadget runs.
    pub fn gadget_data(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let ds = match &self.dataset {
            Some(path) => {
                let opts = LoadOptions {
                    target_class: self.target_class,
                    ..LoadOptions::default()
                };
                data::load_sparse_text(path, &opts)?
            }
            None => data::make_blobs(
                self.blob_examples,
                self.blob_dim,
                self.blob_margin,
                self.seed,
            )?,
        };
        Ok(ds.split(self.test_fraction, self.seed))
    }
}

/// Seed of sample `s` at sweep point `k`.
pub fn point_seed(base: u64, k: usize, s: usize) -> u64 {
    base.wrapping_add(1_000_003u64.wrapping_mul(k as u64))
        .wrapping_add(s as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub p_out: f64,
    /// Median over uncensored runs (NaN if none).
    pub tau_median: f64,
    pub tau_iqr: f64,
    pub lambda2_emp: f64,
    pub lambda2_pred: f64,
    #[serde(rename = "lambdaL")]
    pub lambda_l: f64,
    /// Runs that were censored or failed.
    pub censored: usize,
    #[serde(default)]
    pub runs: usize,
    #[serde(default)]
    pub accuracy_mean: Option<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub errors: Vec<String>,
}

impl SweepRow {
    fn csv_fields(&self) -> [String; 8] {
        [
            self.delta.to_string(),
            self.p_out.to_string(),
            self.tau_median.to_string(),
            self.tau_iqr.to_string(),
            self.lambda2_emp.to_string(),
            self.lambda2_pred.to_string(),
            self.lambda_l.to_string(),
            self.censored.to_string(),
        ]
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "delta",
    "p_out",
    "tau_median",
    "tau_iqr",
    "lambda2_emp",
    "lambda2_pred",
    "lambdaL",
    "censored",
];

/// Streams rows to a CSV file, flushing after each row.
pub struct RowWriter {
    inner: csv::Writer<File>,
}

impl RowWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(CSV_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &SweepRow) -> Result<()> {
        self.inner.write_record(row.csv_fields())?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let idx: Vec<usize> = CSV_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec.get(idx[j])
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: k + 2,
                    message: format!("bad {} value", CSV_HEADER[j]),
                })
        };
        rows.push(SweepRow {
            delta: num(0)?,
            p_out: num(1)?,
            tau_median: num(2)?,
            tau_iqr: num(3)?,
            lambda2_emp: num(4)?,
            lambda2_pred: num(5)?,
            lambda_l: num(6)?,
            censored: num(7)? as usize,
            runs: 0,
            accuracy_mean: None,
            seeds: Vec::new(),
            errors: Vec::new(),
        });
    }
    Ok(rows)
}

/// JSON sidecar of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

fn run_point(
    cfg: &SweepConfig,
    k: usize,
    p_out: f64,
    gadget_data: Option<&(LabeledDataset, LabeledDataset)>,
) -> SweepRow {
    let mut errors = Vec::new();
    let seeds: Vec<u64> = (0..cfg.seeds_per_point)
        .map(|s| point_seed(cfg.seed, k, s))
        .collect();
    let mut row = SweepRow {
        delta: cfg.p_in - p_out,
        p_out,
        tau_median: f64::NAN,
        tau_iqr: f64::NAN,
        lambda2_emp: f64::NAN,
        lambda2_pred: f64::NAN,
        lambda_l: f64::NAN,
        censored: 0,
        runs: seeds.len(),
        accuracy_mean: None,
        seeds: seeds.clone(),
        errors: Vec::new(),
    };
    let model = match cfg.model(p_out, cfg.seed) {
        Ok(m) => m,
        Err(e) => {
            row.censored = seeds.len();
            row.errors.push(e.to_string());
            return row;
        }
    };
    match RmtPredictor::new(&model).and_then(|p| p.predict_lambda2()) {
        Ok(pred) => {
            row.lambda2_pred = pred.lambda2;
            row.lambda_l = pred.lambda_l;
        }
        Err(e) => errors.push(format!("predict: {e}")),
    }

    let mut taus = Vec::new();
    let mut lambdas = Vec::new();
    let mut accs = Vec::new();
    let mut censored = 0;
    for &seed in &seeds {
        let net = match model.with_seed(seed).sample_connected(CONNECT_ATTEMPTS) {
            Ok(n) => n,
            Err(e) => {
                censored += 1;
                errors.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        match spectra::lambda2(&net) {
            Ok(l) => lambdas.push(l),
            Err(e) => errors.push(format!("seed {seed}: spectrum: {e}")),
        }
        let tau = match (cfg.mode, gadget_data) {
            (Mode::Gadget, Some((train, test))) => data::partition_equal(train, net.n(), seed)
                .and_then(|part| gossip::run_gadget_on(&net, train, test, &part, &cfg.gadget(seed)))
                .map(|run| {
                    accs.push(run.test_accuracy);
                    run.rounds_to_consensus
                }),
            (Mode::Gadget, None) => Err(Error::Config("gadget mode without data".into())),
            (Mode::Scalar, _) => {
                let x0 = consensus::uniform_x0(net.n(), seed ^ X0_SALT);
                consensus::run(&net, &x0, cfg.epsilon, cfg.max_rounds).map(|r| r.tau_eps)
            }
        };
        match tau {
            Ok(Some(t)) => taus.push(t as f64),
            Ok(None) => censored += 1,
            Err(e) => {
                censored += 1;
                errors.push(format!("seed {seed}: {e}"));
            }
        }
    }
    row.tau_median = stats::median(&taus);
    row.tau_iqr = stats::iqr(&taus);
    row.lambda2_emp = stats::mean(&lambdas);
    row.censored = censored;
    row.accuracy_mean = (!accs.is_empty()).then(|| stats::mean(&accs));
    row.errors = errors;
    row
}

/// Runs the sweep, handing each row to `on_row` in grid order as soon as it
/// and all rows before it are done. Points run in parallel batches.
pub fn sweep(
    cfg: &SweepConfig,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let p_outs = cfg.p_out_values()?;
    let data = match cfg.mode {
        Mode::Gadget => Some(cfg.gadget_data()?),
        Mode::Scalar => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let batch = pool.current_num_threads().max(1);
    let mut rows = Vec::with_capacity(p_outs.len());
    for (b, chunk) in p_outs.chunks(batch).enumerate() {
        let done: Vec<SweepRow> = pool.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .map(|(j, &p)| run_point(cfg, b * batch + j, p, data.as_ref()))
                .collect()
        });
        for row in done {
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Sweep writing `rows.csv` (streamed) and `rows.json` into `out`.
pub fn sweep_to_dir(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out)?;
    let mut writer = RowWriter::create(&out.join("rows.csv"))?;
    let rows = sweep(cfg, |row| writer.write(row))?;
    let record = SweepRecord {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg.clone(),
        rows: rows.clone(),
    };
    write_json(&out.join("rows.json"), &record)?;
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
