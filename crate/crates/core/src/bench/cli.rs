//! `sbmc` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{
    detect_bifurcation, fit_inverse_lambda2, fit_rows, read_rows_csv, sweep_to_dir, write_json,
    Mode, SweepConfig, CONNECT_ATTEMPTS,
};
use crate::consensus::{self, ConsensusSummary};
use crate::data;
use crate::error::Result;
use crate::gossip::{self, GadgetSummary};
use crate::rmt::RmtPredictor;
use crate::sbm::Network;
use crate::spectra;

#[derive(Debug, Parser)]
#[command(
    name = "sbmc",
    version,
    about = "SBM spectra, consensus and gossip-SVM workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON config; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Block sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Scalar,
    Gadget,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a network and write it as JSON and an edge list.
    Sample(Common),
    /// Empirical normalized-Laplacian spectrum.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Read the network from JSON instead of sampling one.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Random-matrix prediction of the spectrum.
    Predict(Common),
    /// Scalar consensus on a sampled network.
    Consensus(Common),
    /// Decentralized SVM training on a sampled network.
    Gadget {
        #[command(flatten)]
        common: Common,
        /// Sparse text dataset (synthetic blobs when omitted).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        target_class: Option<f64>,
    },
    /// Δ sweep of convergence time and λ2.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Reciprocal fit of τ against Δ (or against predicted λ2 with --inset).
    Fit {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        fix_pole: Option<f64>,
        #[arg(long)]
        inset: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Locate the spectral bifurcation Δ1* over the configured grid.
    Bifurcation(Common),
}

impl Common {
    fn resolve(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(p) => SweepConfig::load(p)?,
            None => SweepConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = &self.sizes {
            cfg.sizes = s.clone();
        }
        if let Some(p) = self.p_in {
            cfg.p_in = p;
        }
        if let Some(p) = self.p_out {
            cfg.p_out = Some(p);
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// status: 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn sample(cfg: &SweepConfig) -> Result<Network> {
    let model = cfg.model(cfg.single_p_out()?, cfg.seed)?;
    model.sample_connected(CONNECT_ATTEMPTS)
}

#[derive(Serialize)]
struct SpectrumSummary {
    n: usize,
    lambda2: f64,
    mu2_abs: f64,
    mu2_positive: bool,
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Sample(c) => {
            let cfg = c.resolve()?;
            prepare(&c.out)?;
            let net = sample(&cfg)?;
            write_json(&c.out.join("network.json"), &net)?;
            net.write_edge_list(&c.out.join("edges.txt"))?;
            println!("n={} edges={}", net.n(), net.edge_count());
        }
        Command::Spectrum { common: c, network } => {
            let net = match network {
                Some(p) => super::read_json::<Network>(&p)?,
                None => sample(&c.resolve()?)?,
            };
            prepare(&c.out)?;
            let s = spectra::normalized_laplacian_spectrum(&net)?;
            s.write_csv(&c.out.join("eigenvalues.csv"))?;
            let summary = SpectrumSummary {
                n: net.n(),
                lambda2: s.lambda2,
                mu2_abs: s.mu2_abs,
                mu2_positive: s.mu2_positive,
            };
            write_json(&c.out.join("spectrum.json"), &summary)?;
            println!("lambda2={} mu2_abs={}", s.lambda2, s.mu2_abs);
        }
        Command::Predict(c) => {
            let cfg = c.resolve()?;
            prepare(&c.out)?;
            let model = cfg.model(cfg.single_p_out()?, cfg.seed)?;
            let pred = RmtPredictor::new(&model)?.predict(&cfg.grid())?;
            pred.write_json(&c.out.join("prediction.json"))?;
            pred.write_csv(&c.out.join("density.csv"))?;
            println!(
                "lambdaL={} lambdaR={} isolated={:?} predicted_lambda2={}",
                pred.lambda_l, pred.lambda_r, pred.isolated, pred.predicted_lambda2
            );
        }
        Command::Consensus(c) => {
            let cfg = c.resolve()?;
            prepare(&c.out)?;
            let p_out = cfg.single_p_out()?;
            let net = sample(&cfg)?;
            let spec = spectra::normalized_laplacian_spectrum(&net)?;
            let x0 = consensus::uniform_x0(net.n(), cfg.seed);
            let run = consensus::run(&net, &x0, cfg.epsilon, cfg.max_rounds)?;
            run.write_trace_csv(&c.out.join("trace.csv"))?;
            let summary = ConsensusSummary {
                n: net.n(),
                k: net.k(),
                p_in: Some(cfg.p_in),
                p_out: Some(p_out),
                delta: Some(cfg.p_in - p_out),
                epsilon: cfg.epsilon,
                tau_eps: run.tau_eps,
                censored: run.censored,
                lambda2_empirical: spec.lambda2,
                mu2_abs: spec.mu2_abs,
            };
            write_json(&c.out.join("consensus.json"), &summary)?;
            println!("tau_eps={:?} censored={}", run.tau_eps, run.censored);
        }
        Command::Gadget {
            common: c,
            data,
            target_class,
        } => {
            let mut cfg = c.resolve()?;
            if data.is_some() {
                cfg.dataset = data;
            }
            if target_class.is_some() {
                cfg.target_class = target_class;
            }
            prepare(&c.out)?;
            let (train, test) = cfg.gadget_data()?;
            let net = sample(&cfg)?;
            let part = data::partition_equal(&train, net.n(), cfg.seed)?;
            let gcfg = cfg.gadget(cfg.seed);
            let run = gossip::run_gadget_on(&net, &train, &test, &part, &gcfg)?;
            run.write_trace_csv(&c.out.join("gadget_trace.csv"))?;
            let summary = GadgetSummary {
                config: gcfg,
                rounds_to_consensus: run.rounds_to_consensus,
                censored: run.censored,
                final_accuracy: run.test_accuracy,
                final_objective: run.final_objective,
            };
            write_json(&c.out.join("gadget.json"), &summary)?;
            println!(
                "rounds_to_consensus={:?} accuracy={} objective={}",
                run.rounds_to_consensus, run.test_accuracy, run.final_objective
            );
        }
        Command::Sweep { common: c, mode } => {
            let mut cfg = c.resolve()?;
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Scalar => Mode::Scalar,
                    ModeArg::Gadget => Mode::Gadget,
                };
            }
            let rows = sweep_to_dir(&cfg, &c.out)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                c.out.join("rows.csv").display()
            );
        }
        Command::Fit {
            rows,
            fix_pole,
            inset,
            out,
        } => {
            let rows = read_rows_csv(&rows)?;
            prepare(&out)?;
            let fit = if inset {
                fit_inverse_lambda2(&rows)?
            } else {
                fit_rows(&rows, fix_pole)?
            };
            write_json(&out.join("fit.json"), &fit)?;
            println!("a={} c={} r2={}", fit.a, fit.c, fit.r2);
        }
        Command::Bifurcation(c) => {
            let cfg = c.resolve()?;
            prepare(&c.out)?;
            let mut deltas: Vec<f64> = cfg.p_out_values()?.iter().map(|p| cfg.p_in - p).collect();
            deltas.sort_by(f64::total_cmp);
            deltas.dedup();
            let b = detect_bifurcation(&cfg.sizes, cfg.p_in, &deltas)?;
            write_json(&c.out.join("bifurcation.json"), &b)?;
            println!("delta1_star={}", b.delta1_star);
        }
    }
    Ok(())
}
