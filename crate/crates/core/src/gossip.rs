//! GADGET: per-node Pegasos steps on a local shard interleaved with Push Sum
//! mixing of the weight vectors, run until all local models are ε-close.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{partition_equal, Example, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::sbm::{Network, SbmModel};

#[derive(Debug, Clone)]
pub struct NodeState {
    /// Working model.
    pub w: Vec<f64>,
    /// Push Sum sum.
    pub s: Vec<f64>,
    /// Push Sum weight.
    pub psw: f64,
    /// Range into the node's reordered shard (see [`Shards`]).
    pub local_data: Range<usize>,
    /// Local Pegasos steps taken so far.
    pub t: u64,
    pub rng: ChaCha8Rng,
}

impl NodeState {
    pub fn new(d: usize, local_data: Range<usize>, seed: u64, node: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node as u64);
        Self {
            w: vec![0.0; d],
            s: vec![0.0; d],
            psw: 1.0,
            local_data,
            t: 0,
            rng,
        }
    }

    /// Push Sum estimate `s / psw`.
    pub fn estimate(&self) -> Vec<f64> {
        self.s.iter().map(|v| v / self.psw).collect()
    }
}

/// One Pegasos update with step `η = 1/(ν t)` on example `ex`:
/// `w ← w − η (ν w − 1[y⟨w,x⟩ < 1] y x)`.
pub fn pegasos_update(w: &mut [f64], ex: &Example, nu: f64, t: u64) {
    let eta = 1.0 / (nu * t as f64);
    let active = ex.y * ex.x.dot(w) < 1.0;
    let shrink = 1.0 - eta * nu;
    w.iter_mut().for_each(|v| *v *= shrink);
    if active {
        ex.x.axpy(eta * ex.y, w);
    }
}

/// Advances the node's step counter and applies one Pegasos update on a
/// uniformly drawn local example.
pub fn pegasos_step(state: &mut NodeState, examples: &[Example], nu: f64) -> Result<()> {
    if state.local_data.is_empty() {
        return Err(Error::EmptyShard { node: 0 });
    }
    let k = state.rng.random_range(state.local_data.clone());
    state.t += 1;
    pegasos_update(&mut state.w, &examples[k], nu, state.t);
    Ok(())
}

/// One synchronous Push Sum round: every node splits `(s, psw)` into equal
/// shares over itself and its neighbors. Incoming shares are summed in
/// ascending sender order.
pub fn push_sum_round(states: &mut [NodeState], net: &Network) {
    let n = states.len();
    let d = states.first().map_or(0, |s| s.s.len());
    let share: Vec<f64> = (0..n).map(|i| 1.0 / (net.degree(i) + 1) as f64).collect();
    let mut new_s = vec![vec![0.0; d]; n];
    let mut new_psw = vec![0.0; n];
    for (j, (ns, np)) in new_s.iter_mut().zip(new_psw.iter_mut()).enumerate() {
        // senders to j: j itself and its neighbors, in ascending index order
        let nb = net.neighbors(j);
        let pos = nb.partition_point(|&i| (i as usize) < j);
        let senders = nb[..pos]
            .iter()
            .map(|&i| i as usize)
            .chain(std::iter::once(j))
            .chain(nb[pos..].iter().map(|&i| i as usize));
        for i in senders {
            let f = share[i];
            for (a, b) in ns.iter_mut().zip(&states[i].s) {
                *a += f * b;
            }
            *np += f * states[i].psw;
        }
    }
    for ((st, s), p) in states.iter_mut().zip(new_s).zip(new_psw) {
        st.s = s;
        st.psw = p;
    }
}

/// `max_{i<j} ‖v_i − v_j‖₂`, over all pairs.
pub fn max_pairwise_gap(vs: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..vs.len() {
        for j in (i + 1)..vs.len() {
            let d2: f64 = vs[i]
                .iter()
                .zip(&vs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

pub fn mean_vector(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs.first().map_or(0, |v| v.len());
    let mut m = vec![0.0; d];
    for v in vs {
        m.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    let k = vs.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a /= k);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// Equal-share Push Sum over `{self} ∪ N(i)`.
    PushSum,
    /// No communication: independent local learners.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GadgetConfig {
    pub nu: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub mixing: Mixing,
    pub steps_per_round: usize,
    /// Rounds during which nodes take Pegasos steps; afterwards only mixing
    /// runs. `None` keeps learning for the whole run.
    pub learning_rounds: Option<usize>,
    /// Replace the working model by the Push Sum estimate after each round.
    /// When false, local models learn independently and only their updates
    /// are fed into the Push Sum state.
    pub adopt: bool,
    /// Evaluate objective and accuracy every this many rounds (and at the end).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for GadgetConfig {
    fn default() -> Self {
        Self {
            nu: 0.01,
            epsilon: 1e-10,
            max_rounds: 100_000,
            mixing: Mixing::PushSum,
            steps_per_round: 1,
            learning_rounds: Some(100),
            adopt: true,
            eval_every: 1,
            seed: 0,
        }
    }
}

impl GadgetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu.is_nan() || self.nu <= 0.0 {
            return Err(Error::InvalidArgument("nu must be positive".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument(
                "eval_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetRun {
    /// First round after which all local models are ε-close.
    pub rounds_to_consensus: Option<usize>,
    pub censored: bool,
    /// Per round (index 0 is round 1); NaN where not evaluated.
    pub objective_trace: Vec<f64>,
    pub accuracy_trace: Vec<f64>,
    pub max_pairwise_gap_trace: Vec<f64>,
    /// Held-out accuracy of the averaged model at the end of the run.
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub final_objective: f64,
    /// Uniform average of the final local models.
    pub w_mean: Vec<f64>,
    /// Final local models.
    pub local_models: Vec<Vec<f64>>,
}

impl GadgetRun {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "round,max_pairwise_gap,objective,accuracy")?;
        let fmt = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        };
        for (k, gap) in self.max_pairwise_gap_trace.iter().enumerate() {
            writeln!(
                out,
                "{},{gap},{},{}",
                k + 1,
                fmt(self.objective_trace[k]),
                fmt(self.accuracy_trace[k])
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A training set reordered so that each node's shard is contiguous.
pub struct Shards {
    pub examples: Vec<Example>,
    pub ranges: Vec<Range<usize>>,
}

impl Shards {
    pub fn new(train: &LabeledDataset, partition: &Partition) -> Self {
        let mut examples = Vec::with_capacity(train.len());
        let mut ranges = Vec::with_capacity(partition.shards.len());
        for shard in &partition.shards {
            let start = examples.len();
            examples.extend(shard.iter().map(|&i| train.examples[i].clone()));
            ranges.push(start..examples.len());
        }
        Self { examples, ranges }
    }
}

/// GADGET on a fixed network and partition.
pub fn run_gadget_on(
    net: &Network,
    train: &LabeledDataset,
    test: &LabeledDataset,
    partition: &Partition,
    cfg: &GadgetConfig,
) -> Result<GadgetRun> {
    cfg.validate()?;
    let n = net.n();
    if partition.shards.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} shards for {} nodes",
            partition.shards.len(),
            n
        )));
    }
    if let Some(node) = partition.shards.iter().position(|s| s.is_empty()) {
        return Err(Error::EmptyShard { node });
    }
    let shards = Shards::new(train, partition);
    let d = train.d;
    let mut states: Vec<NodeState> = shards
        .ranges
        .iter()
        .enumerate()
        .map(|(i, r)| NodeState::new(d, r.clone(), cfg.seed, i))
        .collect();

    let models = |states: &[NodeState]| -> Vec<Vec<f64>> {
        if cfg.adopt {
            states.iter().map(|s| s.w.clone()).collect()
        } else {
            states.iter().map(NodeState::estimate).collect()
        }
    };

    let mut gap_trace = Vec::new();
    let mut obj_trace = Vec::new();
    let mut acc_trace = Vec::new();
    let mut reached = None;
    for round in 1..=cfg.max_rounds {
        let learning = cfg.learning_rounds.is_none_or(|l| round <= l);
        if learning {
            for st in states.iter_mut() {
                let before = if cfg.adopt { None } else { Some(st.w.clone()) };
                for _ in 0..cfg.steps_per_round {
                    let k = st.rng.random_range(st.local_data.clone());
                    st.t += 1;
                    pegasos_update(&mut st.w, &shards.examples[k], cfg.nu, st.t);
                }
                match before {
                    None => {
                        let p = st.psw;
                        st.s.iter_mut().zip(&st.w).for_each(|(s, w)| *s = p * w);
                    }
                    Some(old) => {
                        let p = st.psw;
                        for ((s, w), o) in st.s.iter_mut().zip(&st.w).zip(&old) {
                            *s += p * (w - o);
                        }
                    }
                }
            }
        }
        if cfg.mixing == Mixing::PushSum {
            push_sum_round(&mut states, net);
            if cfg.adopt {
                for st in states.iter_mut() {
                    st.w = st.estimate();
                }
            }
        } else if cfg.adopt {
            for st in states.iter_mut() {
                st.s = st.w.clone();
            }
        }

        let current = models(&states);
        let gap = max_pairwise_gap(&current);
        gap_trace.push(gap);
        let done = gap < cfg.epsilon;
        if round % cfg.eval_every == 0 || done || round == cfg.max_rounds {
            let w = mean_vector(&current);
            obj_trace.push(train.objective(&w, cfg.nu));
            acc_trace.push(test.accuracy(&w));
        } else {
            obj_trace.push(f64::NAN);
            acc_trace.push(f64::NAN);
        }
        if done {
            reached = Some(round);
            break;
        }
    }

    let local_models = models(&states);
    let w_mean = mean_vector(&local_models);
    Ok(GadgetRun {
        rounds_to_consensus: reached,
        censored: reached.is_none(),
        final_objective: train.objective(&w_mean, cfg.nu),
        test_accuracy: test.accuracy(&w_mean),
        train_accuracy: train.accuracy(&w_mean),
        objective_trace: obj_trace,
        accuracy_trace: acc_trace,
        max_pairwise_gap_trace: gap_trace,
        w_mean,
        local_models,
    })
}

/// Samples a connected network from `model`, shards `train` across its nodes
/// and runs GADGET.
pub fn run_gadget(
    model: &SbmModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &GadgetConfig,
) -> Result<GadgetRun> {
    let net = model.sample_connected(100)?;
    let partition = partition_equal(train, net.n(), cfg.seed)?;
    run_gadget_on(&net, train, test, &partition, cfg)
}

/// Single-node Pegasos on the pooled data, `steps` updates from `w = 0`.
pub fn pegasos(train: &LabeledDataset, nu: f64, steps: u64, seed: u64) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyShard { node: 0 });
    }
    let mut st = NodeState::new(train.d, 0..train.len(), seed, 0);
    for _ in 0..steps {
        pegasos_step(&mut st, &train.examples, nu)?;
    }
    Ok(st.w)
}

/// Run summary as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetSummary {
    pub config: GadgetConfig,
    pub rounds_to_consensus: Option<usize>,
    pub censored: bool,
    pub final_accuracy: f64,
    pub final_objective: f64,
}
