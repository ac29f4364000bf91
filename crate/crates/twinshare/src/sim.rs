//! End-to-end sharing experiments.
//!
//! One run wires everything together: a synthetic blob dataset partitioned
//! unevenly across nodes, a teacher trained centrally, students distilled
//! from it and broadcast as a common starting point, then per episode local
//! training on each node's own data followed by `q` parameter-averaging
//! rounds over the topology (with optional per-node packet loss and delayed
//! rounds). Metrics land in a [`MetricsLog`]: per-episode held-out accuracy,
//! parameter disagreement, and cumulative traffic per node.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::consensus::{ConsensusError, ConsensusState};
use crate::dtsync::{
    sync_cycle, CapabilitySet, Channel, DeviceTwin, EdgeTwin, StatusTriple, SyncTrace,
};
use crate::graph::{generate_topology, GraphError, Topology};
use crate::kd::{
    teacher_logits, KdConfig, KdError, MlpModel, Sample, StudentTier, TrainConfig, Trainer,
};
use crate::netcalc::ModelSpec;
use crate::planner::{AccuracyTable, PlannerError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kd(#[from] KdError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

/// Synthetic dataset shape: one Gaussian blob per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    /// Per-dimension standard deviation of each blob.
    pub spread: f64,
    /// Share of samples held out as the common test set.
    pub test_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 4,
            samples_per_class: 30,
            feature_dim: 20,
            spread: 1.6,
            test_fraction: 0.5,
        }
    }
}

/// How node-local training subsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    /// Split the train set into four equal parts; each node takes three of
    /// the four, then keeps each sample with `sample_prob`.
    ThreeOfFour,
    /// Every node sees the whole train set (still subsampled).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub sample_prob: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            scheme: PartitionScheme::ThreeOfFour,
            sample_prob: 0.5,
        }
    }
}

/// Twin synchronization settings used during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtSyncSettings {
    pub period: f64,
    pub deadline: f64,
    pub latency: f64,
}

impl Default for DtSyncSettings {
    fn default() -> Self {
        DtSyncSettings {
            period: 0.1,
            deadline: 0.05,
            latency: 0.01,
        }
    }
}

/// Topology choice for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Preset(String),
    Generate { n: usize, d_max: usize },
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: TopologySpec,
    pub tier: StudentTier,
    /// Sharing rounds per episode; 0 disables sharing entirely.
    pub q: u32,
    pub episodes: usize,
    pub seed: u64,
    /// Mixing weight; `None` selects `1 / (d_max + 1)`.
    pub rho: Option<f64>,
    pub delay_rounds: usize,
    /// Per-node probability that an incoming model copy is lost.
    pub packet_loss: BTreeMap<usize, f64>,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub dt_sync: DtSyncSettings,
    pub theta: f64,
    pub batch_size: usize,
    pub kd: KdConfig,
    pub learning_rate: f64,
    /// Central teacher training epochs before episode 1.
    pub teacher_epochs: usize,
    /// Edge-side distillation epochs producing the common student init.
    pub distill_epochs: usize,
    /// Local training epochs per episode on each node.
    pub local_epochs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            topology: TopologySpec::Preset("six-node".to_string()),
            tier: StudentTier::Medium,
            q: 5,
            episodes: 60,
            seed: 42,
            rho: None,
            delay_rounds: 0,
            packet_loss: BTreeMap::new(),
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            dt_sync: DtSyncSettings::default(),
            theta: 0.9,
            batch_size: 32,
            kd: KdConfig::default(),
            learning_rate: 0.001,
            teacher_epochs: 150,
            distill_epochs: 6,
            local_epochs: 35,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.episodes == 0 {
            return Err(SimError::InvalidScenario("episodes must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SimError::InvalidScenario("batch_size must be >= 1".into()));
        }
        for (&node, &p) in &self.packet_loss {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidScenario(format!(
                    "packet_loss[{node}] = {p} outside [0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.partition.sample_prob) {
            return Err(SimError::InvalidScenario(format!(
                "partition.sample_prob = {} outside [0, 1]",
                self.partition.sample_prob
            )));
        }
        if let Some(rho) = self.rho {
            if rho.is_nan() || rho <= 0.0 || rho >= 1.0 {
                return Err(SimError::InvalidScenario(format!(
                    "rho = {rho} outside (0, 1)"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(SimError::InvalidScenario(format!(
                "dataset.test_fraction = {} outside [0, 1)",
                self.dataset.test_fraction
            )));
        }
        if self.dataset.classes < 2 || self.dataset.feature_dim == 0 {
            return Err(SimError::InvalidScenario(
                "dataset needs >= 2 classes and >= 1 feature".into(),
            ));
        }
        Ok(())
    }

    pub fn build_topology(&self) -> Result<Topology, SimError> {
        match &self.topology {
            TopologySpec::Preset(name) => Topology::preset(name).ok_or_else(|| {
                SimError::InvalidScenario(format!("unknown topology preset `{name}`"))
            }),
            TopologySpec::Generate { n, d_max } => Ok(generate_topology(*n, *d_max, self.seed)?),
        }
    }
}

impl std::str::FromStr for ScenarioConfig {
    type Err = SimError;

    /// Parses the scenario file format: `key = value` lines, `#` comments.
    /// Unknown keys are errors so typos surface with their line number.
    fn from_str(text: &str) -> Result<Self, SimError> {
        let mut cfg = ScenarioConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SimError::Parse {
                line: lineno,
                msg: "expected `key = value`".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: String| SimError::Parse { line: lineno, msg };
            match key {
                "topology" => {
                    cfg.topology = if let Some(name) = value.strip_prefix("preset:") {
                        TopologySpec::Preset(name.trim().to_string())
                    } else if let Some(args) = value.strip_prefix("generate:") {
                        let mut n = None;
                        let mut d_max = None;
                        for part in args.split(',') {
                            let (k, v) = part
                                .split_once('=')
                                .ok_or_else(|| bad(format!("bad generate argument `{part}`")))?;
                            match k.trim() {
                                "n" => n = Some(parse_num(v, lineno)?),
                                "d_max" => d_max = Some(parse_num(v, lineno)?),
                                other => {
                                    return Err(bad(format!("unknown generate key `{other}`")))
                                }
                            }
                        }
                        TopologySpec::Generate {
                            n: n.ok_or_else(|| bad("generate needs n".into()))?,
                            d_max: d_max.ok_or_else(|| bad("generate needs d_max".into()))?,
                        }
                    } else {
                        return Err(bad(format!(
                            "topology must be `preset:<name>` or `generate:n=..,d_max=..`, got `{value}`"
                        )));
                    };
                }
                "tier" => {
                    let k: usize = parse_num(value, lineno)?;
                    cfg.tier = StudentTier::from_k(k)
                        .ok_or_else(|| bad(format!("tier {k} outside 1..=3")))?;
                }
                "q" => cfg.q = parse_num(value, lineno)?,
                "episodes" => cfg.episodes = parse_num(value, lineno)?,
                "seed" => cfg.seed = parse_num(value, lineno)?,
                "rho" => {
                    cfg.rho = if value == "auto" {
                        None
                    } else {
                        Some(parse_num(value, lineno)?)
                    };
                }
                "delay_rounds" => cfg.delay_rounds = parse_num(value, lineno)?,
                "packet_loss" => {
                    let mut map = BTreeMap::new();
                    if !value.is_empty() && value != "none" {
                        for part in value.split(',') {
                            let (node, prob) = part.split_once(':').ok_or_else(|| {
                                bad(format!("packet_loss entry `{part}` needs node:prob"))
                            })?;
                            map.insert(
                                parse_num::<usize>(node, lineno)?,
                                parse_num::<f64>(prob, lineno)?,
                            );
                        }
                    }
                    cfg.packet_loss = map;
                }
                "dataset.classes" => cfg.dataset.classes = parse_num(value, lineno)?,
                "dataset.samples_per_class" => {
                    cfg.dataset.samples_per_class = parse_num(value, lineno)?
                }
                "dataset.feature_dim" => cfg.dataset.feature_dim = parse_num(value, lineno)?,
                "dataset.spread" => cfg.dataset.spread = parse_num(value, lineno)?,
                "dataset.test_fraction" => cfg.dataset.test_fraction = parse_num(value, lineno)?,
                "partition.scheme" => {
                    cfg.partition.scheme = match value {
                        "three_of_four" => PartitionScheme::ThreeOfFour,
                        "full" => PartitionScheme::Full,
                        other => return Err(bad(format!("unknown partition scheme `{other}`"))),
                    };
                }
                "partition.sample_prob" => cfg.partition.sample_prob = parse_num(value, lineno)?,
                "dt_sync.period" => cfg.dt_sync.period = parse_num(value, lineno)?,
                "dt_sync.deadline" => cfg.dt_sync.deadline = parse_num(value, lineno)?,
                "dt_sync.latency" => cfg.dt_sync.latency = parse_num(value, lineno)?,
                "theta" => cfg.theta = parse_num(value, lineno)?,
                "batch_size" => cfg.batch_size = parse_num(value, lineno)?,
                "kd.alpha" => cfg.kd.alpha = parse_num(value, lineno)?,
                "kd.tau" => cfg.kd.tau = parse_num(value, lineno)?,
                "learning_rate" => cfg.learning_rate = parse_num(value, lineno)?,
                "teacher_epochs" => cfg.teacher_epochs = parse_num(value, lineno)?,
                "distill_epochs" => cfg.distill_epochs = parse_num(value, lineno)?,
                "local_epochs" => cfg.local_epochs = parse_num(value, lineno)?,
                other => {
                    return Err(SimError::Parse {
                        line: lineno,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize) -> Result<T, SimError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| SimError::Parse {
        line,
        msg: format!("bad number `{}`: {e}", value.trim()),
    })
}

// Dedicated RNG streams so sub-processes stay independent of each other.
const STREAM_DATASET: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_PARTITION: u64 = 3;
const STREAM_TEACHER: u64 = 4;
const STREAM_LOSS: u64 = 5;
const STREAM_NODE_BASE: u64 = 100;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal via Box-Muller on the given RNG.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Distance of each blob center from the origin. Centers sit on fixed
/// signed axes, so task difficulty depends on `spread` alone and stays
/// uniform across seeds; only the samples are random.
pub const CENTER_SEPARATION: f64 = 6.0;

fn blob_center(label: usize, feature_dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; feature_dim];
    let axis = label % feature_dim;
    let sign = if (label / feature_dim) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    c[axis] = sign * CENTER_SEPARATION;
    c
}

/// Gaussian blob dataset: one fixed center per class, seeded noise around
/// it, shuffled. Deterministic per seed.
pub fn make_dataset(spec: &DatasetSpec, seed: u64) -> Vec<Sample> {
    let mut rng = stream_rng(seed, STREAM_DATASET);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|c| blob_center(c, spec.feature_dim))
        .collect();
    let mut data = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let features = center
                .iter()
                .map(|&c| c + spec.spread * gaussian(&mut rng))
                .collect();
            data.push(Sample { features, label });
        }
    }
    data.shuffle(&mut rng);
    data
}

/// Splits off a shared held-out test set.
pub fn train_test_split(
    data: &[Sample],
    test_fraction: f64,
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>) {
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    let mut shuffled: Vec<Sample> = data.to_vec();
    shuffled.shuffle(&mut rng);
    let test_len = ((shuffled.len() as f64 * test_fraction) as usize)
        .max(1)
        .min(shuffled.len() - 1);
    let train = shuffled.split_off(test_len);
    (train, shuffled)
}

/// Draws each node's local subset: three of four parts, subsampled.
///
/// The four parts cut the label-sorted train set into contiguous quarters,
/// so each part is class-correlated and the parts genuinely differ. A node
/// skipping one part therefore lacks a slice of the label space that only
/// sharing can supply.
pub fn partition_nodes(
    train: &[Sample],
    nodes: usize,
    spec: &PartitionSpec,
    seed: u64,
) -> Vec<Vec<Sample>> {
    let mut rng = stream_rng(seed, STREAM_PARTITION);
    let mut sorted: Vec<Sample> = train.to_vec();
    sorted.sort_by_key(|s| s.label);
    let part_len = sorted.len().div_ceil(4);
    let parts: Vec<&[Sample]> = sorted.chunks(part_len).collect();
    let mut subsets = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let mut pool: Vec<Sample> = match spec.scheme {
            PartitionScheme::ThreeOfFour => {
                let skip = rng.gen_range(0..parts.len());
                parts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .flat_map(|(_, p)| p.iter().cloned())
                    .collect()
            }
            PartitionScheme::Full => sorted.clone(),
        };
        pool.retain(|_| rng.gen_range(0.0..1.0) < spec.sample_prob);
        if pool.is_empty() {
            // Degenerate subsample; keep at least one sample so training is
            // defined.
            pool.push(sorted[rng.gen_range(0..sorted.len())].clone());
        }
        subsets.push(pool);
    }
    subsets
}

/// One metrics row: a node's view at the end of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub node: usize,
    pub accuracy: f64,
    pub disagreement: f64,
    /// Cumulative bits this node has transmitted.
    pub bits: u64,
}

/// Run summary serialized as `summary.json`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub topology: String,
    pub nodes: usize,
    pub d_max: usize,
    pub tier_k: usize,
    pub q: u32,
    pub episodes: usize,
    pub seed: u64,
    pub sharing_disabled: bool,
    pub teacher_accuracy: f64,
    pub final_mean_accuracy: f64,
    pub final_accuracy_per_node: Vec<f64>,
    pub final_disagreement: f64,
    pub total_bits: u64,
    pub student_param_count: usize,
    pub model_bits: u64,
    pub theta: f64,
    pub synced_nodes: usize,
}

/// Full experiment output: per-episode rows plus the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    rows: Vec<EpisodeRow>,
    pub summary: RunSummary,
    pub sync_trace: String,
}

impl MetricsLog {
    pub fn rows(&self) -> &[EpisodeRow] {
        &self.rows
    }

    /// Mean held-out accuracy across nodes at the final episode.
    pub fn final_mean_accuracy(&self) -> f64 {
        self.summary.final_mean_accuracy
    }

    /// Mean accuracy across nodes per episode, episode-ordered.
    pub fn mean_accuracy_curve(&self) -> Vec<f64> {
        let episodes = self.summary.episodes;
        let nodes = self.summary.nodes as f64;
        let mut curve = vec![0.0; episodes];
        for row in &self.rows {
            curve[row.episode] += row.accuracy / nodes;
        }
        curve
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,node,accuracy,disagreement,bits\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.episode, r.node, r.accuracy, r.disagreement, r.bits
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

fn max_norm_disagreement(params: &[Vec<f64>]) -> f64 {
    let n = params.len() as f64;
    let dim = params.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for row in params {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    params
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(v, m)| (v - m).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Trains `trainer` for `epochs` passes over `data` in shuffled batches.
fn train_epochs(
    trainer: &mut Trainer,
    data: &[Sample],
    teacher: Option<&MlpModel>,
    cfg: &TrainConfig,
    batch_size: usize,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), KdError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let logits = match teacher {
                Some(t) => Some(teacher_logits(t, &batch)?),
                None => None,
            };
            trainer.train_step(&batch, logits.as_deref(), cfg)?;
        }
    }
    Ok(())
}

/// Runs the full sharing loop and collects metrics.
pub fn run_alg1(scenario: &ScenarioConfig) -> Result<MetricsLog, SimError> {
    scenario.validate()?;
    let topology = scenario.build_topology()?;
    let n = topology.node_count();
    let degrees = topology.degrees();
    let d_max = topology.max_degree();
    let neighbors = topology.neighbors();
    let rho = scenario.rho.unwrap_or(1.0 / (d_max as f64 + 1.0));

    let data = make_dataset(&scenario.dataset, scenario.seed);
    let (train, test) = train_test_split(&data, scenario.dataset.test_fraction, scenario.seed);
    let subsets = partition_nodes(&train, n, &scenario.partition, scenario.seed);

    let train_cfg = TrainConfig {
        kd: scenario.kd,
        learning_rate: scenario.learning_rate,
    };
    let dim = scenario.dataset.feature_dim;
    let classes = scenario.dataset.classes;

    // Teacher trained once up front at the edge.
    let mut teacher_rng = stream_rng(scenario.seed, STREAM_TEACHER);
    let mut teacher_trainer = Trainer::new(MlpModel::teacher(dim, classes, scenario.seed));
    train_epochs(
        &mut teacher_trainer,
        &train,
        None,
        &train_cfg,
        scenario.batch_size,
        scenario.teacher_epochs,
        &mut teacher_rng,
    )?;
    let teacher = teacher_trainer.into_model();
    let teacher_accuracy = teacher.accuracy(&test)?;

    // Distill the chosen tier at the edge, then broadcast the same weights
    // to every node.
    let mut student_trainer = Trainer::new(MlpModel::student(
        scenario.tier,
        dim,
        classes,
        scenario.seed,
    ));
    train_epochs(
        &mut student_trainer,
        &train,
        Some(&teacher),
        &train_cfg,
        scenario.batch_size,
        scenario.distill_epochs,
        &mut teacher_rng,
    )?;
    let seed_model = student_trainer.into_model();
    let model_spec = ModelSpec::from_model(scenario.tier, &seed_model);
    let model_bits = model_spec.delta_bits as u64;

    let mut trainers: Vec<Trainer> = (0..n).map(|_| Trainer::new(seed_model.clone())).collect();
    let mut node_rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| stream_rng(scenario.seed, STREAM_NODE_BASE + i as u64))
        .collect();
    let mut loss_rng = stream_rng(scenario.seed, STREAM_LOSS);

    // Twin records mirror the run; one sync cycle per node per episode.
    let mut edge = EdgeTwin::new(scenario.dt_sync.deadline, scenario.dt_sync.period);
    let mut devices: Vec<DeviceTwin> = (0..n)
        .map(|i| {
            let status = StatusTriple::default();
            let capability = CapabilitySet {
                viable_tiers: (1..=scenario.tier.k()).collect(),
                ..CapabilitySet::default()
            };
            let device = DeviceTwin::new(i, status.clone(), capability.clone());
            edge.register(i, status, capability);
            device
        })
        .collect();
    let mut sync_trace = SyncTrace::new();

    let mut rows = Vec::with_capacity(scenario.episodes * n);
    let mut cumulative_bits = vec![0u64; n];
    let mut final_disagreement = 0.0;

    for episode in 0..scenario.episodes {
        // Local training on each node's own stream.
        for (i, trainer) in trainers.iter_mut().enumerate() {
            let mut rng = node_rngs[i].clone();
            train_epochs(
                trainer,
                &subsets[i],
                Some(&teacher),
                &train_cfg,
                scenario.batch_size,
                scenario.local_epochs,
                &mut rng,
            )?;
            node_rngs[i] = rng;
        }

        // Sharing rounds on flattened parameters.
        let params: Vec<Vec<f64>> = trainers
            .iter()
            .map(|t| t.model().flatten_params())
            .collect();
        let disagreement = if scenario.q > 0 {
            let mut state = ConsensusState::new(topology.clone(), params, scenario.delay_rounds)?;
            for _ in 0..scenario.q {
                let lost = sample_lost_links(&neighbors, &scenario.packet_loss, &mut loss_rng);
                state.step_discrete_filtered(rho, scenario.delay_rounds, |i, j| {
                    !lost.contains(&(i, j))
                })?;
                for (i, &deg) in degrees.iter().enumerate() {
                    cumulative_bits[i] += deg as u64 * model_bits;
                }
            }
            for (trainer, row) in trainers.iter_mut().zip(state.params()) {
                trainer.model_mut().load_params(row)?;
            }
            state.disagreement()
        } else {
            max_norm_disagreement(&params)
        };
        final_disagreement = disagreement;

        // Metrics and twin sync.
        for (i, trainer) in trainers.iter().enumerate() {
            let accuracy = trainer.model().accuracy(&test)?;
            rows.push(EpisodeRow {
                episode,
                node: i,
                accuracy,
                disagreement,
                bits: cumulative_bits[i],
            });

            let device = &mut devices[i];
            let mut observed = device.status.clone();
            observed.model_accuracy = accuracy;
            let predicted = edge.predict(i).cloned().unwrap_or_default();
            device.device_update(observed, &predicted);
            let channel = Channel::healthy(scenario.dt_sync.latency);
            sync_cycle(
                device,
                &mut edge,
                channel,
                episode as f64 * scenario.dt_sync.period,
            );
            sync_trace.record(episode as u64, device, channel);
        }
    }

    let final_accuracy_per_node: Vec<f64> =
        rows[rows.len() - n..].iter().map(|r| r.accuracy).collect();
    let final_mean_accuracy =
        final_accuracy_per_node.iter().sum::<f64>() / final_accuracy_per_node.len() as f64;
    let synced_nodes = devices
        .iter()
        .filter(|d| d.sync.phase == crate::dtsync::SyncPhase::Synced)
        .count();

    let summary = RunSummary {
        topology: match &scenario.topology {
            TopologySpec::Preset(name) => format!("preset:{name}"),
            TopologySpec::Generate { n, d_max } => format!("generate:n={n},d_max={d_max}"),
        },
        nodes: n,
        d_max,
        tier_k: scenario.tier.k(),
        q: scenario.q,
        episodes: scenario.episodes,
        seed: scenario.seed,
        sharing_disabled: scenario.q == 0,
        teacher_accuracy,
        final_mean_accuracy,
        final_accuracy_per_node,
        final_disagreement,
        total_bits: cumulative_bits.iter().sum(),
        student_param_count: seed_model.param_count(),
        model_bits,
        theta: scenario.theta,
        synced_nodes,
    };

    Ok(MetricsLog {
        rows,
        summary,
        sync_trace: sync_trace.to_csv(),
    })
}

/// Directed links whose packet is lost this round: `(receiver, sender)`
/// pairs, sampled by the receiver's loss probability.
fn sample_lost_links(
    neighbors: &[Vec<usize>],
    loss: &BTreeMap<usize, f64>,
    rng: &mut ChaCha8Rng,
) -> std::collections::BTreeSet<(usize, usize)> {
    let mut lost = std::collections::BTreeSet::new();
    if loss.is_empty() {
        return lost;
    }
    for (i, nbrs) in neighbors.iter().enumerate() {
        let p = loss.get(&i).copied().unwrap_or(0.0);
        for &j in nbrs {
            if p > 0.0 && rng.gen_range(0.0..1.0) < p {
                lost.insert((i, j));
            }
        }
    }
    lost
}

/// Sweep axis for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Q,
    DMax,
    Tier,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s {
            "q" => Some(SweepAxis::Q),
            "d_max" => Some(SweepAxis::DMax),
            "tier" => Some(SweepAxis::Tier),
            _ => None,
        }
    }
}

/// Runs the base scenario once per axis value, returning `(value, log)`
/// pairs. Values share the base seed so runs differ only along the axis.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[u64],
) -> Result<Vec<(u64, MetricsLog)>, SimError> {
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let mut scenario = base.clone();
        match axis {
            SweepAxis::Q => scenario.q = value as u32,
            SweepAxis::DMax => match scenario.topology {
                TopologySpec::Generate { n, .. } => {
                    scenario.topology = TopologySpec::Generate {
                        n,
                        d_max: value as usize,
                    };
                }
                TopologySpec::Preset(_) => {
                    return Err(SimError::InvalidScenario(
                        "d_max sweep needs a generated topology".to_string(),
                    ))
                }
            },
            SweepAxis::Tier => {
                scenario.tier = StudentTier::from_k(value as usize).ok_or_else(|| {
                    SimError::InvalidScenario(format!("tier {value} outside 1..=3"))
                })?;
            }
        }
        let log = run_alg1(&scenario)?;
        out.push((value, log));
    }
    Ok(out)
}

/// Rebuilds an accuracy table from simulation runs: mean final accuracy per
/// `(tier, q)` cell over the given seeds.
pub fn regenerate_accuracy_table(
    base: &ScenarioConfig,
    q_values: &[u32],
    seeds: &[u64],
) -> Result<AccuracyTable, SimError> {
    if seeds.is_empty() || q_values.is_empty() {
        return Err(SimError::InvalidScenario(
            "need at least one seed and one q value".to_string(),
        ));
    }
    let mut rows = Vec::new();
    for tier in StudentTier::ALL {
        for &q in q_values {
            let mut acc = 0.0;
            for &seed in seeds {
                let mut scenario = base.clone();
                scenario.tier = tier;
                scenario.q = q;
                scenario.seed = seed;
                acc += run_alg1(&scenario)?.final_mean_accuracy();
            }
            rows.push((tier.k(), q, acc / seeds.len() as f64));
        }
    }
    Ok(AccuracyTable::from_rows(&rows)?)
}
