//! Command-line front end over the library.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible configuration,
//! 3 internal invariant violation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use twinshare::graph::{GraphError, Topology};
use twinshare::kd::{teacher_logits, MlpModel, StudentTier, TrainConfig, Trainer};
use twinshare::netcalc::{ChannelConfig, NetcalcError};
use twinshare::planner::{search_alg2, search_exhaustive, AccuracyTable, PlannerError};
use twinshare::sim::{
    make_dataset, run_alg1, sweep, train_test_split, ScenarioConfig, SimError, SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "twinshare",
    about = "Plan and simulate lightweight model sharing among resource-limited agents",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

const CHANNEL_KEYS: &str = "parameter file keys (key = value per line):
  bandwidth        total channel bandwidth C, bit/s
  keep_alive       per-flow keep-alive rate E, bit/s
  contenders       flows sharing the channel |N|
  twin_deviation   twin sync upload volume, bits
  edge_rate        edge processing rate, ops/s
  complexity       twin computing complexity, ops/bit
  sync_deadline    max allowed twin sync delay, s
  d_max            topology degree bound under consideration
  q                sharing frequency under consideration
  feature_dim, classes        derive tier volumes from the desk models
  delta_bits, phi_ops         explicit per-tier triples (v1,v2,v3)";

const SCENARIO_KEYS: &str = "scenario file keys (key = value per line):
  topology                    preset:six-node | generate:n=..,d_max=..
  tier                        student tier 1..=3
  q                           sharing rounds per episode (0 = baseline)
  episodes, seed              run length and RNG seed
  rho                         mixing weight, or `auto` for 1/(d_max+1)
  delay_rounds                sharing lag in rounds
  packet_loss                 node:prob pairs, e.g. 3:0.3,5:0.5 (or none)
  dataset.classes             blob count
  dataset.samples_per_class   samples per blob
  dataset.feature_dim         feature dimension
  dataset.spread              blob standard deviation
  dataset.test_fraction       held-out share
  partition.scheme            three_of_four | full
  partition.sample_prob       per-sample keep probability
  dt_sync.period, dt_sync.deadline, dt_sync.latency
  theta                       accuracy requirement echoed into the summary
  batch_size, learning_rate, kd.alpha, kd.tau
  teacher_epochs, distill_epochs, local_epochs";

#[derive(Subcommand)]
enum Command {
    /// Print eigenvalues, degree, and delay budgets for an edge-list file.
    #[command(after_help = "topology file: one `u v` pair per line, 0-indexed, \
optional `# name=<preset>` and `# nodes=<n>` headers; must be connected")]
    Spectrum {
        /// Topology file: one `u v` edge per line, optional `# name=` header.
        topology: PathBuf,
    },
    /// Print the channel sizing table for a parameter file.
    #[command(after_help = CHANNEL_KEYS)]
    Netcalc {
        /// Channel parameter file (`key = value` lines).
        params: PathBuf,
    },
    /// Search the sharing configuration minimizing bandwidth plus compute.
    #[command(after_help = CHANNEL_KEYS)]
    Plan {
        /// Channel parameter file (`key = value` lines).
        params: PathBuf,
        /// Accuracy table CSV (`k,q,omega` rows); bundled grid if omitted.
        #[arg(long)]
        accuracy: Option<PathBuf>,
        /// Required recognition accuracy.
        #[arg(long, default_value_t = 0.9)]
        theta: f64,
        /// Onboard compute budget (ops).
        #[arg(long, default_value_t = 1e18)]
        budget: f64,
        #[arg(long, value_enum, default_value_t = PlanMode::Alg2)]
        mode: PlanMode,
    },
    /// Run a sharing experiment and write metrics.csv + summary.json.
    #[command(after_help = SCENARIO_KEYS)]
    Simulate {
        /// Scenario file (`key = value` lines).
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the teacher, distill each student tier, and write checkpoints
    /// plus an accuracy report.
    #[command(after_help = SCENARIO_KEYS)]
    Distill {
        /// Scenario file supplying the dataset and training settings.
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run a scenario across one axis and write per-value metrics.
    #[command(after_help = SCENARIO_KEYS)]
    Sweep {
        /// Scenario file (`key = value` lines).
        scenario: PathBuf,
        /// Axis to vary.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values (q counts, degrees, or tiers).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanMode {
    Alg2,
    Exhaustive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Q,
    DMax,
    Tier,
}

impl Axis {
    fn to_sweep(self) -> SweepAxis {
        match self {
            Axis::Q => SweepAxis::Q,
            Axis::DMax => SweepAxis::DMax,
            Axis::Tier => SweepAxis::Tier,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Q => "q",
            Axis::DMax => "d_max",
            Axis::Tier => "tier",
        }
    }
}

/// Failure classified by exit code.
enum Failure {
    Input(String),
    Infeasible(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            GraphError::NonConvergence { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<NetcalcError> for Failure {
    fn from(e: NetcalcError) -> Self {
        match e {
            NetcalcError::InfeasibleSync { .. } | NetcalcError::Saturated { .. } => {
                Failure::Infeasible(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<PlannerError> for Failure {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::NoFeasibleConfig { .. } => Failure::Infeasible(e.to_string()),
            PlannerError::Netcalc(inner) => inner.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Graph(inner) => inner.into(),
            SimError::Planner(inner) => inner.into(),
            SimError::Kd(inner) => Failure::Internal(inner.to_string()),
            SimError::Consensus(inner) => Failure::Internal(inner.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<twinshare::kd::KdError> for Failure {
    fn from(e: twinshare::kd::KdError) -> Self {
        Failure::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Spectrum { topology } => cmd_spectrum(&topology),
        Command::Netcalc { params } => cmd_netcalc(&params),
        Command::Plan {
            params,
            accuracy,
            theta,
            budget,
            mode,
        } => cmd_plan(&params, accuracy.as_deref(), theta, budget, mode),
        Command::Simulate {
            scenario,
            out,
            seed,
        } => cmd_simulate(&scenario, &out, seed),
        Command::Distill {
            scenario,
            out,
            seed,
        } => cmd_distill(&scenario, &out, seed),
        Command::Sweep {
            scenario,
            axis,
            values,
            out,
            seed,
        } => cmd_sweep(&scenario, axis, &values, &out, seed),
    }
}

fn cmd_spectrum(path: &Path) -> Result<(), Failure> {
    let topo = Topology::from_edge_list(&read(path)?)?;
    let spectrum = topo.spectrum()?;
    let budget = topo.delay_budget()?;
    if let Some(name) = topo.preset_name() {
        println!("name: {name}");
    }
    println!("nodes: {}", topo.node_count());
    println!("edges: {}", topo.edge_count());
    println!("d_max: {}", topo.max_degree());
    let eigens: Vec<String> = spectrum
        .eigenvalues
        .iter()
        .map(|l| format!("{l:.9}"))
        .collect();
    println!("eigenvalues: {}", eigens.join(" "));
    println!("lambda_max: {:.9}", spectrum.lambda_max);
    println!("eps_exact: {:.9}", budget.eps_exact);
    println!("eps_sufficient: {:.9}", budget.eps_sufficient);
    Ok(())
}

fn cmd_netcalc(path: &Path) -> Result<(), Failure> {
    let cfg: ChannelConfig = read(path)?.parse()?;
    let p = &cfg.params;
    let sync = p.dt_bandwidth()?;
    println!(
        "channel: C = {} bit/s, keep-alive E = {} bit/s, contenders = {}",
        p.bandwidth, p.keep_alive, p.contenders
    );
    println!("sync reservation: {sync:.3} bit/s");
    let leftover = p.bandwidth - sync - (p.contenders - 1) as f64 * p.keep_alive;
    println!("leftover rate per flow: {leftover:.3} bit/s");
    println!("planning inputs: d_max = {}, q = {}", cfg.d_max, cfg.q);
    println!("tier  delta_bits      phi_ops    delay_bound_s    min_bandwidth    max_q");
    for spec in &cfg.tiers {
        let delay = match p.delay_bound(spec, cfg.q) {
            Ok(d) => format!("{d:.6}"),
            Err(NetcalcError::Saturated { .. }) => "saturated".to_string(),
            Err(e) => return Err(e.into()),
        };
        let min_c = p.min_bandwidth(spec, cfg.q, cfg.d_max)?;
        let max_q = match p.max_frequency(spec, cfg.d_max) {
            Ok(q) => q.to_string(),
            Err(NetcalcError::Saturated { .. }) => "0 (saturated)".to_string(),
            Err(e) => return Err(e.into()),
        };
        println!(
            "{:4}  {:>12}  {:>11}  {:>15}  {:>15.3}  {:>7}",
            spec.tier.k(),
            spec.delta_bits,
            spec.phi_ops,
            delay,
            min_c,
            max_q
        );
    }
    Ok(())
}

fn cmd_plan(
    params: &Path,
    accuracy: Option<&Path>,
    theta: f64,
    budget: f64,
    mode: PlanMode,
) -> Result<(), Failure> {
    let cfg: ChannelConfig = read(params)?.parse()?;
    let table = match accuracy {
        Some(path) => AccuracyTable::from_csv(&read(path)?)?,
        None => AccuracyTable::reference(),
    };
    let result = match mode {
        PlanMode::Alg2 => search_alg2(&table, theta, budget, &cfg.params, &cfg.tiers),
        PlanMode::Exhaustive => search_exhaustive(&table, theta, budget, &cfg.params, &cfg.tiers),
    };
    match result {
        Ok(plan) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&plan).expect("plan serializes")
            );
            Ok(())
        }
        Err(PlannerError::NoFeasibleConfig { .. }) => {
            let err = PlannerError::NoFeasibleConfig { theta, budget };
            println!(
                "{}",
                serde_json::json!({ "feasible": false, "error": err.to_string() })
            );
            Err(Failure::Infeasible(err.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut scenario: ScenarioConfig = read(path)?.parse()?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn cmd_simulate(path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let scenario = load_scenario(path, seed)?;
    let log = run_alg1(&scenario)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.csv"), log.to_csv())?;
    fs::write(out.join("summary.json"), log.summary_json())?;
    fs::write(out.join("sync_trace.csv"), &log.sync_trace)?;
    println!(
        "episodes: {}, final mean accuracy: {:.4}, total bits: {}",
        log.summary.episodes, log.summary.final_mean_accuracy, log.summary.total_bits
    );
    println!("wrote {}", out.join("metrics.csv").display());
    println!("wrote {}", out.join("summary.json").display());
    Ok(())
}

fn cmd_distill(path: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let scenario = load_scenario(path, seed)?;
    let data = make_dataset(&scenario.dataset, scenario.seed);
    let (train, test) = train_test_split(&data, scenario.dataset.test_fraction, scenario.seed);
    let train_cfg = TrainConfig {
        kd: scenario.kd,
        learning_rate: scenario.learning_rate,
    };
    let dim = scenario.dataset.feature_dim;
    let classes = scenario.dataset.classes;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut teacher_trainer = Trainer::new(MlpModel::teacher(dim, classes, scenario.seed));
    train_shuffled(
        &mut teacher_trainer,
        &train,
        None,
        &train_cfg,
        scenario.batch_size,
        scenario.teacher_epochs,
        &mut rng,
    )?;
    let teacher = teacher_trainer.into_model();

    fs::create_dir_all(out)?;
    let mut report = String::from("model,k,param_count,accuracy\n");
    let teacher_acc = teacher.accuracy(&test)?;
    report.push_str(&format!(
        "teacher,0,{},{teacher_acc}\n",
        teacher.param_count()
    ));
    let mut file = fs::File::create(out.join("teacher.bin"))?;
    teacher.save_checkpoint(&mut file)?;

    for tier in StudentTier::ALL {
        let mut trainer = Trainer::new(MlpModel::student(tier, dim, classes, scenario.seed));
        train_shuffled(
            &mut trainer,
            &train,
            Some(&teacher),
            &train_cfg,
            scenario.batch_size,
            scenario.distill_epochs.max(scenario.local_epochs),
            &mut rng,
        )?;
        let student = trainer.into_model();
        let acc = student.accuracy(&test)?;
        report.push_str(&format!(
            "student,{},{},{acc}\n",
            tier.k(),
            student.param_count()
        ));
        let mut file = fs::File::create(out.join(format!("student_k{}.bin", tier.k())))?;
        student.save_checkpoint(&mut file)?;
    }
    fs::write(out.join("accuracy.csv"), &report)?;
    print!("{report}");
    println!("wrote checkpoints under {}", out.display());
    Ok(())
}

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;

fn train_shuffled(
    trainer: &mut Trainer,
    data: &[twinshare::kd::Sample],
    teacher: Option<&MlpModel>,
    cfg: &TrainConfig,
    batch_size: usize,
    epochs: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(), Failure> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<twinshare::kd::Sample> =
                chunk.iter().map(|&i| data[i].clone()).collect();
            let logits = match teacher {
                Some(t) => Some(teacher_logits(t, &batch)?),
                None => None,
            };
            trainer.train_step(&batch, logits.as_deref(), cfg)?;
        }
    }
    Ok(())
}

fn cmd_sweep(
    path: &Path,
    axis: Axis,
    values: &[u64],
    out: &Path,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let scenario = load_scenario(path, seed)?;
    let results = sweep(&scenario, axis.to_sweep(), values)?;
    fs::create_dir_all(out)?;
    let mut summaries = BTreeMap::new();
    for (value, log) in &results {
        let name = format!("metrics_{}_{value}.csv", axis.label());
        fs::write(out.join(&name), log.to_csv())?;
        summaries.insert(value.to_string(), log.summary.clone());
        println!(
            "{} = {value}: final mean accuracy {:.4}",
            axis.label(),
            log.summary.final_mean_accuracy
        );
    }
    let json = serde_json::json!({ "axis": axis.label(), "runs": summaries });
    fs::write(
        out.join("sweep_summary.json"),
        serde_json::to_string_pretty(&json).expect("sweep summary serializes"),
    )?;
    println!("wrote {}", out.join("sweep_summary.json").display());
    Ok(())
}
