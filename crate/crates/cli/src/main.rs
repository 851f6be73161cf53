use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asne_core::analysis::{fitness_structure_coefficient, rank_heuristics, RunRecord, Stats, TOP_K};
use asne_core::dataio::{synth_series, SynthKind, SynthSpec};
use asne_core::experiment::{baselines, run_experiment, write_grid, DataSource, RunOptions, DEFAULT_CONSTANT_DEPOSIT};
use asne_core::{
    AntSpeciesMode, ColonySuperstructure, DepositKind, Error, ExperimentConfig, ExperimentSummary, JumpMode,
    LamarckGate, MasterState, PhiMode, RnnGenome,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "asne", version, about = "Ant swarm neuro-evolution of recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: every repeat, its logs, and the summary.
    Run(RunArgs),
    /// Write one config file per combination of the heuristic grid.
    Grid {
        #[command(flatten)]
        base: ConfigArgs,
        /// Directory for the generated config files.
        #[arg(long, default_value = "grid")]
        out: PathBuf,
    },
    /// Write a synthetic series as CSV.
    Synth(SynthArgs),
    /// Count heuristics in the top-k experiments of finished runs.
    Rank {
        /// summary.json files, or directories searched for them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Cut-offs for the top-k columns.
        #[arg(long, value_delimiter = ',', default_values_t = TOP_K)]
        top: Vec<usize>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Describe a genome, colony or checkpoint JSON file.
    Inspect { file: PathBuf },
    /// Compute the constant-mean and random-topology baselines for a config.
    Baseline {
        #[command(flatten)]
        base: ConfigArgs,
        /// Number of random genomes to train.
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Reward {
    Const,
    Fitness,
    L1,
    L2,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    ants: Option<usize>,
    /// std, stdbias, exp, expfwd, expbwd or expfwdbwd.
    #[arg(long)]
    species: Option<AntSpeciesMode>,
    /// aj (layer jumps) or oj (next layer only).
    #[arg(long)]
    jump: Option<JumpMode>,
    /// fn, a constant in [0, 1] such as 0.3, or off.
    #[arg(long)]
    phi: Option<PhiMode>,
    #[arg(long, value_enum)]
    reward: Option<Reward>,
    /// Regularization strength of the l1 and l2 rewards.
    #[arg(long)]
    gamma: Option<f64>,
    /// Pheromone added per reward by the const scheme.
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// population or always.
    #[arg(long)]
    lamarck_gate: Option<LamarckGate>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Read the series from this CSV instead of generating it.
    #[arg(long, requires = "target")]
    csv: Option<PathBuf>,
    /// Target column of --csv.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Continue each repeat from its checkpoint when one exists.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "sine_mix")]
    kind: SynthKind,
    #[arg(long, default_value_t = 512)]
    length: usize,
    /// Columns including the target.
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "synth.csv")]
    out: PathBuf,
}

/// A failure together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Data(_) => EXIT_DATA,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<asne_core::dataio::DataError> for Failure {
    fn from(e: asne_core::dataio::DataError) -> Self {
        Error::from(e).into()
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Failure {
                code: EXIT_CONFIG,
                message: e.to_string(),
            },
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    // a relative CSV path in a config file is relative to that file
    if let (Some(file), DataSource::Csv { path, .. }) = (&args.config, &mut c.data.source) {
        if path.is_relative() {
            if let Some(dir) = file.parent() {
                *path = dir.join(&*path);
            }
        }
    }
    let evo = &mut c.evolution;
    if let Some(v) = args.ants {
        evo.swarm.ants = v;
    }
    if let Some(v) = args.species {
        evo.swarm.species = v;
    }
    if let Some(v) = args.jump {
        evo.swarm.jump = v;
    }
    if let Some(v) = args.phi {
        evo.phi = v;
    }
    let gamma = args.gamma.or(match evo.scheme.deposit {
        DepositKind::L1 { gamma } | DepositKind::L2 { gamma } => Some(gamma),
        _ => None,
    });
    if let Some(reward) = args.reward {
        let g = gamma.unwrap_or(0.9);
        evo.scheme.deposit = match reward {
            Reward::Const => DepositKind::Constant {
                c: args.constant.unwrap_or(DEFAULT_CONSTANT_DEPOSIT),
            },
            Reward::Fitness => DepositKind::Fitness,
            Reward::L1 => DepositKind::L1 { gamma: g },
            Reward::L2 => DepositKind::L2 { gamma: g },
        };
    } else {
        match (&mut evo.scheme.deposit, args.gamma, args.constant) {
            (DepositKind::L1 { gamma } | DepositKind::L2 { gamma }, Some(g), _) => *gamma = g,
            (DepositKind::Constant { c }, _, Some(v)) => *c = v,
            _ => {}
        }
    }
    if let Some(v) = args.alpha {
        evo.scheme.alpha = v;
    }
    if let Some(v) = args.beta {
        evo.beta = v;
    }
    if let Some(v) = args.iterations {
        evo.max_iteration = v;
    }
    if let Some(v) = args.population {
        evo.population = v;
    }
    if let Some(v) = args.checkpoint_every {
        evo.checkpoint_every = v;
    }
    if let Some(v) = args.lamarck_gate {
        evo.lamarck_gate = v;
    }
    if let Some(v) = args.epochs {
        c.trainer.epochs = v;
    }
    if let Some(v) = args.repeats {
        c.repeats = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.workers {
        c.workers = v;
    }
    if let Some(v) = &args.name {
        c.name = v.clone();
    }
    if let Some(v) = &args.output {
        c.output = v.clone();
    }
    if let (Some(path), Some(target)) = (&args.csv, &args.target) {
        c.colony.input_width = asne_core::dataio::load_csv(path, target)?.input_width();
        c.data.source = DataSource::Csv {
            path: path.clone(),
            target: target.clone(),
        };
    }
    c.validate()?;
    Ok(c)
}

fn fmt_stats(label: &str, s: &Option<Stats>) -> String {
    match s {
        Some(s) => format!(
            "{label:<10} mean {:.6}  median {:.6}  best {:.6}  worst {:.6}  std {:.6}",
            s.mean, s.median, s.best, s.worst, s.std
        ),
        None => format!("{label:<10} n/a"),
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let config = load_config(&args.config)?;
    log::info!("running {} ({} repeats) into {}", config.name, config.repeats, config.output.display());
    let report = run_experiment(&config, &RunOptions { resume: args.resume })?;
    let s = &report.summary;
    println!("experiment {} -> {}", s.name, config.output.display());
    println!("{}", fmt_stats("fitness", &s.fitness));
    println!("{}", fmt_stats("nodes", &s.nodes));
    println!("{}", fmt_stats("edges", &s.edges));
    println!("{}", fmt_stats("rec_edges", &s.rec_edges));
    println!("{}", fmt_stats("reduce%", &s.reduce_percent));
    for f in &s.failed {
        eprintln!("warning: repeat {} failed: {}", f.repeat, f.error);
    }
    Ok(if report.partial_failure() { EXIT_PARTIAL } else { 0 })
}

fn cmd_grid(base: &ConfigArgs, out: &Path) -> Result<u8, Failure> {
    let config = load_config(base)?;
    let files = write_grid(&config, out)?;
    println!("wrote {} configs to {}", files.len(), out.display());
    Ok(0)
}

fn cmd_synth(args: &SynthArgs) -> Result<u8, Failure> {
    let spec = SynthSpec {
        kind: args.kind,
        length: args.length,
        width: args.width,
        noise: args.noise,
        seed: args.seed,
    };
    let series = synth_series(&spec)?;
    series.save_csv(&args.out)?;
    println!("wrote {} rows x {} columns to {}", series.len(), series.width(), args.out.display());
    Ok(0)
}

fn find_summaries(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let entries = std::fs::read_dir(path).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut children: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    children.sort();
    for child in children {
        if child.is_dir() {
            find_summaries(&child, out)?;
        } else if child.file_name().is_some_and(|n| n == "summary.json") {
            out.push(child);
        }
    }
    Ok(())
}

fn cmd_rank(inputs: &[PathBuf], top: &[usize], out: Option<&Path>) -> Result<u8, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        find_summaries(p, &mut files)?;
    }
    let mut records: Vec<RunRecord> = Vec::new();
    for f in &files {
        match ExperimentSummary::load(f)?.record() {
            Some(r) => records.push(r),
            None => log::warn!("{} has no successful repeat; skipped", f.display()),
        }
    }
    if records.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: "no experiment summaries with results found".into(),
        });
    }
    let csv = rank_heuristics(&records, top).to_csv();
    match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            println!("ranked {} experiments into {}", records.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn describe_genome(g: &RnnGenome) {
    println!("genome generation {} seed {}", g.generation, g.seed);
    println!(
        "nodes {}  edges {}  recurrent edges {}  weights {}",
        g.nodes.len(),
        g.forward_edges.len(),
        g.recurrent_edges.len(),
        g.weight_count()
    );
    let hist = g.cell_histogram();
    let cells: Vec<String> = asne_core::CellKind::ALL
        .iter()
        .zip(hist)
        .filter(|(_, n)| *n > 0)
        .map(|(k, n)| format!("{k} {n}"))
        .collect();
    println!("hidden cells: {}", if cells.is_empty() { "none".to_string() } else { cells.join(", ") });
    if let Some(f) = g.fitness {
        println!("fitness (MAE) {f:.6}  fitness-structure coefficient {:.6e}", fitness_structure_coefficient(f, g.weight_count().max(1)));
    }
}

fn describe_colony(c: &ColonySuperstructure) {
    let cfg = c.config();
    println!(
        "colony {} inputs, {}x{} hidden, {} outputs, max skip {}",
        cfg.input_width, cfg.hidden_layers, cfg.hidden_width, cfg.output_width, cfg.max_skip
    );
    println!(
        "nodes {}  forward edges {}  recurrent edges {}",
        c.node_count(),
        c.forward_edges().len(),
        c.recurrent_edges().len()
    );
    let levels: Vec<f64> = c.edge_refs().map(|e| c.pheromone(e)).collect();
    if let Some(s) = Stats::of(&levels) {
        println!("edge pheromone mean {:.4}  min {:.4}  max {:.4}", s.mean, s.best, s.worst);
    }
}

fn cmd_inspect(file: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::Io {
        path: file.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    if value.get("format").and_then(|f| f.as_str()) == Some(asne_core::evolution::CHECKPOINT_FORMAT) {
        let state = MasterState::from_json(&text)?;
        println!(
            "checkpoint: {} of {} results processed, {} in flight, {} failures",
            state.processed,
            state.config.max_iteration,
            state.in_flight.len(),
            state.failures()
        );
        println!("best so far {:.6}  population {}/{}", state.best_so_far(), state.population.len(), state.population.capacity());
        describe_colony(&state.colony);
        if let Some(best) = &state.best {
            describe_genome(best);
        }
    } else if value.get("output_layer").is_some() {
        let genome: RnnGenome = serde_json::from_value(value).map_err(Error::from)?;
        describe_genome(&genome);
    } else if value.get("recurrent_edges").is_some() {
        describe_colony(&ColonySuperstructure::from_json(&text)?);
    } else {
        return Err(Error::Format(format!("{} is not a genome, colony or checkpoint", file.display())).into());
    }
    Ok(0)
}

fn cmd_baseline(base: &ConfigArgs, count: usize) -> Result<u8, Failure> {
    let config = load_config(base)?;
    let report = baselines(&config, count)?;
    println!("constant-mean baseline MAE {:.6}", report.constant_mean);
    println!("random-topology median MAE {:.6} over {count} genomes", report.random.median);
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Grid { base, out } => cmd_grid(base, out),
        Command::Synth(args) => cmd_synth(args),
        Command::Rank { inputs, top, out } => cmd_rank(inputs, top, out.as_deref()),
        Command::Inspect { file } => cmd_inspect(file),
        Command::Baseline { base, count } => cmd_baseline(base, *count),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
