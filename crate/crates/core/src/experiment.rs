//! Experiment configuration files, repeated runs and their summaries.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{constant_mean_baseline, random_topology_baseline, reduce_percent, HeuristicLabels, RandomBaseline, RunRecord, Stats};
use crate::colony::{ColonyConfig, JumpMode};
use crate::dataio::{self, min_max_normalize, Sequence, SynthSpec};
use crate::error::{Error, Result};
use crate::evolution::{master_loop, write_log, EvolutionConfig, LogRow, MasterState, PhiMode, RunControl};
use crate::network::TrainerConfig;
use crate::pheromone::{DepositKind, PheromoneScheme};
use crate::pool::{BpttEvaluator, Evaluator, SerialPool, ThreadPool, WorkerPool};
use crate::traversal::{AntSpeciesMode, SwarmConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    Csv { path: PathBuf, target: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Leading share of rows used for training; the rest validates.
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth(SynthSpec::default()),
            train_fraction: 0.5,
        }
    }
}

/// Normalized training and validation sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub train: Sequence,
    pub validation: Sequence,
    pub input_width: usize,
}

impl DataConfig {
    /// Loads or generates the series, normalizes every column to `[0, 1]`
    /// and splits it in time.
    pub fn prepare(&self) -> Result<PreparedData> {
        let series = match &self.source {
            DataSource::Synth(spec) => dataio::synth_series(spec)?,
            DataSource::Csv { path, target } => dataio::load_csv(path, target)?,
        };
        let (normalized, _) = min_max_normalize(&series);
        let (train, validation) = normalized.split(self.train_fraction)?;
        Ok(PreparedData {
            train: train.sequence(),
            validation: validation.sequence(),
            input_width: series.input_width(),
        })
    }
}

/// One experiment: a full search configuration run `repeats` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub repeats: usize,
    /// Worker threads per repeat. One worker gives a reproducible run.
    pub workers: usize,
    pub output: PathBuf,
    pub colony: ColonyConfig,
    pub evolution: EvolutionConfig,
    pub trainer: TrainerConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    /// The desk-scale setup: a 4-driver synthetic series, 40 explorer and
    /// forward-social ants with layer jumps, fitness-derived inheritance,
    /// L2 reward with gamma 0.9 and 200 genomes per repeat.
    fn default() -> Self {
        Self {
            name: "desk".to_string(),
            seed: 1,
            repeats: 10,
            workers: 1,
            output: PathBuf::from("runs/desk"),
            colony: ColonyConfig {
                input_width: 4,
                ..ColonyConfig::default()
            },
            evolution: EvolutionConfig {
                swarm: SwarmConfig {
                    ants: 40,
                    species: AntSpeciesMode::ExplorerForward,
                    jump: JumpMode::LayerJump,
                },
                scheme: PheromoneScheme {
                    deposit: DepositKind::L2 { gamma: 0.9 },
                    alpha: 0.05,
                },
                phi: PhiMode::Function,
                max_iteration: 200,
                ..EvolutionConfig::default()
            },
            trainer: TrainerConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.workers == 0 {
            return Err(Error::config("repeats and workers must be at least 1"));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        self.colony.validate()?;
        self.evolution.validate()?;
        self.trainer.validate()?;
        Ok(())
    }

    /// Parses a config file. Keys it omits keep their [`Default`] values,
    /// including keys inside tables it does mention.
    pub fn from_toml(text: &str) -> Result<Self> {
        let err = |e: &dyn std::fmt::Display| Error::config(format!("config: {e}"));
        let given: toml::Table = toml::from_str(text).map_err(|e| err(&e))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| err(&e))?;
        if let Some(toml::Value::Table(data)) = given.get("data") {
            // a different data source shares no keys with the default one
            if data.get("source") != merged["data"].get("source") {
                merged.remove("data");
            }
        }
        merge_tables(&mut merged, given);
        merged.try_into().map_err(|e| err(&e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn labels(&self) -> HeuristicLabels {
        HeuristicLabels::new(&self.evolution.swarm, self.evolution.phi, &self.evolution.scheme.deposit)
    }

    pub fn repeat_dir(&self, repeat: usize) -> PathBuf {
        self.output.join(format!("repeat_{repeat:02}"))
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub best_fitness: f64,
    pub nodes: usize,
    pub edges: usize,
    pub rec_edges: usize,
    pub weights: usize,
    pub failures: u64,
    pub processed: u64,
}

impl RepeatResult {
    /// Recomputes the result from a repeat's fitness log: the first row
    /// reaching the lowest fitness describes the best genome.
    pub fn from_log(repeat: usize, seed: u64, rows: &[LogRow]) -> Option<Self> {
        let best = rows
            .iter()
            .filter(|r| r.fitness.is_finite())
            .reduce(|a, b| if b.fitness < a.fitness { b } else { a })?;
        Some(Self {
            repeat,
            seed,
            best_fitness: best.fitness,
            nodes: best.nodes,
            edges: best.edges,
            rec_edges: best.rec_edges,
            weights: best.weights,
            failures: rows.iter().filter(|r| !r.fitness.is_finite()).count() as u64,
            processed: rows.len() as u64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub labels: HeuristicLabels,
    pub repeats: usize,
    pub failed: Vec<RepeatFailure>,
    /// Final best validation MAE over the successful repeats.
    pub fitness: Option<Stats>,
    pub nodes: Option<Stats>,
    pub edges: Option<Stats>,
    pub rec_edges: Option<Stats>,
    pub weights: Option<Stats>,
    /// Share of colony edges absent from each best genome, in percent.
    pub reduce_percent: Option<Stats>,
    pub colony_edges: usize,
    pub per_repeat: Vec<RepeatResult>,
}

impl ExperimentSummary {
    pub fn build(config: &ExperimentConfig, results: Vec<RepeatResult>, failed: Vec<RepeatFailure>) -> Self {
        let colony_edges = config.colony.forward_edge_count() + config.colony.recurrent_edge_count();
        let stat = |f: &dyn Fn(&RepeatResult) -> f64| Stats::of(&results.iter().map(f).collect::<Vec<_>>());
        Self {
            name: config.name.clone(),
            labels: config.labels(),
            repeats: config.repeats,
            failed,
            fitness: stat(&|r| r.best_fitness),
            nodes: stat(&|r| r.nodes as f64),
            edges: stat(&|r| r.edges as f64),
            rec_edges: stat(&|r| r.rec_edges as f64),
            weights: stat(&|r| r.weights as f64),
            reduce_percent: stat(&|r| reduce_percent(r.edges + r.rec_edges, colony_edges)),
            colony_edges,
            per_repeat: results,
        }
    }

    pub fn record(&self) -> Option<RunRecord> {
        let f = self.fitness?;
        Some(RunRecord {
            name: self.name.clone(),
            labels: self.labels.clone(),
            mean: f.mean,
            median: f.median,
            best: f.best,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from existing repeat checkpoints instead of starting over.
    pub resume: bool,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pool_for(evaluator: Arc<dyn Evaluator>, workers: usize) -> Box<dyn WorkerPool> {
    if workers == 1 {
        Box::new(SerialPool::new(evaluator))
    } else {
        Box::new(ThreadPool::new(evaluator, workers))
    }
}

fn run_repeat(config: &ExperimentConfig, data: &PreparedData, repeat: usize, options: &RunOptions) -> Result<RepeatResult> {
    let dir = config.repeat_dir(repeat);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let checkpoint = dir.join("checkpoint.json");
    let seed = config.seed + repeat as u64;
    let mut state = if options.resume && checkpoint.exists() {
        let state = MasterState::load(&checkpoint)?;
        if state.config != config.evolution || *state.colony.config() != config.colony {
            return Err(Error::config(format!(
                "{} was written with a different configuration",
                checkpoint.display()
            )));
        }
        state
    } else {
        MasterState::new(config.colony.clone(), config.evolution.clone(), seed)?
    };
    let evaluator: Arc<dyn Evaluator> = Arc::new(BpttEvaluator {
        train: data.train.clone(),
        validation: data.validation.clone(),
        config: config.trainer.clone(),
    });
    let mut pool = pool_for(evaluator, config.workers);
    let control = RunControl {
        checkpoint: Some(checkpoint),
        stop_after: None,
    };
    master_loop(&mut state, pool.as_mut(), &control)?;

    let log_path = dir.join("log.csv");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_log(&state.log, std::io::BufWriter::new(file))?;
    if let Some(best) = &state.best {
        write_file(&dir.join("best_genome.json"), &best.to_json()?)?;
    }
    RepeatResult::from_log(repeat, seed, &state.log)
        .ok_or_else(|| Error::config(format!("repeat {repeat}: every genome failed")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub summary: ExperimentSummary,
    /// Best-so-far trace of each repeat, `None` for failed repeats.
    pub traces: Vec<Option<Vec<f64>>>,
}

impl ExperimentReport {
    pub fn partial_failure(&self) -> bool {
        !self.summary.failed.is_empty()
    }
}

/// Runs every repeat (in parallel, each with its own master) and writes
/// per-repeat logs, best genomes and checkpoints, `summary.json`, and
/// gnuplot files into `config.output`.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let data = config.data.prepare()?;
    if data.input_width != config.colony.input_width {
        return Err(Error::config(format!(
            "colony has {} inputs but the data has {} input columns",
            config.colony.input_width, data.input_width
        )));
    }
    std::fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    write_file(&config.output.join("config.toml"), &config.to_toml()?)?;

    let outcomes: Vec<Result<RepeatResult>> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(config, &data, r, options))
        .collect();
    let mut results = Vec::new();
    let mut failed = Vec::new();
    let mut traces = Vec::new();
    for (repeat, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(result) => {
                let log = read_log(&config.repeat_dir(repeat).join("log.csv"))?;
                traces.push(Some(log.iter().map(|r| r.best_so_far).collect()));
                results.push(result);
            }
            Err(e) => {
                log::warn!("repeat {repeat} failed: {e}");
                failed.push(RepeatFailure {
                    repeat,
                    error: e.to_string(),
                });
                traces.push(None);
            }
        }
    }
    let summary = ExperimentSummary::build(config, results, failed);
    write_file(&config.output.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    write_plot_files(&config.output, &traces)?;
    Ok(ExperimentReport { summary, traces })
}

/// Reads a fitness log written by a repeat.
pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(std::io::BufReader::new(file))
}

pub fn parse_log<R: std::io::Read>(reader: R) -> Result<Vec<LogRow>> {
    let bad = |what: &str| Error::Format(format!("log: bad {what}"));
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record.map_err(|e| Error::Format(format!("log: {e}")))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("row length"));
        let num = |i: usize| -> Result<u64> { field(i)?.parse().map_err(|_| bad("integer")) };
        let real = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|_| bad("number")) };
        let status = match field(8)? {
            "inserted" => crate::evolution::GenomeStatus::Inserted,
            "rejected" => crate::evolution::GenomeStatus::Rejected,
            "failed" => crate::evolution::GenomeStatus::Failed,
            "no_path" => crate::evolution::GenomeStatus::NoPath,
            _ => return Err(bad("status")),
        };
        let mut cells = [0usize; crate::cells::CellKind::COUNT];
        for (k, c) in cells.iter_mut().enumerate() {
            *c = num(9 + k)? as usize;
        }
        rows.push(LogRow {
            generation: num(0)?,
            order: num(1)?,
            fitness: real(2)?,
            best_so_far: real(3)?,
            nodes: num(4)? as usize,
            edges: num(5)? as usize,
            rec_edges: num(6)? as usize,
            weights: num(7)? as usize,
            status,
            cells,
        });
    }
    Ok(rows)
}

fn write_plot_files(dir: &Path, traces: &[Option<Vec<f64>>]) -> Result<()> {
    let len = traces.iter().flatten().map(Vec::len).max().unwrap_or(0);
    let mut dat = String::from("# order");
    for (i, t) in traces.iter().enumerate() {
        if t.is_some() {
            dat.push_str(&format!(" repeat_{i:02}"));
        }
    }
    dat.push('\n');
    for step in 0..len {
        dat.push_str(&step.to_string());
        for t in traces.iter().flatten() {
            match t.get(step) {
                Some(v) if v.is_finite() => dat.push_str(&format!(" {v}")),
                _ => dat.push_str(" NaN"),
            }
        }
        dat.push('\n');
    }
    write_file(&dir.join("fitness.dat"), &dat)?;
    let columns = traces.iter().flatten().count();
    let script = format!(
        "set datafile missing \"NaN\"\n\
         set xlabel \"genomes processed\"\n\
         set ylabel \"best validation MAE\"\n\
         set key outside\n\
         set terminal pngcairo size 900,600\n\
         set output \"fitness.png\"\n\
         plot for [i=2:{}] \"fitness.dat\" using 1:i with lines title columnheader(i)\n",
        columns + 1
    );
    write_file(&dir.join("plot.gp"), &script)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    /// Validation MAE of predicting the validation mean.
    pub constant_mean: f64,
    pub random: RandomBaseline,
}

/// Both reference baselines for a configuration's data: the constant-mean
/// predictor and `count` random-topology genomes trained like the search.
pub fn baselines(config: &ExperimentConfig, count: usize) -> Result<BaselineReport> {
    let data = config.data.prepare()?;
    let random = random_topology_baseline(
        &config.colony,
        &config.evolution.swarm,
        &config.trainer,
        &data.train,
        &data.validation,
        count,
        config.seed,
    )?;
    Ok(BaselineReport {
        constant_mean: constant_mean_baseline(&data.validation.targets),
        random,
    })
}

pub const GRID_ANTS: [usize; 4] = [20, 40, 80, 160];
pub const GRID_GAMMA: [f64; 3] = [0.25, 0.65, 0.9];
pub const GRID_PHI: [&str; 5] = ["fn", "0.3", "0.6", "0.9", "off"];
/// Pheromone added per reward by the constant scheme.
pub const DEFAULT_CONSTANT_DEPOSIT: f64 = 0.15;

/// Every reward scheme of the grid.
pub fn grid_rewards() -> Vec<DepositKind> {
    let mut out = vec![
        DepositKind::Constant { c: DEFAULT_CONSTANT_DEPOSIT },
        DepositKind::Fitness,
    ];
    out.extend(GRID_GAMMA.iter().map(|&gamma| DepositKind::L1 { gamma }));
    out.extend(GRID_GAMMA.iter().map(|&gamma| DepositKind::L2 { gamma }));
    out
}

/// Expands the Cartesian product of ant counts, reward schemes, phi modes,
/// species and jump modes around `base`. Each experiment writes below
/// `base.output/<name>`.
pub fn expand_grid(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for ants in GRID_ANTS {
        for reward in grid_rewards() {
            for phi in GRID_PHI {
                for species in AntSpeciesMode::ALL {
                    for jump in [JumpMode::LayerJump, JumpMode::NoJump] {
                        let mut c = base.clone();
                        c.evolution.swarm = SwarmConfig { ants, species, jump };
                        c.evolution.scheme.deposit = reward;
                        c.evolution.phi = phi.parse().expect("grid phi labels parse");
                        c.name = format!("a{ants}_{}_{}_phi{}_{}", species.label(), jump.label(), phi, reward.label());
                        c.output = base.output.join(&c.name);
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

/// Writes one TOML file per grid experiment into `dir`.
pub fn write_grid(base: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    expand_grid(base)
        .iter()
        .map(|c| {
            let path = dir.join(format!("{}.toml", c.name));
            write_file(&path, &c.to_toml()?)?;
            Ok(path)
        })
        .collect()
}
