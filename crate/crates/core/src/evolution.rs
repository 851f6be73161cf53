//! The master loop: generate genomes, hand them to workers, and fold each
//! trained result back into the population and the colony.
//!
//! Results are processed in arrival order. For every result the master
//! inserts it into the population when it qualifies, rewards its path,
//! blends its weights into the colony, optionally re-applies the forward
//! bias, and evaporates on the configured cadence.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::colony::{ColonyConfig, ColonySuperstructure, EdgeRef};
use crate::error::{Error, Result};
use crate::genome::RnnGenome;
use crate::pheromone::{apply_forward_bias, evaporate_colony, PheromoneScheme};
use crate::pool::{Evaluator, Job, JobResult, WorkerPool};
use crate::traversal::{generate_genome, SwarmConfig};
use crate::SearchRng;

pub const CHECKPOINT_FORMAT: &str = "asne-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// How much of a trained genome's weights flow back into the colony.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PhiMode {
    /// Derived from the genome's fitness relative to the population.
    Function,
    Constant(f64),
    /// No inheritance; genomes start from fresh random weights.
    Disabled,
}

impl PhiMode {
    pub fn enabled(self) -> bool {
        self != PhiMode::Disabled
    }

    pub fn label(self) -> String {
        match self {
            PhiMode::Function => "fn".into(),
            PhiMode::Constant(v) => v.to_string(),
            PhiMode::Disabled => "off".into(),
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            PhiMode::Constant(v) if !(v > 0.0 && v <= 1.0) => {
                Err(Error::config(format!("constant phi must lie in (0, 1], got {v}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for PhiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for PhiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mode = match s.trim().to_ascii_lowercase().as_str() {
            "fn" | "function" => PhiMode::Function,
            "off" | "none" | "disabled" => PhiMode::Disabled,
            number => PhiMode::Constant(
                number
                    .parse()
                    .map_err(|_| Error::config(format!("phi must be fn, off or a number, got '{s}'")))?,
            ),
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl TryFrom<String> for PhiMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PhiMode> for String {
    fn from(m: PhiMode) -> String {
        m.label()
    }
}

/// When a trained genome's weights are blended into the colony.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LamarckGate {
    /// Only genomes that enter the population.
    Population,
    /// Every trained genome.
    Always,
}

impl std::str::FromStr for LamarckGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(LamarckGate::Population),
            "always" => Ok(LamarckGate::Always),
            other => Err(Error::config(format!("lamarck gate must be population or always, got '{other}'"))),
        }
    }
}

/// `x = (new - best) / (worst - best)`, `phi = clamp(1 - x, 0, 1)`; a
/// population whose best equals its worst gives 1.
pub fn compute_phi(fit_new: f64, fit_best: f64, fit_worst: f64) -> f64 {
    let spread = fit_worst - fit_best;
    if spread <= 0.0 {
        return 1.0;
    }
    let x = (fit_new - fit_best) / spread;
    (1.0 - x).clamp(0.0, 1.0)
}

/// `phi * new + (1 - phi) * old`, kept inside the closed interval between
/// the two even under rounding.
pub fn blend(old: f64, new: f64, phi: f64) -> f64 {
    let mixed = phi * new + (1.0 - phi) * old;
    mixed.clamp(old.min(new), old.max(new))
}

/// Members sorted by ascending fitness; ties keep insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    capacity: usize,
    members: Vec<RnnGenome>,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "population capacity must be positive");
        Self {
            capacity,
            members: Vec::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    pub fn members(&self) -> &[RnnGenome] {
        &self.members
    }

    fn fitness_of(g: &RnnGenome) -> f64 {
        g.fitness.expect("population members carry a fitness")
    }

    pub fn best(&self) -> Option<&RnnGenome> {
        self.members.first()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.members.first().map(Self::fitness_of)
    }

    pub fn worst_fitness(&self) -> Option<f64> {
        self.members.last().map(Self::fitness_of)
    }

    /// Whether a genome with `fitness` would be admitted.
    pub fn admits(&self, fitness: f64) -> bool {
        fitness.is_finite() && (!self.is_full() || self.worst_fitness().is_some_and(|w| fitness < w))
    }

    /// Inserts when the population has room or the genome beats the worst
    /// member, evicting the worst. Returns whether it was inserted.
    pub fn try_insert(&mut self, genome: RnnGenome) -> bool {
        let Some(fitness) = genome.fitness else {
            return false;
        };
        if !self.admits(fitness) {
            return false;
        }
        let at = self.members.partition_point(|m| Self::fitness_of(m) <= fitness);
        self.members.insert(at, genome);
        self.members.truncate(self.capacity);
        true
    }

    /// Sorted, within capacity, every fitness finite.
    pub fn check_invariants(&self) -> bool {
        self.members.len() <= self.capacity
            && self.members.iter().all(|m| m.fitness.is_some_and(f64::is_finite))
            && self.members.windows(2).all(|w| Self::fitness_of(&w[0]) <= Self::fitness_of(&w[1]))
    }
}

fn colony_edges(colony: &ColonySuperstructure, genome: &RnnGenome) -> Vec<EdgeRef> {
    let idx = |id| colony.node_index(id).expect("genome nodes come from the colony");
    let forward = genome.forward_edges.iter().map(|e| {
        EdgeRef::Forward(colony.forward_edge_between(idx(e.src), idx(e.dst)).expect("genome edge in colony"))
    });
    let recurrent = genome.recurrent_edges.iter().map(|e| {
        EdgeRef::Recurrent(
            colony
                .recurrent_edge_between(idx(e.src), idx(e.dst), e.skip)
                .expect("genome edge in colony"),
        )
    });
    forward.chain(recurrent).collect()
}

/// Counts of colony entries touched by an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub edges: usize,
    pub nodes: usize,
}

/// Deposits pheromone on every edge of `genome` and on the cell kind each
/// of its hidden nodes uses.
pub fn reward_paths(colony: &mut ColonySuperstructure, genome: &RnnGenome, scheme: &PheromoneScheme) -> UpdateReport {
    let fitness = genome.fitness.expect("rewarded genomes are trained");
    let weights = genome.parameters();
    let edges = colony_edges(colony, genome);
    for &edge in &edges {
        let level = scheme.deposit(colony.pheromone(edge), fitness, &weights);
        colony.set_pheromone(edge, level);
    }
    let mut nodes = 0;
    for n in &genome.nodes {
        if genome.is_input(n.id) || genome.is_output(n.id) {
            continue;
        }
        let idx = colony.node_index(n.id).expect("genome nodes come from the colony");
        let level = scheme.deposit(colony.cell_pheromone(idx, n.kind), fitness, &weights);
        colony.set_cell_pheromone(idx, n.kind, level);
        nodes += 1;
    }
    UpdateReport {
        edges: edges.len(),
        nodes,
    }
}

/// Blends the genome's trained edge weights and cell parameters into the
/// colony: `W_colony = phi * W_genome + (1 - phi) * W_colony`.
pub fn lamarck_update(colony: &mut ColonySuperstructure, genome: &RnnGenome, phi: f64) -> UpdateReport {
    let edges = colony_edges(colony, genome);
    let weights = genome
        .forward_edges
        .iter()
        .map(|e| e.weight)
        .chain(genome.recurrent_edges.iter().map(|e| e.weight));
    for (edge, w) in edges.iter().zip(weights) {
        let mixed = blend(colony.lamarck_weight(*edge), w, phi);
        colony.set_lamarck_weight(*edge, mixed);
    }
    let mut nodes = 0;
    for n in genome.nodes.iter().filter(|n| !n.params.is_empty()) {
        let idx = colony.node_index(n.id).expect("genome nodes come from the colony");
        if let Some(stored) = colony.cell_params_mut(idx, n.kind) {
            for (c, &g) in stored.iter_mut().zip(&n.params) {
                *c = blend(*c, g, phi);
            }
            nodes += 1;
        }
    }
    UpdateReport {
        edges: edges.len(),
        nodes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub swarm: SwarmConfig,
    pub scheme: PheromoneScheme,
    pub phi: PhiMode,
    pub lamarck_gate: LamarckGate,
    /// Evaporation rate.
    pub beta: f64,
    /// Evaporate after every this many processed results.
    pub evaporation_every: u64,
    pub population: usize,
    pub max_iteration: u64,
    /// Write a checkpoint after every this many processed results.
    pub checkpoint_every: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            swarm: SwarmConfig::default(),
            scheme: PheromoneScheme::default(),
            phi: PhiMode::Function,
            lamarck_gate: LamarckGate::Population,
            beta: 0.1,
            evaporation_every: 1,
            population: 20,
            max_iteration: 2000,
            checkpoint_every: 100,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        self.swarm.validate()?;
        self.scheme.validate()?;
        self.phi.validate()?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.population == 0 || self.evaporation_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("population, evaporation cadence and checkpoint cadence must be positive"));
        }
        if self.max_iteration == 0 {
            return Err(Error::config("max_iteration must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenomeStatus {
    Inserted,
    Rejected,
    /// Training failed or diverged.
    Failed,
    /// No swarm produced a connected genome.
    NoPath,
}

impl GenomeStatus {
    pub fn label(self) -> &'static str {
        match self {
            GenomeStatus::Inserted => "inserted",
            GenomeStatus::Rejected => "rejected",
            GenomeStatus::Failed => "failed",
            GenomeStatus::NoPath => "no_path",
        }
    }
}

/// One line of the fitness log, written per processed genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    /// Generation index of the genome.
    pub generation: u64,
    /// Position in arrival order.
    pub order: u64,
    pub fitness: f64,
    pub best_so_far: f64,
    pub nodes: usize,
    pub edges: usize,
    pub rec_edges: usize,
    pub weights: usize,
    pub status: GenomeStatus,
    pub cells: [usize; CellKind::COUNT],
}

pub const LOG_HEADER: [&str; 15] = [
    "generation",
    "order",
    "fitness",
    "best_so_far",
    "nodes",
    "edges",
    "rec_edges",
    "weights",
    "status",
    "simple",
    "delta",
    "gru",
    "lstm",
    "mgu",
    "ugrnn",
];

impl LogRow {
    pub fn record(&self) -> Vec<String> {
        let mut out = vec![
            self.generation.to_string(),
            self.order.to_string(),
            self.fitness.to_string(),
            self.best_so_far.to_string(),
            self.nodes.to_string(),
            self.edges.to_string(),
            self.rec_edges.to_string(),
            self.weights.to_string(),
            self.status.label().to_string(),
        ];
        out.extend(self.cells.iter().map(|c| c.to_string()));
        out
    }
}

pub fn write_log<W: std::io::Write>(rows: &[LogRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Format(format!("log: {e}"));
    w.write_record(LOG_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.record()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("log: {e}")))?;
    Ok(())
}

/// Everything the master owns; serializes to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterState {
    pub format: String,
    pub version: u32,
    pub config: EvolutionConfig,
    pub colony: ColonySuperstructure,
    pub population: Population,
    pub rng: SearchRng,
    /// Genomes generated so far.
    pub generated: u64,
    /// Results processed so far.
    pub processed: u64,
    /// Genomes handed to workers whose results have not been processed.
    pub in_flight: Vec<RnnGenome>,
    pub log: Vec<LogRow>,
    /// Best genome ever seen; survives even if later evicted.
    pub best: Option<RnnGenome>,
}

/// Stops and checkpoints for a master-loop call.
#[derive(Clone, Debug, Default)]
pub struct RunControl {
    pub checkpoint: Option<std::path::PathBuf>,
    /// Return once this many results have been processed, leaving the rest.
    pub stop_after: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub best: Option<RnnGenome>,
    pub best_fitness: f64,
    pub processed: u64,
    pub failures: u64,
    /// All `max_iteration` results were processed.
    pub complete: bool,
}

impl MasterState {
    /// Builds the colony from `seed`; the same generator then drives genome seeds.
    pub fn new(colony_config: ColonyConfig, config: EvolutionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SearchRng::seed_from_u64(seed);
        let mut colony = ColonySuperstructure::build(colony_config, &mut rng)?;
        if config.swarm.species.uses_forward_bias() {
            apply_forward_bias(&mut colony);
        }
        Ok(Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            population: Population::new(config.population),
            config,
            colony,
            rng,
            generated: 0,
            processed: 0,
            in_flight: Vec::new(),
            log: Vec::new(),
            best: None,
        })
    }

    pub fn best_so_far(&self) -> f64 {
        self.log.last().map_or(f64::INFINITY, |r| r.best_so_far)
    }

    pub fn failures(&self) -> u64 {
        self.log
            .iter()
            .filter(|r| matches!(r.status, GenomeStatus::Failed | GenomeStatus::NoPath))
            .count() as u64
    }

    pub fn outcome(&self) -> RunOutcome {
        RunOutcome {
            best: self.best.clone(),
            best_fitness: self.best_so_far(),
            processed: self.processed,
            failures: self.failures(),
            complete: self.processed >= self.config.max_iteration,
        }
    }

    /// Generates the next genome. `Err` carries a ready-made failure result.
    fn spawn(&mut self) -> std::result::Result<Job, JobResult> {
        let generation = self.generated;
        self.generated += 1;
        let seed = self.rng.next_u64();
        match generate_genome(
            &self.colony,
            &self.config.swarm,
            self.config.phi.enabled(),
            generation,
            seed,
        ) {
            Ok(genome) => Ok(Job { id: generation, genome }),
            Err(e) => Err(JobResult {
                id: generation,
                outcome: Err(format!("no_path: {e}")),
            }),
        }
    }

    /// Folds one result into the population and colony and appends a log row.
    pub fn process(&mut self, result: JobResult) -> &LogRow {
        let order = self.processed;
        self.processed += 1;
        let submitted = self.in_flight.iter().position(|g| g.generation == result.id);
        let submitted = submitted.map(|i| self.in_flight.remove(i));
        let config = self.config.clone();

        let (fitness, status, shape) = match result.outcome {
            Ok(trained) if trained.fitness.is_finite() => {
                let mut genome = trained.genome;
                genome.fitness = Some(trained.fitness);
                let phi = match config.phi {
                    PhiMode::Function => match (self.population.best_fitness(), self.population.worst_fitness()) {
                        (Some(best), Some(worst)) => compute_phi(trained.fitness, best, worst),
                        _ => 1.0,
                    },
                    PhiMode::Constant(v) => v,
                    PhiMode::Disabled => 0.0,
                };
                let inserted = self.population.try_insert(genome.clone());
                if inserted {
                    reward_paths(&mut self.colony, &genome, &config.scheme);
                }
                if config.phi.enabled() && (inserted || config.lamarck_gate == LamarckGate::Always) {
                    lamarck_update(&mut self.colony, &genome, phi);
                }
                if self.best.as_ref().and_then(|b| b.fitness).is_none_or(|b| trained.fitness < b) {
                    self.best = Some(genome.clone());
                }
                let status = if inserted { GenomeStatus::Inserted } else { GenomeStatus::Rejected };
                (trained.fitness, status, Some(genome))
            }
            Ok(trained) => (f64::INFINITY, GenomeStatus::Failed, Some(trained.genome)),
            Err(msg) => {
                let status = if msg.starts_with("no_path") { GenomeStatus::NoPath } else { GenomeStatus::Failed };
                log::debug!("genome {} failed: {msg}", result.id);
                (f64::INFINITY, status, submitted)
            }
        };
        if config.swarm.species.uses_forward_bias() {
            apply_forward_bias(&mut self.colony);
        }
        if self.processed.is_multiple_of(config.evaporation_every) {
            evaporate_colony(&mut self.colony, config.beta);
        }

        let (nodes, edges, rec_edges, weights, cells) = shape.as_ref().map_or((0, 0, 0, 0, [0; CellKind::COUNT]), |g| {
            (g.nodes.len(), g.forward_edges.len(), g.recurrent_edges.len(), g.weight_count(), g.cell_histogram())
        });
        let best_so_far = self.best_so_far().min(fitness);
        self.log.push(LogRow {
            generation: result.id,
            order,
            fitness,
            best_so_far,
            nodes,
            edges,
            rec_edges,
            weights,
            status,
            cells,
        });
        self.log.last().expect("just pushed")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: MasterState = serde_json::from_str(text)?;
        if state.format != CHECKPOINT_FORMAT || state.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                state.format, state.version
            )));
        }
        Ok(state)
    }

    /// Writes the checkpoint through a temporary file and a rename, so a
    /// crash never leaves a half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let json = self.to_json()?;
        let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(json.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Runs the asynchronous master loop until `max_iteration` results are in
/// (or `control.stop_after`). Genomes in `state.in_flight` from a resumed
/// checkpoint are resubmitted first.
pub fn master_loop(state: &mut MasterState, pool: &mut dyn WorkerPool, control: &RunControl) -> Result<RunOutcome> {
    let max = state.config.max_iteration;
    for genome in state.in_flight.clone() {
        pool.submit(Job {
            id: genome.generation,
            genome,
        });
    }
    let stop = control.stop_after.unwrap_or(u64::MAX);
    let handle = |state: &mut MasterState, result: JobResult| -> Result<bool> {
        state.process(result);
        if let Some(path) = &control.checkpoint {
            if state.processed.is_multiple_of(state.config.checkpoint_every) || state.processed == max {
                state.save(path)?;
            }
        }
        Ok(state.processed >= stop)
    };
    'outer: loop {
        while state.generated < max && pool.in_flight() < pool.workers() {
            match state.spawn() {
                Ok(job) => {
                    state.in_flight.push(job.genome.clone());
                    pool.submit(job);
                }
                Err(failed) => {
                    if handle(state, failed)? {
                        break 'outer;
                    }
                }
            }
        }
        let Some(result) = pool.next_result() else {
            break;
        };
        if handle(state, result)? {
            break;
        }
    }
    Ok(state.outcome())
}

/// The plain sequential loop: generate, evaluate, process. Used as the
/// reference the pooled loop must reproduce with one worker.
pub fn reference_loop(state: &mut MasterState, evaluator: &dyn Evaluator) -> RunOutcome {
    while state.generated < state.config.max_iteration {
        let result = match state.spawn() {
            Ok(job) => JobResult {
                id: job.id,
                outcome: evaluator.evaluate(&job.genome),
            },
            Err(failed) => failed,
        };
        state.process(result);
    }
    state.outcome()
}

/// Convenience wrapper: a fresh run on the given pool.
pub fn run(
    colony_config: ColonyConfig,
    config: EvolutionConfig,
    seed: u64,
    pool: &mut dyn WorkerPool,
) -> Result<(MasterState, RunOutcome)> {
    let mut state = MasterState::new(colony_config, config, seed)?;
    let outcome = master_loop(&mut state, pool, &RunControl::default())?;
    Ok((state, outcome))
}

/// Shared-pointer alias used by pools.
pub type SharedEvaluator = Arc<dyn Evaluator>;
