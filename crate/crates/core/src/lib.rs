//! Ant swarm neuro-evolution (ASNE) of recurrent neural networks.
//!
//! Ant agents walk a massively connected superstructure ([`colony`]), the
//! edges they pick are assembled into a candidate recurrent network
//! ([`traversal`]), the candidate is trained with backpropagation through
//! time ([`network`], [`cells`]) and its fitness is fed back into the colony
//! through pheromone deposits ([`pheromone`]) and Lamarckian weight
//! inheritance ([`evolution`]).

pub mod analysis;
pub mod cells;
pub mod colony;
pub mod dataio;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod genome;
pub mod network;
pub mod pheromone;
pub mod pool;
pub mod traversal;

pub use cells::{CellCache, CellKind, CellState};
pub use colony::{
    clamp_pheromone, ColonyConfig, ColonySuperstructure, EdgeMode, EdgeRef, JumpMode, NodeId,
    PheromoneBounds,
};
pub use dataio::{mae, Sequence, TimeSeries};
pub use error::{Error, Result};
pub use evolution::{compute_phi, EvolutionConfig, LamarckGate, MasterState, PhiMode, Population, RunOutcome};
pub use experiment::{ExperimentConfig, ExperimentSummary};
pub use genome::RnnGenome;
pub use network::{TrainerConfig, UnrolledPlan};
pub use pheromone::{DepositKind, PheromoneScheme};
pub use traversal::{AntSpeciesMode, AntWalk, SwarmConfig};

/// Seeded generator used everywhere a run must be reproducible.
pub type SearchRng = rand_chacha::ChaCha8Rng;

/// Uniform draw on `[-0.5, 0.5]`, the initial range for every colony weight.
pub(crate) fn uniform_weight<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() - 0.5
}
