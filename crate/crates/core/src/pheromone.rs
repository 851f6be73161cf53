//! Pheromone deposit schemes, evaporation toward the baseline level and the
//! forward-connection bias that keeps standard ants from circling through
//! recurrent edges.

use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::colony::{ColonySuperstructure, EdgeRef};
use crate::error::{Error, Result};

/// Floor applied to `fitness + regularizer` before taking its reciprocal.
pub const RECIPROCAL_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DepositKind {
    #[serde(rename = "const")]
    Constant { c: f64 },
    Fitness,
    L1 { gamma: f64 },
    L2 { gamma: f64 },
}

impl DepositKind {
    pub fn label(&self) -> String {
        match self {
            DepositKind::Constant { .. } => "const".into(),
            DepositKind::Fitness => "fitness".into(),
            DepositKind::L1 { gamma } => format!("l1_{gamma}"),
            DepositKind::L2 { gamma } => format!("l2_{gamma}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PheromoneScheme {
    pub deposit: DepositKind,
    /// Decay parameter of the fitness-driven schemes.
    pub alpha: f64,
}

impl Default for PheromoneScheme {
    fn default() -> Self {
        Self {
            deposit: DepositKind::Fitness,
            alpha: 0.05,
        }
    }
}

impl PheromoneScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        match self.deposit {
            DepositKind::Constant { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::config(format!("deposit constant must be positive, got {c}")))
            }
            DepositKind::L1 { gamma } | DepositKind::L2 { gamma } if !(gamma >= 0.0 && gamma.is_finite()) => {
                Err(Error::config(format!("gamma must be non-negative, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Regularizer added to the fitness before the reciprocal. `weights` is the
    /// trained genome's full weight vector and `n = weights.len()`.
    pub fn regularizer(&self, weights: &[f64]) -> f64 {
        let n = weights.len().max(1) as f64;
        match self.deposit {
            DepositKind::L1 { gamma } => gamma / n * weights.iter().map(|w| w.abs()).sum::<f64>(),
            DepositKind::L2 { gamma } => gamma / (2.0 * n) * weights.iter().map(|w| w * w).sum::<f64>(),
            _ => 0.0,
        }
    }

    /// New pheromone level for a rewarded edge, before clamping.
    pub fn deposit(&self, tau_old: f64, fitness: f64, weights: &[f64]) -> f64 {
        match self.deposit {
            DepositKind::Constant { c } => tau_old + c,
            _ => {
                let denom = (fitness + self.regularizer(weights)).max(RECIPROCAL_FLOOR);
                (1.0 - self.alpha) * tau_old + self.alpha / denom
            }
        }
    }
}

/// The minus branch of the constant scheme, before clamping.
pub fn penalize_constant(tau_old: f64, c: f64) -> f64 {
    tau_old - c
}

/// Relaxes `tau_current` toward `tau_original` at rate `beta`.
pub fn evaporate(tau_current: f64, tau_original: f64, beta: f64) -> f64 {
    (1.0 - beta) * tau_current + beta * tau_original
}

/// Evaporates every edge and every cell-kind pheromone of the colony toward
/// the colony's initial level.
pub fn evaporate_colony(colony: &mut ColonySuperstructure, beta: f64) {
    let baseline = colony.config().tau_init;
    let edges: Vec<EdgeRef> = colony.edge_refs().collect();
    for edge in edges {
        let level = evaporate(colony.pheromone(edge), baseline, beta);
        colony.set_pheromone(edge, level);
    }
    for node in 0..colony.node_count() {
        for kind in CellKind::ALL {
            let level = evaporate(colony.cell_pheromone(node, kind), baseline, beta);
            colony.set_cell_pheromone(node, kind, level);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BiasReport {
    pub nodes_adjusted: Vec<usize>,
}

/// Forward-connection bias. A node is flagged when its forward pheromone total
/// is below 0.75 of its recurrent total, or when it has more recurrent than
/// forward out-edges. Flagged nodes get their forward pheromones rescaled
/// proportionally so the forward total equals the recurrent total.
///
/// Every recurrent edge leaving a node counts as a backward (in time) edge.
pub fn apply_forward_bias(colony: &mut ColonySuperstructure) -> BiasReport {
    let mut report = BiasReport::default();
    for node in 0..colony.node_count() {
        let forward = colony.forward_out(node).to_vec();
        if forward.is_empty() {
            continue;
        }
        let fwd_total: f64 = forward.iter().map(|&e| colony.pheromone(EdgeRef::Forward(e))).sum();
        let recurrent = colony.recurrent_out(node);
        let bwd_count = recurrent.len();
        let bwd_total: f64 = recurrent.map(|e| colony.pheromone(EdgeRef::Recurrent(e))).sum();

        if fwd_total < 0.75 * bwd_total || bwd_count > forward.len() {
            for e in forward {
                let edge = EdgeRef::Forward(e);
                let level = colony.pheromone(edge) / fwd_total * bwd_total;
                colony.set_pheromone(edge, level);
            }
            report.nodes_adjusted.push(node);
        }
    }
    report
}
