//! Executing and training a genome as a graph RNN.
//!
//! Every timestep evaluates the genome's nodes in topological order over the
//! forward edges. A node's cell input is the weighted sum of its forward
//! predecessors at `t` and of its recurrent predecessors at `t - skip` (zero
//! before the sequence starts). Gradients come from full-sequence BPTT of the
//! mean absolute error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::{self, CellCache, CellKind, CellState, StateGrad};
use crate::colony::NodeId;
use crate::dataio::{mae_unchecked, Sequence};
use crate::genome::RnnGenome;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("genome {genome}: {source} at t={t}, node {node}")]
    Divergence {
        genome: u64,
        t: usize,
        node: NodeId,
        source: cells::CellDivergence,
    },
    #[error("genome {genome}: non-finite gradient")]
    GradientDivergence { genome: u64 },
    #[error("genome uses input column {needed} but the series has {available} inputs")]
    InputWidth { needed: usize, available: usize },
    #[error("sequence is empty or inputs and targets differ in length")]
    BadSequence,
    #[error("forward edges contain a cycle")]
    Cycle,
    #[error("invalid trainer configuration: {0}")]
    Config(String),
}

/// Execution plan for one genome. Node indices refer to `genome.nodes`;
/// parameter indices refer to [`RnnGenome::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledPlan {
    pub order: Vec<usize>,
    pub ids: Vec<NodeId>,
    pub kinds: Vec<CellKind>,
    /// Input column fed to each input node.
    pub input_column: Vec<Option<usize>>,
    /// Per node: `(source node, weight parameter)`.
    pub forward_in: Vec<Vec<(usize, usize)>>,
    /// Per node: `(source node, skip, weight parameter)`.
    pub recurrent_in: Vec<Vec<(usize, usize, usize)>>,
    /// Per node: first cell parameter.
    pub param_offset: Vec<usize>,
    pub outputs: Vec<usize>,
    pub param_count: usize,
    pub genome: u64,
}

impl UnrolledPlan {
    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    fn params<'a>(&self, theta: &'a [f64], node: usize) -> &'a [f64] {
        let start = self.param_offset[node];
        &theta[start..start + self.kinds[node].param_count()]
    }

    /// Number of input columns the genome reads.
    pub fn input_width_needed(&self) -> usize {
        self.input_column.iter().flatten().map(|c| c + 1).max().unwrap_or(0)
    }
}

/// Builds the execution plan. The order is Kahn's algorithm with ties
/// broken by node order, so it is deterministic and groups a layered
/// genome by ascending layer.
pub fn plan(genome: &RnnGenome) -> Result<UnrolledPlan, NetworkError> {
    let n = genome.nodes.len();
    let index: BTreeMap<NodeId, usize> = genome.nodes.iter().enumerate().map(|(i, g)| (g.id, i)).collect();
    let mut forward_in = vec![Vec::new(); n];
    let mut recurrent_in = vec![Vec::new(); n];
    let mut succ = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (w, e) in genome.forward_edges.iter().enumerate() {
        let (s, d) = (index[&e.src], index[&e.dst]);
        forward_in[d].push((s, w));
        succ[s].push(d);
        indegree[d] += 1;
    }
    let f = genome.forward_edges.len();
    for (w, e) in genome.recurrent_edges.iter().enumerate() {
        let (s, d) = (index[&e.src], index[&e.dst]);
        recurrent_in[d].push((s, e.skip, f + w));
    }
    let mut param_offset = Vec::with_capacity(n);
    let mut next = f + genome.recurrent_edges.len();
    for node in &genome.nodes {
        param_offset.push(next);
        next += node.params.len();
    }

    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &d in &succ[v] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if order.len() != n {
        return Err(NetworkError::Cycle);
    }

    let kinds = genome
        .nodes
        .iter()
        .map(|g| if genome.is_input(g.id) { CellKind::SimpleNeuron } else { g.kind })
        .collect();
    Ok(UnrolledPlan {
        order,
        ids: genome.node_ids().collect(),
        kinds,
        input_column: genome
            .nodes
            .iter()
            .map(|g| genome.is_input(g.id).then_some(g.id.position))
            .collect(),
        forward_in,
        recurrent_in,
        param_offset,
        outputs: (0..n).filter(|&i| genome.is_output(genome.nodes[i].id)).collect(),
        param_count: next,
        genome: genome.seed,
    })
}

/// Values recorded by a forward pass, indexed `[t][node]`.
#[derive(Clone, Debug)]
pub struct Trace {
    pub h: Vec<Vec<f64>>,
    caches: Vec<Vec<Option<CellCache>>>,
    pub predictions: Vec<f64>,
}

fn check_sequence(plan: &UnrolledPlan, inputs: &[Vec<f64>]) -> Result<(), NetworkError> {
    if inputs.is_empty() {
        return Err(NetworkError::BadSequence);
    }
    let needed = plan.input_width_needed();
    let available = inputs.iter().map(Vec::len).min().unwrap_or(0);
    if needed > available {
        return Err(NetworkError::InputWidth { needed, available });
    }
    Ok(())
}

/// Runs the network over `inputs` with parameters `theta`, keeping what
/// backpropagation needs.
pub fn forward_trace(plan: &UnrolledPlan, theta: &[f64], inputs: &[Vec<f64>]) -> Result<Trace, NetworkError> {
    check_sequence(plan, inputs)?;
    let n = plan.node_count();
    let steps = inputs.len();
    let mut h = vec![vec![0.0; n]; steps];
    let mut c = vec![vec![0.0; n]; steps];
    let mut caches = vec![vec![None; n]; steps];
    let mut predictions = Vec::with_capacity(steps);
    for t in 0..steps {
        for &v in &plan.order {
            if let Some(col) = plan.input_column[v] {
                h[t][v] = inputs[t][col];
                continue;
            }
            let mut x = 0.0;
            for &(s, w) in &plan.forward_in[v] {
                x += theta[w] * h[t][s];
            }
            for &(s, skip, w) in &plan.recurrent_in[v] {
                if t >= skip {
                    x += theta[w] * h[t - skip][s];
                }
            }
            let prev = if t > 0 {
                CellState { h: h[t - 1][v], c: c[t - 1][v] }
            } else {
                CellState::default()
            };
            let cache = cells::cell_forward(plan.kinds[v], plan.params(theta, v), x, prev).map_err(|source| {
                NetworkError::Divergence {
                    genome: plan.genome,
                    t,
                    node: plan.ids[v],
                    source,
                }
            })?;
            h[t][v] = cache.out.h;
            c[t][v] = cache.out.c;
            caches[t][v] = Some(cache);
        }
        let out: f64 = plan.outputs.iter().map(|&o| h[t][o]).sum();
        predictions.push(out / plan.outputs.len() as f64);
    }
    Ok(Trace { h, caches, predictions })
}

/// Predictions of the genome over `inputs`.
pub fn forward_pass(plan: &UnrolledPlan, genome: &RnnGenome, inputs: &[Vec<f64>]) -> Result<Vec<f64>, NetworkError> {
    Ok(forward_trace(plan, &genome.parameters(), inputs)?.predictions)
}

/// MAE subgradient with respect to one prediction; zero at a zero residual.
fn mae_slope(prediction: f64, target: f64, steps: usize) -> f64 {
    let r = prediction - target;
    if r > 0.0 {
        1.0 / steps as f64
    } else if r < 0.0 {
        -1.0 / steps as f64
    } else {
        0.0
    }
}

/// Gradient of the MAE over `seq` for parameters `theta`. Returns
/// `(loss, gradient)`.
pub fn loss_and_gradient(plan: &UnrolledPlan, theta: &[f64], seq: &Sequence) -> Result<(f64, Vec<f64>), NetworkError> {
    if seq.inputs.len() != seq.targets.len() {
        return Err(NetworkError::BadSequence);
    }
    let trace = forward_trace(plan, theta, &seq.inputs)?;
    let steps = seq.len();
    let n = plan.node_count();
    let mut grad = vec![0.0; plan.param_count];
    let mut gh = vec![vec![0.0; n]; steps];
    let mut gc = vec![vec![0.0; n]; steps];
    let out_share = 1.0 / plan.outputs.len() as f64;

    for t in (0..steps).rev() {
        let slope = mae_slope(trace.predictions[t], seq.targets[t], steps) * out_share;
        for &o in &plan.outputs {
            gh[t][o] += slope;
        }
        for &v in plan.order.iter().rev() {
            let Some(cache) = &trace.caches[t][v] else {
                continue;
            };
            let upstream = StateGrad { h: gh[t][v], c: gc[t][v] };
            if upstream.h == 0.0 && upstream.c == 0.0 {
                continue;
            }
            let g = cells::cell_backward(plan.params(theta, v), cache, upstream);
            let start = plan.param_offset[v];
            for (dst, d) in grad[start..start + g.params.len()].iter_mut().zip(&g.params) {
                *dst += d;
            }
            if t > 0 {
                gh[t - 1][v] += g.prev.h;
                gc[t - 1][v] += g.prev.c;
            }
            let dx = g.input;
            for &(s, w) in &plan.forward_in[v] {
                grad[w] += dx * trace.h[t][s];
                gh[t][s] += dx * theta[w];
            }
            for &(s, skip, w) in &plan.recurrent_in[v] {
                if t >= skip {
                    grad[w] += dx * trace.h[t - skip][s];
                    gh[t - skip][s] += dx * theta[w];
                }
            }
        }
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(NetworkError::GradientDivergence { genome: plan.genome });
    }
    Ok((mae_unchecked(&trace.predictions, &seq.targets), grad))
}

/// Gradient of the sequence MAE with respect to every genome parameter, in
/// [`RnnGenome::parameters`] order.
pub fn bptt_gradients(plan: &UnrolledPlan, genome: &RnnGenome, seq: &Sequence) -> Result<Vec<f64>, NetworkError> {
    Ok(loss_and_gradient(plan, &genome.parameters(), seq)?.1)
}

/// Scales the gradient to norm `clip` when it is longer, or up to norm
/// `boost` when it is shorter but non-zero.
pub fn rescale_or_boost(gradient: &mut [f64], clip: f64, boost: f64) {
    let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let target = if norm > clip {
        clip
    } else if norm < boost && norm > 0.0 {
        boost
    } else {
        return;
    };
    let scale = target / norm;
    for g in gradient {
        *g *= scale;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip: f64,
    pub boost: f64,
    pub epochs: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            clip: 1.0,
            boost: 0.05,
            epochs: 10,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.learning_rate) || !positive(self.clip) || !positive(self.boost) {
            return Err(NetworkError::Config("learning rate, clip and boost must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetworkError::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.boost >= self.clip {
            return Err(NetworkError::Config("boost threshold must be below the clip threshold".into()));
        }
        if self.epochs == 0 {
            return Err(NetworkError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nesterov momentum step: `v' = mu v - lr g`, `theta += -mu v + (1 + mu) v'`.
pub fn nesterov_step(theta: &mut [f64], velocity: &mut [f64], gradient: &[f64], learning_rate: f64, momentum: f64) {
    for ((p, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(gradient) {
        let previous = *v;
        *v = momentum * previous - learning_rate * g;
        *p += -momentum * previous + (1.0 + momentum) * *v;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Genome carrying the best-validation parameters and that fitness.
    pub genome: RnnGenome,
    pub best_mae: f64,
    /// Validation MAE after each epoch.
    pub epoch_mae: Vec<f64>,
    pub best_epoch: usize,
}

/// Full-sequence SGD with Nesterov momentum, one step per epoch. Returns the
/// parameters of the epoch with the lowest validation MAE.
pub fn train(
    genome: &RnnGenome,
    train_seq: &Sequence,
    validation: &Sequence,
    config: &TrainerConfig,
) -> Result<TrainOutcome, NetworkError> {
    config.validate()?;
    if train_seq.is_empty() || validation.is_empty() || validation.inputs.len() != validation.targets.len() {
        return Err(NetworkError::BadSequence);
    }
    let plan = plan(genome)?;
    let mut theta = genome.parameters();
    let mut velocity = vec![0.0; theta.len()];
    let mut best = (f64::INFINITY, theta.clone(), 0);
    let mut epoch_mae = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (_, mut grad) = loss_and_gradient(&plan, &theta, train_seq)?;
        rescale_or_boost(&mut grad, config.clip, config.boost);
        nesterov_step(&mut theta, &mut velocity, &grad, config.learning_rate, config.momentum);
        let predictions = forward_trace(&plan, &theta, &validation.inputs)?.predictions;
        let score = mae_unchecked(&predictions, &validation.targets);
        epoch_mae.push(score);
        if score < best.0 {
            best = (score, theta.clone(), epoch);
        }
    }
    let (best_mae, params, best_epoch) = best;
    if !best_mae.is_finite() {
        return Err(NetworkError::GradientDivergence { genome: genome.seed });
    }
    let mut trained = genome.clone();
    trained.set_parameters(&params);
    trained.fitness = Some(best_mae);
    Ok(TrainOutcome {
        genome: trained,
        best_mae,
        epoch_mae,
        best_epoch,
    })
}

/// Validation MAE of a genome without training.
pub fn evaluate(genome: &RnnGenome, seq: &Sequence) -> Result<f64, NetworkError> {
    let plan = plan(genome)?;
    let predictions = forward_pass(&plan, genome, &seq.inputs)?;
    Ok(mae_unchecked(&predictions, &seq.targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{GenomeEdge, GenomeNode, GenomeRecurrentEdge};
    use crate::SearchRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn node(layer: usize, position: usize, kind: CellKind, params: Vec<f64>) -> GenomeNode {
        GenomeNode { id: NodeId::new(layer, position), kind, params }
    }

    fn genome(nodes: Vec<GenomeNode>, forward: Vec<GenomeEdge>, recurrent: Vec<GenomeRecurrentEdge>, output_layer: usize) -> RnnGenome {
        let g = RnnGenome {
            nodes,
            forward_edges: forward,
            recurrent_edges: recurrent,
            output_layer,
            fitness: None,
            generation: 0,
            seed: 0,
        };
        g.validate().unwrap();
        g
    }

    fn fe(s: (usize, usize), d: (usize, usize), w: f64) -> GenomeEdge {
        GenomeEdge { src: NodeId::new(s.0, s.1), dst: NodeId::new(d.0, d.1), weight: w }
    }

    fn two_node(w: f64, b: f64) -> RnnGenome {
        genome(
            vec![node(0, 0, CellKind::SimpleNeuron, vec![]), node(1, 0, CellKind::SimpleNeuron, vec![b])],
            vec![fe((0, 0), (1, 0), w)],
            vec![],
            1,
        )
    }

    fn seq(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Sequence {
        Sequence { inputs, targets }
    }

    #[test]
    fn two_node_closed_form() {
        let g = two_node(0.7, -0.2);
        let p = plan(&g).unwrap();
        assert_eq!(p.order, vec![0, 1]);
        let xs = [0.3, -1.0, 2.5];
        let out = forward_pass(&p, &g, &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        for (x, y) in xs.iter().zip(out) {
            assert_eq!(y, (0.7 * x - 0.2f64).tanh());
        }
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let mut g = two_node(0.0, 0.0);
        g.nodes[1].params = vec![0.0];
        let out = forward_pass(&plan(&g).unwrap(), &g, &[vec![1.0], vec![-3.0]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn layered_order_is_by_layer() {
        let g = genome(
            vec![
                node(0, 0, CellKind::SimpleNeuron, vec![]),
                node(0, 1, CellKind::SimpleNeuron, vec![]),
                node(1, 0, CellKind::Gru, vec![0.1; 9]),
                node(1, 1, CellKind::Mgu, vec![0.1; 6]),
                node(2, 0, CellKind::SimpleNeuron, vec![0.0]),
            ],
            vec![
                fe((0, 0), (1, 1), 0.5),
                fe((0, 1), (1, 0), 0.5),
                fe((1, 0), (2, 0), 0.5),
                fe((1, 1), (2, 0), 0.5),
            ],
            vec![],
            2,
        );
        let p = plan(&g).unwrap();
        let layers: Vec<usize> = p.order.iter().map(|&i| g.nodes[i].id.layer).collect();
        assert!(layers.windows(2).all(|w| w[0] <= w[1]));
    }

    fn self_loop(skip: usize) -> RnnGenome {
        genome(
            vec![node(0, 0, CellKind::SimpleNeuron, vec![]), node(1, 0, CellKind::SimpleNeuron, vec![0.1])],
            vec![fe((0, 0), (1, 0), 0.5)],
            vec![GenomeRecurrentEdge { src: NodeId::new(1, 0), dst: NodeId::new(1, 0), skip, weight: 0.8 }],
            1,
        )
    }

    #[test]
    fn recurrent_skip_reads_earlier_state() {
        let g = self_loop(2);
        let p = plan(&g).unwrap();
        assert_eq!(p.recurrent_in[1], vec![(1, 2, 1)]);
        let out = forward_pass(&p, &g, &[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let h0 = (0.5f64 + 0.1).tanh();
        assert_eq!(out[0], h0);
        assert_eq!(out[1], 0.1f64.tanh());
        assert_eq!(out[2], (0.8 * h0 + 0.1).tanh());
        // a single step has no history
        assert_eq!(forward_pass(&p, &g, &[vec![1.0]]).unwrap(), vec![h0]);
    }

    #[test]
    fn rescale_examples() {
        let mut g = vec![3.0, 4.0];
        rescale_or_boost(&mut g, 1.0, 0.05);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        rescale_or_boost(&mut g, 1.0, 0.05);
        assert_eq!(g, vec![0.3, 0.4]);
        let mut g = vec![0.003, 0.004];
        rescale_or_boost(&mut g, 1.0, 0.05);
        assert!((g[0] - 0.03).abs() < 1e-15 && (g[1] - 0.04).abs() < 1e-15);
        let mut g = vec![0.0, 0.0];
        rescale_or_boost(&mut g, 1.0, 0.05);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let g = two_node(0.4, 0.1);
        let p = plan(&g).unwrap();
        let inputs = vec![vec![0.2], vec![0.9]];
        let targets = forward_pass(&p, &g, &inputs).unwrap();
        let grad = bptt_gradients(&p, &g, &seq(inputs, targets)).unwrap();
        assert!(grad.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn perfect_constant_model_is_unchanged_by_training() {
        let g = two_node(0.0, 0.3);
        let target = 0.3f64.tanh();
        let s = seq(vec![vec![1.0]; 5], vec![target; 5]);
        let out = train(&g, &s, &s, &TrainerConfig::default()).unwrap();
        assert_eq!(out.best_mae, 0.0);
        assert_eq!(out.genome.parameters(), g.parameters());
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut theta = vec![0.3, -1.2, 5.0];
        let mut v = vec![0.0; 3];
        let g = [0.11, -0.7, 0.0003];
        let want: Vec<f64> = theta.iter().zip(&g).map(|(p, d)| p - 0.001 * d).collect();
        nesterov_step(&mut theta, &mut v, &g, 0.001, 0.0);
        assert_eq!(theta, want);
    }

    #[test]
    fn one_epoch_returns_post_step_parameters() {
        let g = two_node(0.4, 0.1);
        let s = seq(vec![vec![0.5], vec![1.0], vec![0.0]], vec![0.9, 0.1, 0.4]);
        let cfg = TrainerConfig { epochs: 1, ..TrainerConfig::default() };
        let out = train(&g, &s, &s, &cfg).unwrap();
        let p = plan(&g).unwrap();
        let mut theta = g.parameters();
        let (_, mut grad) = loss_and_gradient(&p, &theta, &s).unwrap();
        rescale_or_boost(&mut grad, cfg.clip, cfg.boost);
        let mut velocity = vec![0.0; theta.len()];
        nesterov_step(&mut theta, &mut velocity, &grad, cfg.learning_rate, cfg.momentum);
        assert_eq!(out.genome.parameters(), theta);
        assert_eq!(out.epoch_mae.len(), 1);
        assert!(TrainerConfig { epochs: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn split_sequences_differ_from_one_pass() {
        let g = self_loop(1);
        let p = plan(&g).unwrap();
        let half: Vec<Vec<f64>> = vec![vec![0.3], vec![-0.6], vec![0.9]];
        let whole: Vec<Vec<f64>> = half.iter().chain(&half).cloned().collect();
        let targets = vec![0.1, 0.2, 0.3];
        let whole_targets: Vec<f64> = targets.iter().chain(&targets).copied().collect();
        let a = bptt_gradients(&p, &g, &seq(whole, whole_targets)).unwrap();
        let b = bptt_gradients(&p, &g, &seq(half, targets)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn input_width_is_checked() {
        let g = genome(
            vec![node(0, 3, CellKind::SimpleNeuron, vec![]), node(1, 0, CellKind::SimpleNeuron, vec![0.0])],
            vec![fe((0, 3), (1, 0), 1.0)],
            vec![],
            1,
        );
        let err = forward_pass(&plan(&g).unwrap(), &g, &[vec![0.0, 1.0]]).unwrap_err();
        assert_eq!(err, NetworkError::InputWidth { needed: 4, available: 2 });
    }

    /// Random genome with inputs at layer 0, two hidden layers, one output,
    /// recurrent edges with skips 1 to 3, and hidden cells of `kind`.
    pub(crate) fn random_genome(kind: CellKind, rng: &mut SearchRng) -> RnnGenome {
        let mut nodes = vec![
            node(0, 0, CellKind::SimpleNeuron, vec![]),
            node(0, 1, CellKind::SimpleNeuron, vec![]),
        ];
        let hidden = [(1usize, 0usize), (2, 0), (2, 1)];
        for &(l, p) in &hidden {
            nodes.push(node(l, p, kind, cells::init_params(kind, rng)));
        }
        nodes.push(node(3, 0, CellKind::SimpleNeuron, vec![rng.random::<f64>() - 0.5]));
        let mut w = || rng.random::<f64>() * 1.6 - 0.8;
        let forward = vec![
            fe((0, 0), (1, 0), w()),
            fe((0, 1), (1, 0), w()),
            fe((0, 1), (2, 1), w()),
            fe((1, 0), (2, 0), w()),
            fe((1, 0), (2, 1), w()),
            fe((2, 0), (3, 0), w()),
            fe((2, 1), (3, 0), w()),
            fe((1, 0), (3, 0), w()),
        ];
        let rec = |s: (usize, usize), d: (usize, usize), skip: usize, weight: f64| GenomeRecurrentEdge {
            src: NodeId::new(s.0, s.1),
            dst: NodeId::new(d.0, d.1),
            skip,
            weight,
        };
        let recurrent = vec![
            rec((3, 0), (1, 0), 1, w()),
            rec((2, 0), (2, 0), 2, w()),
            rec((0, 0), (2, 1), 3, w()),
            rec((2, 1), (1, 0), 3, w()),
        ];
        genome(nodes, forward, recurrent, 3)
    }

    fn finite_difference_check(kind: CellKind, seed: u64) {
        let mut rng = SearchRng::seed_from_u64(seed);
        let g = random_genome(kind, &mut rng);
        let steps = rng.random_range(2..=20);
        let s = seq(
            (0..steps).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect(),
            (0..steps).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        );
        let p = plan(&g).unwrap();
        let theta = g.parameters();
        let (_, grad) = loss_and_gradient(&p, &theta, &s).unwrap();
        let eps = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            up[i] += eps;
            let mut down = theta.clone();
            down[i] -= eps;
            let lu = loss_and_gradient(&p, &up, &s).unwrap().0;
            let ld = loss_and_gradient(&p, &down, &s).unwrap().0;
            let numeric = (lu - ld) / (2.0 * eps);
            let scale = grad[i].abs().max(numeric.abs()).max(1e-3);
            assert!(
                (grad[i] - numeric).abs() / scale < 1e-4,
                "{kind} seed {seed} param {i}: analytic {} numeric {numeric}",
                grad[i]
            );
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for kind in CellKind::ALL {
            for seed in 0..5 {
                finite_difference_check(kind, seed);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rescale_keeps_direction(g in prop::collection::vec(-10f64..10.0, 1..8)) {
            let mut out = g.clone();
            rescale_or_boost(&mut out, 1.0, 0.05);
            let scale = g.iter().zip(&out).find(|(a, _)| **a != 0.0).map(|(a, b)| b / a);
            if let Some(k) = scale {
                prop_assert!(k >= 0.0);
                for (a, b) in g.iter().zip(&out) {
                    prop_assert!((a * k - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }

        #[test]
        fn best_epoch_is_minimum(seed in 0u64..1000) {
            let mut rng = SearchRng::seed_from_u64(seed);
            let g = random_genome(CellKind::Lstm, &mut rng);
            let s = seq((0..12).map(|t| vec![(t as f64 * 0.3).sin(), 0.5]).collect(), (0..12).map(|t| (t as f64 * 0.3).cos() * 0.5).collect());
            let out = train(&g, &s, &s, &TrainerConfig::default()).unwrap();
            let min = out.epoch_mae.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(out.best_mae, min);
            prop_assert_eq!(out.epoch_mae[out.best_epoch], min);
        }
    }
}
