//! A candidate recurrent network extracted from the colony.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::colony::{ColonySuperstructure, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeNode {
    pub id: NodeId,
    pub kind: CellKind,
    /// Cell parameters; empty for input nodes.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeRecurrentEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub skip: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnGenome {
    /// Sorted by `id`.
    pub nodes: Vec<GenomeNode>,
    /// Sorted by `(src, dst)`.
    pub forward_edges: Vec<GenomeEdge>,
    /// Sorted by `(src, dst, skip)`.
    pub recurrent_edges: Vec<GenomeRecurrentEdge>,
    pub output_layer: usize,
    pub fitness: Option<f64>,
    pub generation: u64,
    pub seed: u64,
}

impl RnnGenome {
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn is_input(&self, id: NodeId) -> bool {
        id.layer == 0
    }

    pub fn is_output(&self, id: NodeId) -> bool {
        id.layer == self.output_layer
    }

    pub fn output_nodes(&self) -> impl Iterator<Item = &GenomeNode> + '_ {
        self.nodes.iter().filter(|n| n.id.layer == self.output_layer)
    }

    /// Trainable parameter count: edge weights plus cell parameters.
    pub fn weight_count(&self) -> usize {
        self.forward_edges.len()
            + self.recurrent_edges.len()
            + self.nodes.iter().map(|n| n.params.len()).sum::<usize>()
    }

    /// Flat parameter vector: forward weights, recurrent weights, then each
    /// node's cell parameters in node order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weight_count());
        out.extend(self.forward_edges.iter().map(|e| e.weight));
        out.extend(self.recurrent_edges.iter().map(|e| e.weight));
        for n in &self.nodes {
            out.extend_from_slice(&n.params);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.weight_count(), "parameter vector length");
        let mut it = params.iter().copied();
        for e in &mut self.forward_edges {
            e.weight = it.next().unwrap();
        }
        for e in &mut self.recurrent_edges {
            e.weight = it.next().unwrap();
        }
        for n in &mut self.nodes {
            for p in &mut n.params {
                *p = it.next().unwrap();
            }
        }
    }

    pub fn cell_histogram(&self) -> [usize; CellKind::COUNT] {
        let mut hist = [0; CellKind::COUNT];
        for n in self.nodes.iter().filter(|n| n.id.layer != 0 && n.id.layer != self.output_layer) {
            hist[n.kind.index()] += 1;
        }
        hist
    }

    /// Checks the structural invariants: edges reference genome nodes, at
    /// least one input reaches the output through forward edges, forward
    /// edges point strictly forward, every weight is finite.
    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<NodeId> = self.node_ids().collect();
        if ids.len() != self.nodes.len() {
            return Err(invalid("duplicate node"));
        }
        for n in &self.nodes {
            let is_input = n.id.layer == 0;
            if (is_input || n.id.layer == self.output_layer) && n.kind != CellKind::SimpleNeuron {
                return Err(invalid(&format!("node {} must be a simple neuron", n.id)));
            }
            let expected = if is_input { 0 } else { n.kind.param_count() };
            if n.params.len() != expected {
                return Err(invalid(&format!("node {} has {} parameters", n.id, n.params.len())));
            }
        }
        for e in &self.forward_edges {
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return Err(invalid(&format!("forward edge {}->{} has a missing endpoint", e.src, e.dst)));
            }
            if e.src.layer >= e.dst.layer {
                return Err(invalid(&format!("forward edge {}->{} is not forward", e.src, e.dst)));
            }
        }
        for e in &self.recurrent_edges {
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return Err(invalid(&format!("recurrent edge {}->{} has a missing endpoint", e.src, e.dst)));
            }
            if e.dst.layer == 0 || e.skip == 0 {
                return Err(invalid(&format!("recurrent edge {}->{} skip {}", e.src, e.dst, e.skip)));
            }
        }
        if !self.parameters().iter().all(|w| w.is_finite()) {
            return Err(invalid("non-finite weight"));
        }
        if self.output_nodes().next().is_none() {
            return Err(invalid("no output node"));
        }
        if !self.has_forward_path() {
            return Err(invalid("no forward path from an input to the output"));
        }
        Ok(())
    }

    fn has_forward_path(&self) -> bool {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for e in &self.forward_edges {
            adj.entry(e.src).or_default().push(e.dst);
        }
        let mut seen: BTreeSet<NodeId> = self.node_ids().filter(|id| id.layer == 0).collect();
        let mut queue: VecDeque<NodeId> = seen.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            if n.layer == self.output_layer {
                return true;
            }
            for &d in adj.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(d) {
                    queue.push_back(d);
                }
            }
        }
        false
    }

    /// True when every genome edge exists in `colony`.
    pub fn is_subgraph_of(&self, colony: &ColonySuperstructure) -> bool {
        let idx = |id: NodeId| colony.node_index(id);
        self.forward_edges.iter().all(|e| match (idx(e.src), idx(e.dst)) {
            (Some(s), Some(d)) => colony.forward_edge_between(s, d).is_some(),
            _ => false,
        }) && self.recurrent_edges.iter().all(|e| match (idx(e.src), idx(e.dst)) {
            (Some(s), Some(d)) => colony.recurrent_edge_between(s, d, e.skip).is_some(),
            _ => false,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn invalid(msg: &str) -> Error {
    Error::Traversal(crate::traversal::TraversalError::InvalidGenome(msg.to_string()))
}
