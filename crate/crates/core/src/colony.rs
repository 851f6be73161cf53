//! The massively connected superstructure that ants travel over.
//!
//! Every node of every layer is connected forward to every node of every later
//! layer (or only the next layer when layer jumps are disabled), and every
//! ordered node pair whose destination is not an input node carries one
//! recurrent edge per allowed time skip. Besides the pheromone levels the
//! colony also keeps the Lamarckian weights that seed newly extracted genomes.
//!
//! Nodes are stored in `(layer, position)` order, so a node's flat index sorts
//! the same way as its [`NodeId`]. Edge lists are built once and never change;
//! only pheromone levels and Lamarckian weights mutate afterwards.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{self, CellKind};
use crate::error::{Error, Result};

pub const COLONY_FORMAT: &str = "asne-colony";
pub const COLONY_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    /// 0 is the input layer, `hidden_layers + 1` the output layer.
    pub layer: usize,
    pub position: usize,
}

impl NodeId {
    pub const fn new(layer: usize, position: usize) -> Self {
        Self { layer, position }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}:{}", self.layer, self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PheromoneBounds {
    pub min: f64,
    pub max: f64,
}

/// Clamps a pheromone level into `[bounds.min, bounds.max]`.
#[inline]
pub fn clamp_pheromone(level: f64, bounds: PheromoneBounds) -> f64 {
    level.max(bounds.min).min(bounds.max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColonyConfig {
    pub input_width: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_width: usize,
    pub max_skip: usize,
    pub tau_init: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Connect every layer to every later layer, not only to the next one.
    pub layer_jumps: bool,
}

impl Default for ColonyConfig {
    fn default() -> Self {
        Self {
            input_width: 12,
            hidden_layers: 3,
            hidden_width: 12,
            output_width: 1,
            max_skip: 3,
            tau_init: 1.0,
            tau_min: 0.05,
            tau_max: 20.0,
            layer_jumps: true,
        }
    }
}

impl ColonyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::config("input and output widths must be at least 1"));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::config("hidden width must be at least 1"));
        }
        if self.max_skip == 0 {
            return Err(Error::config("max_skip must be at least 1"));
        }
        let finite = [self.tau_min, self.tau_init, self.tau_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.tau_min <= 0.0 || !(self.tau_min < self.tau_init && self.tau_init < self.tau_max)
        {
            return Err(Error::config(format!(
                "pheromone bounds must satisfy 0 < tau_min < tau_init < tau_max (got {} / {} / {})",
                self.tau_min, self.tau_init, self.tau_max
            )));
        }
        Ok(())
    }

    pub fn bounds(&self) -> PheromoneBounds {
        PheromoneBounds {
            min: self.tau_min,
            max: self.tau_max,
        }
    }

    pub fn output_layer(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden_layers + 2);
        widths.push(self.input_width);
        widths.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        widths.push(self.output_width);
        widths
    }

    pub fn node_count(&self) -> usize {
        self.input_width + self.hidden_layers * self.hidden_width + self.output_width
    }

    /// Closed-form forward edge count: sum of `width_i * width_j` over all
    /// layer pairs `i < j` with jumps, over consecutive pairs without.
    pub fn forward_edge_count(&self) -> usize {
        let widths = self.layer_widths();
        let mut total = 0;
        for i in 0..widths.len() {
            for j in (i + 1)..widths.len() {
                if self.layer_jumps || j == i + 1 {
                    total += widths[i] * widths[j];
                }
            }
        }
        total
    }

    /// `max_skip` recurrent edges for every ordered pair with a non-input destination.
    pub fn recurrent_edge_count(&self) -> usize {
        let n = self.node_count();
        self.max_skip * n * (n - self.input_width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColonyNode {
    pub id: NodeId,
    /// Indexed by [`CellKind::index`].
    pub cell_pheromones: [f64; CellKind::COUNT],
    /// Lamarckian parameters per cell kind, indexed by [`CellKind::index`].
    /// Empty for input nodes, which carry no parameters.
    pub cell_params: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub pheromone: f64,
    pub lamarck_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub skip: usize,
    pub pheromone: f64,
    pub lamarck_weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeRef {
    Forward(usize),
    Recurrent(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    ForwardOnly,
    ForwardAndRecurrent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JumpMode {
    /// Forward moves may skip over layers.
    #[serde(rename = "aj")]
    LayerJump,
    /// Forward moves only reach the next layer.
    #[serde(rename = "oj")]
    NoJump,
}

impl JumpMode {
    pub fn label(self) -> &'static str {
        match self {
            JumpMode::LayerJump => "aj",
            JumpMode::NoJump => "oj",
        }
    }
}

impl std::str::FromStr for JumpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aj" | "jump" | "layer-jump" => Ok(JumpMode::LayerJump),
            "oj" | "nojump" | "no-jump" => Ok(JumpMode::NoJump),
            other => Err(Error::config(format!("unknown jump mode '{other}' (expected aj|oj)"))),
        }
    }
}

impl std::fmt::Display for JumpMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Versioned on-disk form of a colony (see `docs/colony-format.md`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColonyDocument {
    pub format: String,
    pub version: u32,
    pub config: ColonyConfig,
    pub nodes: Vec<ColonyNode>,
    pub forward_edges: Vec<ForwardEdge>,
    pub recurrent_edges: Vec<RecurrentEdge>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "ColonyDocument", try_from = "ColonyDocument")]
pub struct ColonySuperstructure {
    config: ColonyConfig,
    nodes: Vec<ColonyNode>,
    forward_edges: Vec<ForwardEdge>,
    recurrent_edges: Vec<RecurrentEdge>,
    layer_offsets: Vec<usize>,
    forward_out: Vec<Vec<usize>>,
    forward_index: HashMap<(usize, usize), usize>,
}

/// Lookup tables are derived from the edge lists, so equality compares
/// the configuration, nodes and edges only.
impl PartialEq for ColonySuperstructure {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.nodes == other.nodes
            && self.forward_edges == other.forward_edges
            && self.recurrent_edges == other.recurrent_edges
    }
}

impl ColonySuperstructure {
    /// Materializes every node and edge. All pheromones start at `tau_init`,
    /// every Lamarckian weight is drawn from `U(-0.5, 0.5)`.
    pub fn build<R: Rng + ?Sized>(config: ColonyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let widths = config.layer_widths();
        let tau = config.tau_init;

        let mut nodes = Vec::with_capacity(config.node_count());
        for (layer, &width) in widths.iter().enumerate() {
            for position in 0..width {
                nodes.push(ColonyNode {
                    id: NodeId::new(layer, position),
                    cell_pheromones: [tau; CellKind::COUNT],
                    cell_params: Vec::new(),
                });
            }
        }

        let mut forward_edges = Vec::with_capacity(config.forward_edge_count());
        for src in &nodes {
            for dst in &nodes {
                let reachable = dst.id.layer > src.id.layer
                    && (config.layer_jumps || dst.id.layer == src.id.layer + 1);
                if reachable {
                    forward_edges.push(ForwardEdge {
                        src: src.id,
                        dst: dst.id,
                        pheromone: tau,
                        lamarck_weight: crate::uniform_weight(rng),
                    });
                }
            }
        }

        let mut recurrent_edges = Vec::with_capacity(config.recurrent_edge_count());
        for src in &nodes {
            for dst in nodes.iter().filter(|n| n.id.layer > 0) {
                for skip in 1..=config.max_skip {
                    recurrent_edges.push(RecurrentEdge {
                        src: src.id,
                        dst: dst.id,
                        skip,
                        pheromone: tau,
                        lamarck_weight: crate::uniform_weight(rng),
                    });
                }
            }
        }

        for node in nodes.iter_mut().filter(|n| n.id.layer > 0) {
            node.cell_params = CellKind::ALL
                .iter()
                .map(|&kind| cells::init_params(kind, rng))
                .collect();
        }

        Self::assemble(config, nodes, forward_edges, recurrent_edges)
    }

    fn assemble(
        config: ColonyConfig,
        nodes: Vec<ColonyNode>,
        forward_edges: Vec<ForwardEdge>,
        recurrent_edges: Vec<RecurrentEdge>,
    ) -> Result<Self> {
        let widths = config.layer_widths();
        let mut layer_offsets = Vec::with_capacity(widths.len() + 1);
        let mut acc = 0;
        for w in &widths {
            layer_offsets.push(acc);
            acc += w;
        }
        layer_offsets.push(acc);

        let mut colony = Self {
            forward_out: vec![Vec::new(); nodes.len()],
            forward_index: HashMap::with_capacity(forward_edges.len()),
            config,
            nodes,
            forward_edges,
            recurrent_edges,
            layer_offsets,
        };
        for i in 0..colony.forward_edges.len() {
            let (src, dst) = (colony.forward_edges[i].src, colony.forward_edges[i].dst);
            let (s, d) = match (colony.node_index(src), colony.node_index(dst)) {
                (Some(s), Some(d)) => (s, d),
                _ => return Err(Error::Format(format!("forward edge {src}->{dst} references a missing node"))),
            };
            if colony.forward_index.insert((s, d), i).is_some() {
                return Err(Error::Format(format!("duplicate forward edge {src}->{dst}")));
            }
            colony.forward_out[s].push(i);
        }
        for out in &mut colony.forward_out {
            let edges = &colony.forward_edges;
            out.sort_by_key(|&e| edges[e].dst);
        }
        Ok(colony)
    }

    pub fn config(&self) -> &ColonyConfig {
        &self.config
    }

    pub fn bounds(&self) -> PheromoneBounds {
        self.config.bounds()
    }

    pub fn nodes(&self) -> &[ColonyNode] {
        &self.nodes
    }

    pub fn forward_edges(&self) -> &[ForwardEdge] {
        &self.forward_edges
    }

    pub fn recurrent_edges(&self) -> &[RecurrentEdge] {
        &self.recurrent_edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input_count(&self) -> usize {
        self.config.input_width
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        let widths_len = self.layer_offsets.len() - 1;
        if id.layer >= widths_len {
            return None;
        }
        let start = self.layer_offsets[id.layer];
        let end = self.layer_offsets[id.layer + 1];
        (start + id.position < end).then_some(start + id.position)
    }

    pub fn node_id(&self, index: usize) -> NodeId {
        self.nodes[index].id
    }

    pub fn layer_of(&self, index: usize) -> usize {
        self.nodes[index].id.layer
    }

    pub fn is_input(&self, index: usize) -> bool {
        index < self.config.input_width
    }

    pub fn is_output(&self, index: usize) -> bool {
        self.layer_of(index) == self.config.output_layer()
    }

    pub fn input_indices(&self) -> std::ops::Range<usize> {
        0..self.config.input_width
    }

    pub fn output_indices(&self) -> std::ops::Range<usize> {
        let layer = self.config.output_layer();
        self.layer_offsets[layer]..self.layer_offsets[layer + 1]
    }

    pub fn forward_edge_between(&self, src: usize, dst: usize) -> Option<usize> {
        self.forward_index.get(&(src, dst)).copied()
    }

    /// Recurrent edges are laid out as `src × non-input dst × skip`, so the
    /// lookup is arithmetic.
    pub fn recurrent_edge_between(&self, src: usize, dst: usize, skip: usize) -> Option<usize> {
        let n = self.nodes.len();
        let inputs = self.config.input_width;
        if src >= n || dst >= n || dst < inputs || skip == 0 || skip > self.config.max_skip {
            return None;
        }
        Some((src * (n - inputs) + (dst - inputs)) * self.config.max_skip + (skip - 1))
    }

    pub fn forward_out(&self, node: usize) -> &[usize] {
        &self.forward_out[node]
    }

    /// Recurrent edges leaving `node`, ordered by destination then skip.
    pub fn recurrent_out(&self, node: usize) -> std::ops::Range<usize> {
        let per_src = (self.nodes.len() - self.config.input_width) * self.config.max_skip;
        node * per_src..(node + 1) * per_src
    }

    /// Candidate moves out of `node`, in deterministic (layer, position, skip) order.
    pub fn edges_out_of(&self, node: usize, mode: EdgeMode, jump: JumpMode) -> Vec<EdgeRef> {
        let layer = self.layer_of(node);
        let mut out: Vec<EdgeRef> = self.forward_out[node]
            .iter()
            .copied()
            .filter(|&e| jump == JumpMode::LayerJump || self.forward_edges[e].dst.layer == layer + 1)
            .map(EdgeRef::Forward)
            .collect();
        if mode == EdgeMode::ForwardAndRecurrent {
            out.extend(self.recurrent_out(node).map(EdgeRef::Recurrent));
        }
        out
    }

    pub fn edge_endpoints(&self, edge: EdgeRef) -> (NodeId, NodeId) {
        match edge {
            EdgeRef::Forward(i) => (self.forward_edges[i].src, self.forward_edges[i].dst),
            EdgeRef::Recurrent(i) => (self.recurrent_edges[i].src, self.recurrent_edges[i].dst),
        }
    }

    pub fn edge_dst_index(&self, edge: EdgeRef) -> usize {
        let (_, dst) = self.edge_endpoints(edge);
        self.node_index(dst).expect("colony edge endpoints exist")
    }

    pub fn pheromone(&self, edge: EdgeRef) -> f64 {
        match edge {
            EdgeRef::Forward(i) => self.forward_edges[i].pheromone,
            EdgeRef::Recurrent(i) => self.recurrent_edges[i].pheromone,
        }
    }

    /// Stores `level` after clamping it into the colony's bounds.
    pub fn set_pheromone(&mut self, edge: EdgeRef, level: f64) {
        let level = clamp_pheromone(level, self.bounds());
        match edge {
            EdgeRef::Forward(i) => self.forward_edges[i].pheromone = level,
            EdgeRef::Recurrent(i) => self.recurrent_edges[i].pheromone = level,
        }
    }

    pub fn lamarck_weight(&self, edge: EdgeRef) -> f64 {
        match edge {
            EdgeRef::Forward(i) => self.forward_edges[i].lamarck_weight,
            EdgeRef::Recurrent(i) => self.recurrent_edges[i].lamarck_weight,
        }
    }

    pub fn set_lamarck_weight(&mut self, edge: EdgeRef, weight: f64) {
        match edge {
            EdgeRef::Forward(i) => self.forward_edges[i].lamarck_weight = weight,
            EdgeRef::Recurrent(i) => self.recurrent_edges[i].lamarck_weight = weight,
        }
    }

    pub fn cell_pheromone(&self, node: usize, kind: CellKind) -> f64 {
        self.nodes[node].cell_pheromones[kind.index()]
    }

    pub fn set_cell_pheromone(&mut self, node: usize, kind: CellKind, level: f64) {
        let level = clamp_pheromone(level, self.bounds());
        self.nodes[node].cell_pheromones[kind.index()] = level;
    }

    /// Lamarckian cell parameters of `node` for `kind`; empty for input nodes.
    pub fn cell_params(&self, node: usize, kind: CellKind) -> &[f64] {
        self.nodes[node]
            .cell_params
            .get(kind.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn cell_params_mut(&mut self, node: usize, kind: CellKind) -> Option<&mut Vec<f64>> {
        self.nodes[node].cell_params.get_mut(kind.index())
    }

    pub fn edge_refs(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        (0..self.forward_edges.len())
            .map(EdgeRef::Forward)
            .chain((0..self.recurrent_edges.len()).map(EdgeRef::Recurrent))
    }

    pub fn to_document(&self) -> ColonyDocument {
        self.clone().into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ColonyDocument = serde_json::from_str(text)?;
        Self::try_from(doc)
    }
}

impl From<ColonySuperstructure> for ColonyDocument {
    fn from(c: ColonySuperstructure) -> Self {
        ColonyDocument {
            format: COLONY_FORMAT.to_string(),
            version: COLONY_FORMAT_VERSION,
            config: c.config,
            nodes: c.nodes,
            forward_edges: c.forward_edges,
            recurrent_edges: c.recurrent_edges,
        }
    }
}

impl TryFrom<ColonyDocument> for ColonySuperstructure {
    type Error = Error;

    fn try_from(doc: ColonyDocument) -> Result<Self> {
        if doc.format != COLONY_FORMAT || doc.version != COLONY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {COLONY_FORMAT} v{COLONY_FORMAT_VERSION}, found {} v{}",
                doc.format, doc.version
            )));
        }
        doc.config.validate()?;
        let cfg = &doc.config;
        if doc.nodes.len() != cfg.node_count()
            || doc.forward_edges.len() != cfg.forward_edge_count()
            || doc.recurrent_edges.len() != cfg.recurrent_edge_count()
        {
            return Err(Error::Format(format!(
                "colony counts ({} nodes, {} forward, {} recurrent) do not match its config",
                doc.nodes.len(),
                doc.forward_edges.len(),
                doc.recurrent_edges.len()
            )));
        }
        let colony = Self::assemble(doc.config, doc.nodes, doc.forward_edges, doc.recurrent_edges)?;
        for (i, node) in colony.nodes.iter().enumerate() {
            if colony.node_index(node.id) != Some(i) {
                return Err(Error::Format(format!("node {} is out of order", node.id)));
            }
        }
        for (i, e) in colony.recurrent_edges.iter().enumerate() {
            let (s, d) = (colony.node_index(e.src), colony.node_index(e.dst));
            let expected = match (s, d) {
                (Some(s), Some(d)) => colony.recurrent_edge_between(s, d, e.skip),
                _ => None,
            };
            if expected != Some(i) {
                return Err(Error::Format(format!(
                    "recurrent edge {}->{} skip {} is out of order",
                    e.src, e.dst, e.skip
                )));
            }
        }
        Ok(colony)
    }
}
