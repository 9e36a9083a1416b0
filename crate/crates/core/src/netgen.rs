//! Typed block structure, edge sampling and dynamic-network generation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seasonal::{
    init_state, process_value, sample_density, step_state, NoiseParams, SeasonalState,
};

pub type TypeId = u32;

/// An unordered pair of node types, stored with `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockPair {
    pub a: TypeId,
    pub b: TypeId,
}

impl BlockPair {
    pub fn new(x: TypeId, y: TypeId) -> Self {
        Self { a: x.min(y), b: x.max(y) }
    }

    pub fn same_type(&self) -> bool {
        self.a == self.b
    }
}

impl fmt::Display for BlockPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// A node, written `<type>:<index>` in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub type_id: TypeId,
    pub index: u32,
}

impl NodeId {
    pub fn new(type_id: TypeId, index: u32) -> Self {
        Self { type_id, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_id, self.index)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("malformed node id '{s}' (expected <type>:<index>)"));
        let (t, i) = s.split_once(':').ok_or_else(bad)?;
        Ok(NodeId {
            type_id: t.parse().map_err(|_| bad())?,
            index: i.parse().map_err(|_| bad())?,
        })
    }
}

/// Undirected edge; endpoints are stored in ascending order.
pub type Edge = (NodeId, NodeId);

fn ordered_edge(u: NodeId, v: NodeId) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// The edges present at one time step (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub t: usize,
    pub edges: Vec<Edge>,
}

/// Number of dyads in a block: `na*(na-1)/2` within a type, `na*nb` across types.
pub fn possible_edges(na: u64, nb: u64, same_type: bool) -> u64 {
    if same_type {
        na * na.saturating_sub(1) / 2
    } else {
        na * nb
    }
}

/// All unordered type pairs including self-pairs, lexicographically ordered.
pub fn enumerate_block_pairs(k: u32) -> Vec<BlockPair> {
    (0..k)
        .flat_map(|a| (a..k).map(move |b| BlockPair { a, b }))
        .collect()
}

/// Number of formed edges among `n` dyads with density `e`: a Binomial(n, e) draw.
pub fn sample_block_count(e: f64, n: u64, rng: &mut RngStream) -> u64 {
    rng.binomial(n, e)
}

/// Samples every dyad of a block independently with probability `e`.
///
/// Within a type only `i < j` dyads are drawn (undirected, no self-loops).
pub fn sample_block_adjacency(
    e: f64,
    type_a: TypeId,
    na: u32,
    type_b: TypeId,
    nb: u32,
    rng: &mut RngStream,
) -> Vec<Edge> {
    let mut edges = Vec::new();
    if type_a == type_b {
        for i in 0..na {
            for j in (i + 1)..na {
                if rng.bernoulli(e) {
                    edges.push((NodeId::new(type_a, i), NodeId::new(type_a, j)));
                }
            }
        }
    } else {
        for i in 0..na {
            for j in 0..nb {
                if rng.bernoulli(e) {
                    edges.push(ordered_edge(NodeId::new(type_a, i), NodeId::new(type_b, j)));
                }
            }
        }
    }
    edges
}

/// Per-block generative parameters for one block pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub pair: BlockPair,
    pub n: u64,
    pub init_state: SeasonalState,
    pub noise: NoiseParams,
}

impl BlockSpec {
    pub fn new(pair: BlockPair, n: u64, init_state: SeasonalState, noise: NoiseParams) -> Result<Self> {
        if n < 1 {
            return Err(Error::validation(format!("block {pair} has no possible edges (n = 0)")));
        }
        noise.validate()?;
        Ok(Self { pair, n, init_state, noise })
    }
}

/// How block sizes are determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSizing {
    /// Every block has exactly this many possible edges. No adjacency can be drawn.
    PossibleEdges(u64),
    /// Node counts per type; `n` follows from [`possible_edges`].
    NodesPerType(Vec<u32>),
}

/// How an edge count is drawn from the expected density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountModel {
    /// Binomial(n, E_t), or independent Bernoulli dyads when adjacency is drawn.
    #[default]
    Binomial,
    /// `round(n * E_t)` with no sampling noise. Only valid without adjacency.
    Expected,
}

/// Initial bias, one full zero-sum period of offsets, and noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTemplate {
    pub init_bias: f64,
    pub period_offsets: Vec<f64>,
    pub noise: NoiseParams,
}

/// Everything needed to generate a dynamic network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub k: u32,
    pub sizing: BlockSizing,
    pub period: usize,
    pub steps: usize,
    pub seed: u64,
    /// Parameters shared by all blocks unless overridden.
    pub template: BlockTemplate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<(BlockPair, BlockTemplate)>,
    /// Restrict generation to these pairs; `None` models all `k(k+1)/2` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<BlockPair>>,
    #[serde(default)]
    pub adjacency: bool,
    #[serde(default)]
    pub count_model: CountModel,
}

impl NetworkConfig {
    /// The configuration used for the synthetic experiments: three types,
    /// 1000 possible edges per block, the rounded 8-step sine, bias 0.5,
    /// `q_m = q_s = 1e-8`, `r = 5.5e-3`, ten periods.
    pub fn default_experiment(seed: u64) -> Self {
        Self {
            k: 3,
            sizing: BlockSizing::PossibleEdges(1000),
            period: 8,
            steps: 80,
            seed,
            template: BlockTemplate {
                init_bias: 0.5,
                period_offsets: crate::seasonal::OffsetPreset::PaperD8.offsets(),
                noise: NoiseParams { q_m: 1e-8, q_s: 1e-8, r: 5.5e-3 },
            },
            overrides: Vec::new(),
            pairs: None,
            adjacency: false,
            count_model: CountModel::Binomial,
        }
    }

    fn nodes_for(&self, t: TypeId) -> Option<u32> {
        match &self.sizing {
            BlockSizing::NodesPerType(v) => v.get(t as usize).copied(),
            BlockSizing::PossibleEdges(_) => None,
        }
    }

    /// Validates every field and returns the block specs, in pair order.
    ///
    /// All problems found are reported together.
    pub fn block_specs(&self) -> Result<Vec<BlockSpec>> {
        let mut problems = Vec::new();
        if self.k < 1 {
            problems.push("k must be >= 1".to_string());
        }
        if self.steps < 1 {
            problems.push("steps (T) must be >= 1".to_string());
        }
        if self.period < 2 {
            problems.push(format!("period must be >= 2, got {}", self.period));
        }
        match &self.sizing {
            BlockSizing::PossibleEdges(n) if *n < 1 => {
                problems.push("block n must be >= 1".to_string());
            }
            BlockSizing::NodesPerType(v) if v.len() != self.k as usize => {
                problems.push(format!("nodes_per_type has {} entries, expected k = {}", v.len(), self.k));
            }
            BlockSizing::NodesPerType(v) if v.contains(&0) => {
                problems.push("every type needs at least one node".to_string());
            }
            _ => {}
        }
        if self.adjacency {
            if matches!(self.sizing, BlockSizing::PossibleEdges(_)) {
                problems.push("adjacency sampling needs nodes_per_type, not a direct block n".to_string());
            }
            if self.count_model == CountModel::Expected {
                problems.push("adjacency sampling is incompatible with the expected count model".to_string());
            }
        }
        let all_pairs = enumerate_block_pairs(self.k);
        let pairs = match &self.pairs {
            Some(p) => {
                for pair in p {
                    if pair.b >= self.k {
                        problems.push(format!("pair {pair} references a type >= k = {}", self.k));
                    }
                }
                let mut p = p.clone();
                p.sort();
                p.dedup();
                p
            }
            None => all_pairs,
        };
        if !problems.is_empty() {
            return Err(Error::validation(problems.join("; ")));
        }

        let mut specs = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let template = self
                .overrides
                .iter()
                .find(|(p, _)| BlockPair::new(p.a, p.b) == pair)
                .map(|(_, t)| t)
                .unwrap_or(&self.template);
            if template.period_offsets.len() != self.period {
                problems.push(format!(
                    "block {pair}: {} offsets given for period {}",
                    template.period_offsets.len(),
                    self.period
                ));
                continue;
            }
            let n = match &self.sizing {
                BlockSizing::PossibleEdges(n) => *n,
                BlockSizing::NodesPerType(_) => {
                    let na = u64::from(self.nodes_for(pair.a).unwrap_or(0));
                    let nb = u64::from(self.nodes_for(pair.b).unwrap_or(0));
                    possible_edges(na, nb, pair.same_type())
                }
            };
            let spec = init_state(template.init_bias, &template.period_offsets)
                .and_then(|s| BlockSpec::new(pair, n, s, template.noise));
            match spec {
                Ok(s) => specs.push(s),
                Err(e) => problems.push(format!("block {pair}: {e}")),
            }
        }
        if problems.is_empty() {
            Ok(specs)
        } else {
            Err(Error::validation(problems.join("; ")))
        }
    }
}

/// Observed edge counts of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSeries {
    pub pair: BlockPair,
    pub n: u64,
    /// `w_1..w_T`.
    pub counts: Vec<u64>,
}

/// Generator ground truth for one block: the stacked states and densities per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTruth {
    pub pair: BlockPair,
    pub states: Vec<Vec<f64>>,
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub blocks: Vec<BlockTruth>,
}

impl Truth {
    pub fn block(&self, pair: BlockPair) -> Option<&BlockTruth> {
        self.blocks.iter().find(|b| b.pair == pair)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMeta {
    pub k: u32,
    pub period: usize,
    pub steps: usize,
    pub seed: u64,
    pub generator_params: Option<NetworkConfig>,
}

/// Per-block count series with optional adjacency snapshots and generator truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    pub meta: NetworkMeta,
    pub blocks: Vec<BlockSeries>,
    pub adjacency: Option<Vec<Snapshot>>,
    pub truth: Option<Truth>,
}

impl DynamicNetwork {
    pub fn block(&self, pair: BlockPair) -> Option<&BlockSeries> {
        self.blocks.iter().find(|b| b.pair == pair)
    }

    /// Checks `counts.len() == T` and `0 <= w_t <= n` for every block.
    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            if b.n < 1 {
                return Err(Error::validation(format!("block {} has n = 0", b.pair)));
            }
            if b.counts.len() != self.meta.steps {
                return Err(Error::validation(format!(
                    "block {} has {} counts, expected T = {}",
                    b.pair,
                    b.counts.len(),
                    self.meta.steps
                )));
            }
            if let Some((t, w)) = b.counts.iter().enumerate().find(|(_, &w)| w > b.n) {
                return Err(Error::validation(format!(
                    "block {}: count {w} at t = {} exceeds n = {}",
                    b.pair,
                    t + 1,
                    b.n
                )));
            }
        }
        if let Some(truth) = &self.truth {
            for tb in &truth.blocks {
                if tb.states.len() != self.meta.steps || tb.densities.len() != self.meta.steps {
                    return Err(Error::validation(format!(
                        "truth for block {} does not cover T = {} steps",
                        tb.pair, self.meta.steps
                    )));
                }
                if tb.states.iter().any(|s| s.len() != self.meta.period) {
                    return Err(Error::validation(format!(
                        "truth states for block {} must have d = {} entries",
                        tb.pair, self.meta.period
                    )));
                }
            }
        }
        Ok(())
    }
}

struct GeneratedBlock {
    series: BlockSeries,
    truth: BlockTruth,
    edges: Vec<Vec<Edge>>,
}

fn generate_block(config: &NetworkConfig, spec: &BlockSpec) -> GeneratedBlock {
    let mut rng = RngStream::for_block(config.seed, spec.pair.a, spec.pair.b);
    let mut state = spec.init_state.clone();
    let mut counts = Vec::with_capacity(config.steps);
    let mut states = Vec::with_capacity(config.steps);
    let mut densities = Vec::with_capacity(config.steps);
    let mut edges = Vec::new();
    for _ in 0..config.steps {
        state = step_state(&state, &spec.noise, &mut rng);
        let e = sample_density(process_value(&state), spec.noise.r, &mut rng);
        let w = if config.adjacency {
            let na = config.nodes_for(spec.pair.a).unwrap_or(0);
            let nb = config.nodes_for(spec.pair.b).unwrap_or(0);
            let es = sample_block_adjacency(e, spec.pair.a, na, spec.pair.b, nb, &mut rng);
            let w = es.len() as u64;
            edges.push(es);
            w
        } else {
            match config.count_model {
                CountModel::Binomial => sample_block_count(e, spec.n, &mut rng),
                CountModel::Expected => (spec.n as f64 * e).round() as u64,
            }
        };
        counts.push(w);
        states.push(state.to_vector());
        densities.push(e);
    }
    GeneratedBlock {
        series: BlockSeries { pair: spec.pair, n: spec.n, counts },
        truth: BlockTruth { pair: spec.pair, states, densities },
        edges,
    }
}

/// Generates a dynamic network with its ground-truth record.
///
/// Blocks are independent and generated in parallel; each uses the stream
/// [`RngStream::for_block`] so the output does not depend on scheduling.
pub fn generate(config: &NetworkConfig) -> Result<DynamicNetwork> {
    let specs = config.block_specs()?;
    let generated: Vec<GeneratedBlock> = specs.par_iter().map(|s| generate_block(config, s)).collect();

    let adjacency = config.adjacency.then(|| {
        (0..config.steps)
            .map(|t| {
                let mut edges: Vec<Edge> = generated.iter().flat_map(|g| g.edges[t].iter().copied()).collect();
                edges.sort();
                Snapshot { t: t + 1, edges }
            })
            .collect()
    });

    let mut blocks = Vec::with_capacity(generated.len());
    let mut truth = Truth::default();
    for g in generated {
        blocks.push(g.series);
        truth.blocks.push(g.truth);
    }
    Ok(DynamicNetwork {
        meta: NetworkMeta {
            k: config.k,
            period: config.period,
            steps: config.steps,
            seed: config.seed,
            generator_params: Some(config.clone()),
        },
        blocks,
        adjacency,
        truth: Some(truth),
    })
}

/// Counts edges per block pair and step from adjacency snapshots.
///
/// Every pair of the `nodes_per_type.len()` types gets a series of length
/// `steps`, zero where no edges occur.
pub fn block_counts_from_adjacency(
    snapshots: &[Snapshot],
    steps: usize,
    nodes_per_type: &[u32],
) -> Result<BTreeMap<BlockPair, Vec<u64>>> {
    let mut out: BTreeMap<BlockPair, Vec<u64>> = enumerate_block_pairs(nodes_per_type.len() as u32)
        .into_iter()
        .map(|p| (p, vec![0; steps]))
        .collect();
    let known = |id: &NodeId| {
        nodes_per_type
            .get(id.type_id as usize)
            .is_some_and(|&count| id.index < count)
    };
    for snap in snapshots {
        if snap.t < 1 || snap.t > steps {
            return Err(Error::validation(format!("snapshot time {} outside 1..={steps}", snap.t)));
        }
        for (u, v) in &snap.edges {
            for id in [u, v] {
                if !known(id) {
                    return Err(Error::validation(format!("unknown node id {id}")));
                }
            }
            if u == v {
                return Err(Error::validation(format!("self-loop on node {u} at t = {}", snap.t)));
            }
            let pair = BlockPair::new(u.type_id, v.type_id);
            if let Some(series) = out.get_mut(&pair) {
                series[snap.t - 1] += 1;
            }
        }
    }
    Ok(out)
}
