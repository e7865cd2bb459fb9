//! Trajectory-graph augmentation (node dropout, correlated insertion,
//! correlated substitution) and the in-batch InfoNCE objective.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::TrajectoryGraph;
use crate::ingest::{Catalog, PoiIdx};
use crate::numerics::{Tape, Tensor, Var};
use crate::pretrain::{cosine, EmbeddingTable};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Spatial,
    Temporal,
}

/// Top-scoring POIs of every POI by cosine similarity of pretrained vectors,
/// one ranking per embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationIndex {
    spatial: Vec<Vec<(PoiIdx, f64)>>,
    temporal: Vec<Vec<(PoiIdx, f64)>>,
}

fn ranked(table: &EmbeddingTable, top: usize) -> Vec<Vec<(PoiIdx, f64)>> {
    (0..table.rows())
        .into_par_iter()
        .map(|i| {
            let mut scores: Vec<(PoiIdx, f64)> = (0..table.rows())
                .filter(|&j| j != i)
                .map(|j| (PoiIdx(j as u32), cosine(table.row(i), table.row(j))))
                .collect();
            scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scores.truncate(top);
            scores
        })
        .collect()
}

impl CorrelationIndex {
    /// Full scan; `top` neighbours kept per POI and table, ties by ascending
    /// index.
    pub fn build(spatial: &EmbeddingTable, temporal: &EmbeddingTable, top: usize) -> Result<Self> {
        if spatial.rows() != temporal.rows() {
            return Err(Error::Shape(format!(
                "spatial table has {} rows, temporal {}",
                spatial.rows(),
                temporal.rows()
            )));
        }
        Ok(Self {
            spatial: ranked(spatial, top),
            temporal: ranked(temporal, top),
        })
    }

    /// An index with no neighbours for any of `n` POIs.
    pub fn empty(n: usize) -> Self {
        Self {
            spatial: vec![Vec::new(); n],
            temporal: vec![Vec::new(); n],
        }
    }

    pub fn from_lists(spatial: Vec<Vec<(PoiIdx, f64)>>, temporal: Vec<Vec<(PoiIdx, f64)>>) -> Self {
        Self { spatial, temporal }
    }

    pub fn len(&self) -> usize {
        self.spatial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spatial.is_empty()
    }

    pub fn neighbors(&self, mode: Mode, p: PoiIdx) -> &[(PoiIdx, f64)] {
        let lists = match mode {
            Mode::Spatial => &self.spatial,
            Mode::Temporal => &self.temporal,
        };
        lists.get(p.index()).map_or(&[], |l| l.as_slice())
    }

    /// Both rankings merged, each candidate keeping its larger score.
    pub fn merged(&self, p: PoiIdx) -> Vec<(PoiIdx, f64)> {
        let mut best: BTreeMap<PoiIdx, f64> = BTreeMap::new();
        for &(q, s) in self.neighbors(Mode::Spatial, p).iter().chain(self.neighbors(Mode::Temporal, p)) {
            let e = best.entry(q).or_insert(s);
            *e = e.max(s);
        }
        let mut out: Vec<(PoiIdx, f64)> = best.into_iter().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

/// Drops each non-last node with probability `beta`. A removal that
/// disconnects the graph is repaired by wiring every predecessor of the
/// dropped node to every successor; if that still leaves it disconnected,
/// the dropped node's neighbours are chained in index order.
pub fn node_dropout(g: &TrajectoryGraph, beta: f64, rng: &mut Rng) -> TrajectoryGraph {
    assert!((0.0..1.0).contains(&beta), "drop probability {beta} outside [0, 1)");
    let mut out = g.clone();
    if beta == 0.0 {
        return out;
    }
    let doomed: Vec<PoiIdx> = (0..g.len())
        .filter(|&i| i != g.last_node)
        .filter(|_| rng.gen_bool(beta))
        .map(|i| g.nodes[i])
        .collect();
    for poi in doomed {
        let i = out.position_of(poi).expect("nodes are removed once");
        let preds = out.predecessors(i);
        let succs = out.successors(i);
        let mut around: Vec<usize> = out.undirected_adjacency()[i].clone();
        out.remove_node(i);
        let shift = |x: usize| if x > i { x - 1 } else { x };
        if out.is_connected() {
            continue;
        }
        for &a in &preds {
            for &b in &succs {
                if a != b {
                    out.edges.insert((shift(a), shift(b)));
                }
            }
        }
        if !out.is_connected() {
            around.iter_mut().for_each(|x| *x = shift(*x));
            for w in around.windows(2) {
                out.edges.insert((w[0], w[1]));
            }
        }
    }
    out
}

/// Default perturbation size for a graph of `n` nodes: `max(1, ⌈n/10⌉)`.
pub fn default_count(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

/// Adds, for up to `k` randomly chosen nodes, their best-correlated POI not
/// already in the graph. Temporal mode splices it into a random outgoing
/// edge of the chosen node (or appends it when there is none); spatial mode
/// links it both ways to the chosen node.
pub fn correlated_insertion(
    g: &TrajectoryGraph,
    k: usize,
    index: &CorrelationIndex,
    catalog: &Catalog,
    mode: Mode,
    rng: &mut Rng,
) -> TrajectoryGraph {
    let mut out = g.clone();
    let n = g.len();
    let picks = sample(rng, n, k.min(n)).into_vec();
    for i in picks {
        let Some(&(new, _)) = index.neighbors(mode, out.nodes[i]).iter().find(|(q, _)| !out.contains(*q)) else {
            continue;
        };
        let j = out.add_node(new, catalog.category(new), 0);
        match mode {
            Mode::Temporal => {
                let succs = out.successors(i);
                if succs.is_empty() {
                    out.edges.insert((i, j));
                } else {
                    let x = succs[rng.gen_range(0..succs.len())];
                    out.edges.remove(&(i, x));
                    out.edges.insert((i, j));
                    out.edges.insert((j, x));
                }
            }
            Mode::Spatial => {
                out.edges.insert((i, j));
                out.edges.insert((j, i));
            }
        }
    }
    out
}

/// Replaces up to `k` randomly chosen non-last nodes by their
/// best-correlated POI (either ranking) not already in the graph. The node
/// keeps its edges and position; its category follows the new POI.
pub fn correlated_substitute(
    g: &TrajectoryGraph,
    k: usize,
    index: &CorrelationIndex,
    catalog: &Catalog,
    rng: &mut Rng,
) -> TrajectoryGraph {
    let mut out = g.clone();
    let eligible: Vec<usize> = (0..g.len()).filter(|&i| i != g.last_node).collect();
    let picks = sample(rng, eligible.len(), k.min(eligible.len())).into_vec();
    for pick in picks {
        let i = eligible[pick];
        if let Some((new, _)) = index.merged(out.nodes[i]).into_iter().find(|(q, _)| !out.contains(*q)) {
            out.nodes[i] = new;
            out.categories[i] = catalog.category(new);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Dropout,
    Insertion(Mode),
    Substitution,
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentOp::Dropout => f.write_str("dropout"),
            AugmentOp::Insertion(Mode::Spatial) => f.write_str("insertion-spatial"),
            AugmentOp::Insertion(Mode::Temporal) => f.write_str("insertion-temporal"),
            AugmentOp::Substitution => f.write_str("substitution"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Node dropout probability.
    pub dropout: f64,
    /// Insertion/substitution count; `None` means [`default_count`].
    pub count: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            dropout: 0.3,
            count: None,
        }
    }
}

/// Applies one operator.
pub fn apply(
    op: AugmentOp,
    g: &TrajectoryGraph,
    cfg: &AugmentConfig,
    index: &CorrelationIndex,
    catalog: &Catalog,
    rng: &mut Rng,
) -> TrajectoryGraph {
    let k = cfg.count.unwrap_or_else(|| default_count(g.len()));
    match op {
        AugmentOp::Dropout => node_dropout(g, cfg.dropout, rng),
        AugmentOp::Insertion(mode) => correlated_insertion(g, k, index, catalog, mode, rng),
        AugmentOp::Substitution => correlated_substitute(g, k, index, catalog, rng),
    }
}

/// Uniform draw over the three operators; insertion picks its mode
/// uniformly too.
pub fn draw_op(rng: &mut Rng) -> AugmentOp {
    match rng.gen_range(0..3) {
        0 => AugmentOp::Dropout,
        1 => AugmentOp::Insertion(if rng.gen_bool(0.5) { Mode::Spatial } else { Mode::Temporal }),
        _ => AugmentOp::Substitution,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub view_a: TrajectoryGraph,
    pub view_b: TrajectoryGraph,
    pub ops: [AugmentOp; 2],
}

pub fn make_views(
    g: &TrajectoryGraph,
    cfg: &AugmentConfig,
    index: &CorrelationIndex,
    catalog: &Catalog,
    rng: &mut Rng,
) -> ViewPair {
    let op_a = draw_op(rng);
    let view_a = apply(op_a, g, cfg, index, catalog, rng);
    let op_b = draw_op(rng);
    let view_b = apply(op_b, g, cfg, index, catalog, rng);
    ViewPair {
        view_a,
        view_b,
        ops: [op_a, op_b],
    }
}

/// InfoNCE over matched rows of `a` and `b` (each `B×d`) with in-batch
/// negatives: the sum over rows of cross entropy on cosine similarities
/// divided by `temperature`, with row `i` of `b` as the positive for row
/// `i` of `a`.
pub fn infonce(tape: &mut Tape, a: Var, b: Var, temperature: f64) -> Result<Var> {
    let (rows, _) = tape.shape(a);
    if rows < 2 {
        return Err(Error::Data(format!("contrastive batch of {rows} has no negatives")));
    }
    if tape.shape(b) != tape.shape(a) {
        return Err(Error::Shape(format!(
            "view batches {:?} and {:?}",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    let na = tape.normalize_rows(a);
    let nb = tape.normalize_rows(b);
    let sims = tape.matmul_bt(na, nb);
    let sims = tape.scale(sims, 1.0 / temperature);
    let targets: Vec<Option<usize>> = (0..rows).map(Some).collect();
    let mean = tape.cross_entropy(sims, &targets);
    Ok(tape.scale(mean, rows as f64))
}

/// Value-only InfoNCE for fixed batches.
pub fn infonce_value(a: &Tensor, b: &Tensor, temperature: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let loss = infonce(&mut tape, va, vb, temperature)?;
    Ok(tape.value(loss).item())
}
