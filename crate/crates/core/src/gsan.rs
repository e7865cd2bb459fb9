//! Graph-biased self-attention encoder.
//!
//! Each trajectory graph (with its master node) is encoded by dense
//! attention over all node pairs. Attention scores carry three additive
//! biases: a hop-distance scalar, an interpolated geographic-distance scalar
//! and a category term averaged along a shortest path. The master node's
//! output and the last check-in node's output are projected into the user
//! representation, which is scored against every POI embedding.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{bfs_parents, CategoryPair, GlobalTemporalGraph, MasterGraph, TrajectoryGraph};
use crate::numerics::{ParamId, ParamSet, SparseMap, Tape, Tensor, Var};
use crate::pretrain::EmbeddingTable;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsanConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Longest trajectory the position table covers.
    pub max_len: usize,
    /// Hop distances above this share one bias slot.
    pub spd_cap: u32,
    /// Number of equal-width distance bins.
    pub dist_bins: usize,
    /// Size of the degree and popularity tables; larger indices clamp.
    pub degree_buckets: usize,
    pub category_bias: bool,
}

impl Default for GsanConfig {
    fn default() -> Self {
        Self {
            dim: 160,
            heads: 1,
            layers: 1,
            max_len: 100,
            spd_cap: 5,
            dist_bins: 20,
            degree_buckets: 50,
            category_bias: true,
        }
    }
}

impl GsanConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("heads", self.heads),
            ("layers", self.layers),
            ("max_len", self.max_len),
            ("dist_bins", self.dist_bins),
            ("degree_buckets", self.degree_buckets),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Equal-width bins over `[min, max]` with one bias scalar per boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBins {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl DistanceBins {
    pub fn new(min: f64, max: f64, bins: usize) -> Self {
        assert!(bins >= 1, "at least one distance bin");
        assert!(min.is_finite() && max.is_finite() && min <= max, "bad distance range [{min}, {max}]");
        Self { min, max, bins }
    }

    /// Range taken from all distinct node pairs of the given graphs.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a MasterGraph>, bins: usize) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for g in graphs {
            let n = g.base.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = g.geo_dist[i * n + j];
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        if lo > hi {
            lo = 0.0;
            hi = 0.0;
        }
        Self::new(lo, hi, bins)
    }

    pub fn boundary(&self, k: usize) -> f64 {
        self.min + (self.max - self.min) * k as f64 / self.bins as f64
    }

    /// `(lower slot, upper slot, t)` such that the bias is
    /// `(1 − t)·b[lower] + t·b[upper]`. Out-of-range distances clamp to the
    /// end boundaries.
    pub fn locate(&self, dist: f64) -> (usize, usize, f64) {
        if self.max <= self.min || dist <= self.min {
            return (0, 0, 0.0);
        }
        if dist >= self.max {
            return (self.bins, self.bins, 0.0);
        }
        let width = (self.max - self.min) / self.bins as f64;
        let k = (((dist - self.min) / width).floor() as usize).min(self.bins - 1);
        let (lower, upper) = (self.boundary(k), self.boundary(k + 1));
        (k, k + 1, (dist - lower) / (upper - lower))
    }
}

/// Linear interpolation of boundary scalars `table[0..=bins]` at `dist`.
pub fn distance_bias(bins: &DistanceBins, table: &[f64], dist: f64) -> f64 {
    let (lo, hi, t) = bins.locate(dist);
    (1.0 - t) * table[lo] + t * table[hi]
}

/// Category pairs seen on training graph edges. Index 0 is the UNKNOWN pair
/// used for master-node edges and unseen combinations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CategoryVocab {
    pairs: Vec<CategoryPair>,
}

impl CategoryVocab {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a TrajectoryGraph>) -> Self {
        let mut pairs: Vec<CategoryPair> = graphs
            .into_iter()
            .flat_map(|g| g.edges.iter().map(move |&(a, b)| g.edge_category(a, b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        Self { pairs }
    }

    /// Rows in the pair table, UNKNOWN included.
    pub fn len(&self) -> usize {
        self.pairs.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, pair: CategoryPair) -> usize {
        self.pairs.binary_search(&pair).map_or(0, |k| k + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerIds {
    heads: Vec<[ParamId; 3]>,
    output: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelIds {
    poi: ParamId,
    in_degree: ParamId,
    out_degree: ParamId,
    popularity: ParamId,
    position: ParamId,
    layers: Vec<LayerIds>,
    spd: ParamId,
    distance: ParamId,
    pairs: ParamId,
    pair_weight: ParamId,
    readout: ParamId,
}

/// Encoder structure. Parameter values live in a separate [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gsan {
    pub config: GsanConfig,
    pub bins: DistanceBins,
    pub vocab: CategoryVocab,
    pub num_pois: usize,
    ids: ModelIds,
}

fn uniform(rows: usize, cols: usize, bound: f64, r: &mut rng::Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| r.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

fn xavier(rows: usize, cols: usize, r: &mut rng::Rng) -> Tensor {
    uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), r)
}

/// Popularity bucket of a raw visit count.
pub fn popularity_bucket(visits: u32, buckets: usize) -> usize {
    ((visits as f64 + 1.0).log2().floor() as usize).min(buckets - 1)
}

/// Reverse position of a node: 1 for the most recent check-in, `None` for
/// nodes that never appeared as a check-in.
pub fn position_index(g: &TrajectoryGraph, node: usize) -> Option<usize> {
    let step = g.last_step[node];
    (step > 0).then(|| g.seq_len - step + 1)
}

impl Gsan {
    /// Registers freshly initialized parameters in a new set.
    pub fn new(
        config: GsanConfig,
        bins: DistanceBins,
        vocab: CategoryVocab,
        num_pois: usize,
        seed: u64,
    ) -> Result<(Self, ParamSet)> {
        config.validate()?;
        if bins.bins != config.dist_bins {
            return Err(Error::Config(format!(
                "distance bins ({}) disagree with dist_bins ({})",
                bins.bins, config.dist_bins
            )));
        }
        let d = config.dim;
        let mut r = rng::stream(seed, "init");
        let mut set = ParamSet::new();
        let table = 1.0 / (d as f64).sqrt();
        let poi = set.register("poi", uniform(num_pois, d, table, &mut r), true);
        let in_degree = set.register("in_degree", uniform(config.degree_buckets, d, 0.1 * table, &mut r), true);
        let out_degree = set.register("out_degree", uniform(config.degree_buckets, d, 0.1 * table, &mut r), true);
        let popularity = set.register("popularity", uniform(config.degree_buckets, d, 0.1 * table, &mut r), true);
        let mut position = uniform(config.max_len + 1, d, 0.1 * table, &mut r);
        position.row_mut(0).fill(0.0);
        let position = set.register("position", position, true);
        let layers = (0..config.layers)
            .map(|l| LayerIds {
                heads: (0..config.heads)
                    .map(|h| {
                        ["query", "key", "value"].map(|role| {
                            set.register(format!("layer{l}.head{h}.{role}"), xavier(d, d, &mut r), true)
                        })
                    })
                    .collect(),
                output: set.register(format!("layer{l}.output"), xavier(config.heads * d, d, &mut r), true),
            })
            .collect();
        let spd = set.register("spd_bias", Tensor::zeros(config.spd_cap as usize + 2, 1), false);
        let distance = set.register("distance_bias", Tensor::zeros(config.dist_bins + 2, 1), false);
        let pairs = set.register("category_pairs", uniform(vocab.len(), d, table, &mut r), true);
        let pair_weight = set.register("category_weight", xavier(d, 1, &mut r), true);
        let readout = set.register("readout", xavier(2 * d, d, &mut r), true);
        if !config.category_bias {
            set.set_trainable(pairs, false);
            set.set_trainable(pair_weight, false);
        }
        let ids = ModelIds {
            poi,
            in_degree,
            out_degree,
            popularity,
            position,
            layers,
            spd,
            distance,
            pairs,
            pair_weight,
            readout,
        };
        Ok((
            Self {
                config,
                bins,
                vocab,
                num_pois,
                ids,
            },
            set,
        ))
    }

    /// Copies a pretrained table into the POI embedding matrix.
    pub fn load_poi_embeddings(&self, params: &mut ParamSet, table: &EmbeddingTable) -> Result<()> {
        if table.rows() != self.num_pois || table.dim() != self.config.dim {
            return Err(Error::Shape(format!(
                "pretrained table is {}x{}, encoder expects {}x{}",
                table.rows(),
                table.dim(),
                self.num_pois,
                self.config.dim
            )));
        }
        let data = table.data().iter().map(|&v| v as f64).collect();
        params.assign(self.ids.poi, Tensor::from_vec(table.rows(), table.dim(), data)?)
    }

    pub fn poi_param(&self) -> ParamId {
        self.ids.poi
    }

    pub fn readout_param(&self) -> ParamId {
        self.ids.readout
    }

    pub fn spd_param(&self) -> ParamId {
        self.ids.spd
    }

    pub fn distance_param(&self) -> ParamId {
        self.ids.distance
    }

    pub fn category_params(&self) -> (ParamId, ParamId) {
        (self.ids.pairs, self.ids.pair_weight)
    }

    fn spd_offset(&self) -> usize {
        0
    }

    fn dist_offset(&self) -> usize {
        self.config.spd_cap as usize + 2
    }

    fn cat_offset(&self) -> usize {
        self.dist_offset() + self.config.dist_bins + 2
    }

    /// Everything about one graph that does not depend on parameter values.
    pub fn prepare(&self, g: &MasterGraph, gt: &GlobalTemporalGraph) -> Result<GraphInputs> {
        let base = &g.base;
        let nb = base.len();
        let n = g.len();
        let master = g.master();
        let d = self.config.dim;
        let buckets = self.config.degree_buckets;

        let poi: Vec<usize> = base.nodes.iter().map(|p| p.index()).collect();
        if let Some(&bad) = poi.iter().find(|&&p| p >= self.num_pois || p >= gt.num_nodes) {
            return Err(Error::Data(format!("POI index {bad} outside the catalog")));
        }
        let in_degree = poi.iter().map(|&p| (gt.in_degree[p] as usize).min(buckets - 1)).collect();
        let out_degree = poi.iter().map(|&p| (gt.out_degree[p] as usize).min(buckets - 1)).collect();
        let popularity = poi.iter().map(|&p| popularity_bucket(gt.visits[p], buckets)).collect();

        let mut positions = SparseMap::with_capacity(nb * d);
        for node in 0..nb {
            let pos = position_index(base, node);
            if let Some(pos) = pos {
                if pos > self.config.max_len {
                    return Err(Error::Data(format!(
                        "position {pos} exceeds the maximum trajectory length {}",
                        self.config.max_len
                    )));
                }
            }
            for c in 0..d {
                match pos {
                    Some(pos) => positions.push([(pos * d + c, 1.0)]),
                    None => positions.push([]),
                }
            }
        }

        let cap = self.config.spd_cap;
        let mut bias = SparseMap::with_capacity(n * n);
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            let parent = self.config.category_bias.then(|| bfs_parents(&g.adjacency, i));
            for j in 0..n {
                terms.clear();
                let spd_slot = if i == master || j == master {
                    cap as usize + 1
                } else {
                    g.spd.get(i, j).min(cap) as usize
                };
                terms.push((self.spd_offset() + spd_slot, 1.0));
                match g.distance(i, j) {
                    Some(dist) => {
                        let (lo, hi, t) = self.bins.locate(dist);
                        terms.push((self.dist_offset() + lo, 1.0 - t));
                        if t > 0.0 {
                            terms.push((self.dist_offset() + hi, t));
                        }
                    }
                    None => terms.push((self.dist_offset() + self.config.dist_bins + 1, 1.0)),
                }
                if let Some(parent) = &parent {
                    let pair_of = |a: usize, b: usize| {
                        if a == master || b == master {
                            0
                        } else {
                            self.vocab.index(base.edge_category(a, b))
                        }
                    };
                    if i == j {
                        terms.push((self.cat_offset() + pair_of(i, i), 1.0));
                    } else {
                        if parent[j] == usize::MAX {
                            return Err(Error::Data("master graph is not connected".into()));
                        }
                        let mut edges = Vec::new();
                        let mut cur = j;
                        while cur != i {
                            edges.push(pair_of(parent[cur], cur));
                            cur = parent[cur];
                        }
                        let w = 1.0 / edges.len() as f64;
                        terms.extend(edges.into_iter().map(|k| (self.cat_offset() + k, w)));
                    }
                }
                bias.push(terms.iter().copied());
            }
        }

        Ok(GraphInputs {
            n,
            master,
            last: base.last_node,
            poi,
            in_degree,
            out_degree,
            popularity,
            positions: Arc::new(positions),
            bias: Arc::new(bias),
        })
    }

    /// Binds every parameter to the tape once.
    pub fn bind(&self, tape: &mut Tape, params: &ParamSet) -> Bound {
        let mut p = |id: ParamId| tape.param(id, params.get(id));
        let poi = p(self.ids.poi);
        let in_degree = p(self.ids.in_degree);
        let out_degree = p(self.ids.out_degree);
        let popularity = p(self.ids.popularity);
        let position = p(self.ids.position);
        let layers = self
            .ids
            .layers
            .iter()
            .map(|l| BoundLayer {
                heads: l.heads.iter().map(|h| h.map(&mut p)).collect(),
                output: p(l.output),
            })
            .collect();
        let spd = p(self.ids.spd);
        let distance = p(self.ids.distance);
        let readout = p(self.ids.readout);
        let bias_table = if self.config.category_bias {
            let pairs = tape.param(self.ids.pairs, params.get(self.ids.pairs));
            let weight = tape.param(self.ids.pair_weight, params.get(self.ids.pair_weight));
            let per_pair = tape.matmul(pairs, weight);
            tape.concat_rows(&[spd, distance, per_pair])
        } else {
            tape.concat_rows(&[spd, distance])
        };
        Bound {
            poi,
            in_degree,
            out_degree,
            popularity,
            position,
            layers,
            bias_table,
            readout,
        }
    }

    /// Input node features: POI embedding plus degree, popularity and
    /// position encodings, with the master row set to the mean of the rest.
    pub fn node_features(&self, tape: &mut Tape, bound: &Bound, inputs: &GraphInputs) -> Var {
        let nb = inputs.poi.len();
        let parts = [
            tape.gather_rows(bound.poi, &inputs.poi),
            tape.gather_rows(bound.in_degree, &inputs.in_degree),
            tape.gather_rows(bound.out_degree, &inputs.out_degree),
            tape.gather_rows(bound.popularity, &inputs.popularity),
            tape.sparse_map(bound.position, inputs.positions.clone(), nb, self.config.dim),
        ];
        let base = tape.add_all(&parts);
        let master = tape.mean_rows(base);
        tape.concat_rows(&[base, master])
    }

    /// The combined `n×n` additive attention bias.
    pub fn bias_matrix(&self, tape: &mut Tape, bound: &Bound, inputs: &GraphInputs) -> Var {
        tape.sparse_map(bound.bias_table, inputs.bias.clone(), inputs.n, inputs.n)
    }

    /// Full forward pass for one graph.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, inputs: &GraphInputs) -> Result<Encoded> {
        let features = self.node_features(tape, bound, inputs);
        let bias = self.bias_matrix(tape, bound, inputs);
        let scale = 1.0 / (self.config.dim as f64).sqrt();
        let mut x = features;
        let mut attention = Vec::with_capacity(bound.layers.len());
        for layer in &bound.layers {
            let mut weights = Vec::with_capacity(layer.heads.len());
            let mut outputs = Vec::with_capacity(layer.heads.len());
            for &[wq, wk, wv] in &layer.heads {
                let q = tape.matmul(x, wq);
                let k = tape.matmul(x, wk);
                let v = tape.matmul(x, wv);
                let raw = tape.matmul_bt(q, k);
                let raw = tape.scale(raw, scale);
                let scores = tape.add(raw, bias);
                if !tape.value(scores).is_finite() {
                    return Err(Error::Numeric("non-finite attention score".into()));
                }
                let a = tape.row_softmax(scores);
                weights.push(a);
                outputs.push(tape.matmul(a, v));
            }
            let joined = if outputs.len() == 1 {
                outputs[0]
            } else {
                tape.concat_cols(&outputs)
            };
            x = tape.matmul(joined, layer.output);
            attention.push(weights);
        }
        let master = tape.gather_rows(x, &[inputs.master]);
        let last = tape.gather_rows(x, &[inputs.last]);
        let joined = tape.concat_cols(&[master, last]);
        let user = tape.matmul(joined, bound.readout);
        Ok(Encoded {
            features,
            attention,
            output: x,
            user,
        })
    }

    /// Unnormalized scores of every POI for the user representations
    /// (one row each).
    pub fn logits(&self, tape: &mut Tape, bound: &Bound, user: Var) -> Var {
        tape.matmul_bt(user, bound.poi)
    }

    /// Scores over the whole catalog for one graph, without gradients.
    pub fn score(&self, params: &ParamSet, inputs: &GraphInputs) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, params);
        let enc = self.encode(&mut tape, &bound, inputs)?;
        let logits = self.logits(&mut tape, &bound, enc.user);
        let out = tape.value(logits);
        if !out.is_finite() {
            return Err(Error::Numeric("non-finite POI scores".into()));
        }
        Ok(out.data().to_vec())
    }
}

/// Parameter-independent inputs for one master graph.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub n: usize,
    pub master: usize,
    pub last: usize,
    pub poi: Vec<usize>,
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
    pub popularity: Vec<usize>,
    positions: Arc<SparseMap>,
    bias: Arc<SparseMap>,
}

#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub heads: Vec<[Var; 3]>,
    pub output: Var,
}

/// Parameter handles on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    pub poi: Var,
    pub in_degree: Var,
    pub out_degree: Var,
    pub popularity: Var,
    pub position: Var,
    pub layers: Vec<BoundLayer>,
    /// Hop slots, then distance slots, then per-pair category scalars.
    pub bias_table: Var,
    pub readout: Var,
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub features: Var,
    /// `[layer][head]` row-stochastic `n×n` matrices.
    pub attention: Vec<Vec<Var>>,
    pub output: Var,
    /// `1×d` user representation.
    pub user: Var,
}

/// Softmax of a score vector.
pub fn predict(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    crate::numerics::softmax_in_place(&mut p);
    p
}

/// Mean negative log-likelihood of the targets (probability floored at
/// 1e-12).
pub fn rec_loss(tape: &mut Tape, logits: Var, targets: &[usize]) -> Var {
    let t: Vec<Option<usize>> = targets.iter().map(|&x| Some(x)).collect();
    tape.cross_entropy(logits, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{add_master_node, build_global_temporal, canonical_path};
    use crate::ingest::{Catalog, Poi, PoiIdx};
    use crate::numerics::{dot, grad_check};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn catalog(n: usize, cats: usize) -> Catalog {
        Catalog::new((0..n).map(|i| Poi {
            poi_id: format!("p{i:02}"),
            category_id: format!("c{}", i % cats),
            lat: 40.0 + 0.01 * (i as f64) + 0.003 * ((i * 7 % 5) as f64),
            lon: -74.0 + 0.02 * ((i * 3 % 7) as f64),
        }))
        .unwrap()
    }

    fn seq(ids: &[u32]) -> Vec<PoiIdx> {
        ids.iter().map(|&i| PoiIdx(i)).collect()
    }

    struct Fixture {
        model: Gsan,
        params: ParamSet,
        graph: MasterGraph,
        inputs: GraphInputs,
    }

    fn fixture(cfg: GsanConfig, ids: &[u32], seed: u64) -> Fixture {
        let cat = catalog(8, 3);
        let s = seq(ids);
        let gt = build_global_temporal(&[s.clone(), seq(&[1, 2, 3, 1, 4])], cat.len(), 4);
        let graph = add_master_node(TrajectoryGraph::from_sequence(&s, &cat), &cat, cfg.spd_cap);
        let bins = DistanceBins::from_graphs([&graph], cfg.dist_bins);
        let vocab = CategoryVocab::from_graphs([&graph.base]);
        let (model, mut params) = Gsan::new(cfg, bins, vocab, cat.len(), seed).unwrap();
        // nonzero bias tables so every term matters
        let mut r = rng::Rng::seed_from_u64(seed ^ 0xabc);
        for id in [model.spd_param(), model.distance_param()] {
            let t = params.get(id);
            let vals = uniform(t.rows(), t.cols(), 0.5, &mut r);
            params.assign(id, vals).unwrap();
        }
        let inputs = model.prepare(&graph, &gt).unwrap();
        Fixture {
            model,
            params,
            graph,
            inputs,
        }
    }

    fn small(dim: usize) -> GsanConfig {
        GsanConfig {
            dim,
            max_len: 10,
            dist_bins: 4,
            degree_buckets: 5,
            ..GsanConfig::default()
        }
    }

    #[test]
    fn reverse_positions_of_last_occurrences() {
        let cat = catalog(8, 2);
        let g = TrajectoryGraph::from_sequence(&seq(&[1, 2, 3, 4, 5, 3, 6, 4]), &cat);
        let pos = |p: u32| position_index(&g, g.position_of(PoiIdx(p)).unwrap()).unwrap();
        assert_eq!(
            [4, 6, 3, 5, 2, 1].map(pos),
            [1, 2, 3, 4, 7, 8],
            "p4→1, p6→2, p3→3, p5→4, p2→7, p1→8"
        );
    }

    #[test]
    fn position_beyond_table_is_rejected() {
        let cfg = GsanConfig {
            max_len: 3,
            ..small(4)
        };
        let cat = catalog(8, 2);
        let s = seq(&[0, 1, 2, 3]);
        let gt = build_global_temporal(&[s.clone()], cat.len(), 4);
        let g = add_master_node(TrajectoryGraph::from_sequence(&s, &cat), &cat, 2);
        let bins = DistanceBins::from_graphs([&g], 4);
        let (model, _) = Gsan::new(cfg, bins, CategoryVocab::default(), cat.len(), 0).unwrap();
        assert!(matches!(model.prepare(&g, &gt), Err(Error::Data(_))));
    }

    #[test]
    fn zero_encodings_leave_poi_embedding() {
        let mut f = fixture(small(4), &[0, 1, 2, 1], 1);
        for name in ["in_degree", "out_degree", "popularity", "position"] {
            let id = f.params.find(name).unwrap();
            let (r, c) = f.params.get(id).shape();
            f.params.assign(id, Tensor::zeros(r, c)).unwrap();
        }
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let x = f.model.node_features(&mut tape, &b, &f.inputs);
        let poi = f.params.get(f.model.poi_param());
        for (row, &p) in f.inputs.poi.iter().enumerate() {
            assert_eq!(tape.value(x).row(row), poi.row(p));
        }
    }

    #[test]
    fn master_feature_is_mean_of_base_rows() {
        let f = fixture(small(4), &[0, 1, 2, 3], 2);
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let x = f.model.node_features(&mut tape, &b, &f.inputs);
        let x = tape.value(x).clone();
        let nb = f.inputs.poi.len();
        for c in 0..4 {
            let mean = (0..nb).map(|r| x.get(r, c)).sum::<f64>() / nb as f64;
            assert!((x.get(nb, c) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn first_position_row_never_used() {
        let cat = catalog(8, 2);
        let mut g = TrajectoryGraph::from_sequence(&seq(&[0, 1]), &cat);
        let inserted = g.add_node(PoiIdx(5), cat.category(PoiIdx(5)), 0);
        g.edges.insert((1, inserted));
        let gt = build_global_temporal(&[seq(&[0, 1, 5])], cat.len(), 4);
        let mg = add_master_node(g, &cat, 2);
        let (model, params) = Gsan::new(small(4), DistanceBins::from_graphs([&mg], 4), CategoryVocab::default(), 8, 0).unwrap();
        let inputs = model.prepare(&mg, &gt).unwrap();
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, &params);
        let x = model.node_features(&mut tape, &b, &inputs);
        let loss = tape.sum_squares(x);
        let grads = tape.backward(loss);
        let pos = grads.of(b.position).unwrap();
        assert!(pos[..4].iter().all(|&g| g == 0.0));
        assert!(pos[4..].iter().any(|&g| g != 0.0));
    }

    fn interpolation_oracle(bins: &DistanceBins, table: &[f64], dist: f64) -> f64 {
        let edges: Vec<f64> = (0..=bins.bins).map(|k| bins.min + (bins.max - bins.min) * k as f64 / bins.bins as f64).collect();
        if dist <= edges[0] {
            return table[0];
        }
        if dist >= edges[bins.bins] {
            return table[bins.bins];
        }
        let k = edges.windows(2).position(|w| w[0] <= dist && dist < w[1]).unwrap();
        let (lower, upper) = (edges[k], edges[k + 1]);
        (table[k] * (upper - dist) + table[k + 1] * (dist - lower)) / (upper - lower)
    }

    #[test]
    fn distance_interpolation_examples() {
        let bins = DistanceBins::new(0.0, 1.0, 1);
        assert_eq!(distance_bias(&bins, &[0.0, 1.0], 0.25), 0.25);
        let bins = DistanceBins::new(2.0, 10.0, 4);
        let table = [0.3, -1.0, 0.7, 2.0, 5.0];
        for k in 0..=4 {
            assert_eq!(distance_bias(&bins, &table, bins.boundary(k)), table[k]);
        }
        assert_eq!(distance_bias(&bins, &table, 0.5), 0.3);
        assert_eq!(distance_bias(&bins, &table, 99.0), 5.0);
    }

    proptest! {
        #[test]
        fn interpolation_matches_oracle(
            min in 0.0f64..5.0, span in 0.1f64..20.0, bins in 1usize..30,
            dist in -1.0f64..30.0, seed in 0u64..100,
        ) {
            let b = DistanceBins::new(min, min + span, bins);
            let mut r = rng::Rng::seed_from_u64(seed);
            let table: Vec<f64> = (0..=bins).map(|_| r.gen_range(-3.0..3.0)).collect();
            let got = distance_bias(&b, &table, dist);
            prop_assert!((got - interpolation_oracle(&b, &table, dist)).abs() < 1e-6);
        }
    }

    /// Evaluates the bias matrix of a fixture.
    fn bias_of(f: &Fixture) -> Tensor {
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let m = f.model.bias_matrix(&mut tape, &b, &f.inputs);
        tape.value(m).clone()
    }

    fn only_category_bias(f: &mut Fixture) {
        for id in [f.model.spd_param(), f.model.distance_param()] {
            let (r, c) = f.params.get(id).shape();
            f.params.assign(id, Tensor::zeros(r, c)).unwrap();
        }
    }

    #[test]
    fn category_bias_constructed_dot_product() {
        // path 0→1: the one edge has a single pair embedding r
        let mut f = fixture(small(3), &[0, 1], 3);
        only_category_bias(&mut f);
        let (pairs, weight) = f.model.category_params();
        let k = f.model.vocab.index(f.graph.base.edge_category(0, 1));
        let r = f.params.get(pairs).row(k).to_vec();
        let norm2 = dot(&r, &r);
        let w: Vec<f64> = r.iter().map(|x| x / norm2).collect();
        f.params.assign(weight, Tensor::from_vec(3, 1, w).unwrap()).unwrap();
        let bias = bias_of(&f);
        assert!((bias.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((bias.get(1, 0) - 1.0).abs() < 1e-12);

        f.params.assign(weight, Tensor::zeros(3, 1)).unwrap();
        assert!(bias_of(&f).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn category_bias_two_edge_mean() {
        // path graph 0–1–2 with categories c0, c1, c2: edges (c0,c1), (c1,c2)
        let mut f = fixture(small(2), &[0, 1, 2], 4);
        only_category_bias(&mut f);
        let (pairs, weight) = f.model.category_params();
        let k01 = f.model.vocab.index(f.graph.base.edge_category(0, 1));
        let k12 = f.model.vocab.index(f.graph.base.edge_category(1, 2));
        let mut table = Tensor::zeros(f.model.vocab.len(), 2);
        table.set(k01, 0, 0.2);
        table.set(k12, 0, 0.6);
        f.params.assign(pairs, table).unwrap();
        f.params.assign(weight, Tensor::from_vec(2, 1, vec![1.0, 0.0]).unwrap()).unwrap();
        let bias = bias_of(&f);
        assert!((bias.get(0, 2) - 0.4).abs() < 1e-12, "{}", bias.get(0, 2));
        // master edges use UNKNOWN (row 0 is zero here)
        assert_eq!(bias.get(0, 3), 0.0);
    }

    #[test]
    fn unseen_pair_maps_to_unknown() {
        let vocab = CategoryVocab::default();
        let cat = catalog(4, 2);
        let pair = CategoryPair::new(cat.category(PoiIdx(0)), cat.category(PoiIdx(1)));
        assert_eq!(vocab.index(pair), 0);
        assert_eq!(vocab.len(), 1);
    }

    fn attention_of(f: &Fixture) -> (Vec<Tensor>, Tensor) {
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let enc = f.model.encode(&mut tape, &b, &f.inputs).unwrap();
        let att = enc.attention.iter().flatten().map(|&v| tape.value(v).clone()).collect();
        (att, tape.value(enc.user).clone())
    }

    #[test]
    fn identical_features_without_bias_attend_uniformly() {
        let mut f = fixture(small(4), &[0, 1, 2], 5);
        only_category_bias(&mut f);
        let (_, weight) = f.model.category_params();
        f.params.assign(weight, Tensor::zeros(4, 1)).unwrap();
        for name in ["in_degree", "out_degree", "popularity", "position"] {
            let id = f.params.find(name).unwrap();
            let (r, c) = f.params.get(id).shape();
            f.params.assign(id, Tensor::zeros(r, c)).unwrap();
        }
        let poi = f.model.poi_param();
        f.params.assign(poi, Tensor::full(8, 4, 0.3)).unwrap();
        let (att, _) = attention_of(&f);
        for v in att[0].data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_bias_takes_all_weight() {
        let mut f = fixture(small(4), &[0, 1, 2], 6);
        // path 0→1→2: only the pair 0↔2 sits at hop distance 2
        let spd = f.model.spd_param();
        let mut t = Tensor::zeros(f.params.get(spd).rows(), 1);
        t.set(2, 0, 1e9);
        f.params.assign(spd, t).unwrap();
        let (att, _) = attention_of(&f);
        assert!((att[0].get(0, 2) - 1.0).abs() < 1e-12);
        assert!((att[0].get(2, 0) - 1.0).abs() < 1e-12);
    }

    /// Independent dense evaluation of the encoder for a single head and
    /// layer, working from graph structure and raw parameter values.
    fn dense_oracle(f: &Fixture) -> (Vec<Vec<f64>>, Vec<f64>) {
        let m = &f.model;
        let p = &f.params;
        let g = &f.graph;
        let d = m.config.dim;
        let nb = g.base.len();
        let n = nb + 1;
        let get = |name: &str| p.get(p.find(name).unwrap()).clone();
        let mut x = vec![vec![0.0; d]; n];
        for i in 0..nb {
            let mut parts = vec![
                get("poi").row(f.inputs.poi[i]).to_vec(),
                get("in_degree").row(f.inputs.in_degree[i]).to_vec(),
                get("out_degree").row(f.inputs.out_degree[i]).to_vec(),
                get("popularity").row(f.inputs.popularity[i]).to_vec(),
            ];
            if let Some(pos) = position_index(&g.base, i) {
                parts.push(get("position").row(pos).to_vec());
            }
            for part in parts {
                for c in 0..d {
                    x[i][c] += part[c];
                }
            }
        }
        for c in 0..d {
            x[nb][c] = (0..nb).map(|i| x[i][c]).sum::<f64>() / nb as f64;
        }
        let spd_t = get("spd_bias");
        let dist_t = get("distance_bias");
        let pairs = get("category_pairs");
        let w_r = get("category_weight");
        let pair_score = |k: usize| dot(pairs.row(k), w_r.data());
        let cap = m.config.spd_cap as usize;
        let mut bias = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let master = i == nb || j == nb;
                let hop = if master { spd_t.get(cap + 1, 0) } else { spd_t.get((g.spd.get(i, j) as usize).min(cap), 0) };
                let dist = if master {
                    dist_t.get(m.config.dist_bins + 1, 0)
                } else {
                    let table: Vec<f64> = dist_t.data()[..=m.config.dist_bins].to_vec();
                    interpolation_oracle(&m.bins, &table, g.geo_dist[i * nb + j])
                };
                let label = |a: usize, b: usize| {
                    if a == nb || b == nb {
                        0
                    } else {
                        m.vocab.index(g.base.edge_category(a, b))
                    }
                };
                let cat = if i == j {
                    pair_score(label(i, i))
                } else {
                    let path = canonical_path(&g.adjacency, i, j).unwrap();
                    let k = path.len() - 1;
                    path.windows(2).map(|w| pair_score(label(w[0], w[1]))).sum::<f64>() / k as f64
                };
                bias[i][j] = hop + dist + cat;
            }
        }
        let mul = |a: &Vec<Vec<f64>>, w: &Tensor| -> Vec<Vec<f64>> {
            a.iter()
                .map(|row| (0..w.cols()).map(|c| (0..w.rows()).map(|k| row[k] * w.get(k, c)).sum()).collect())
                .collect()
        };
        let q = mul(&x, &get("layer0.head0.query"));
        let k = mul(&x, &get("layer0.head0.key"));
        let v = mul(&x, &get("layer0.head0.value"));
        let mut att = vec![vec![0.0; n]; n];
        for i in 0..n {
            let scores: Vec<f64> = (0..n).map(|j| dot(&q[i], &k[j]) / (d as f64).sqrt() + bias[i][j]).collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            for j in 0..n {
                att[i][j] = (scores[j] - mx).exp() / z;
            }
        }
        let mixed: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|c| (0..n).map(|j| att[i][j] * v[j][c]).sum()).collect()).collect();
        let out = mul(&mixed, &get("layer0.output"));
        let mut joined = out[nb].clone();
        joined.extend_from_slice(&out[g.base.last_node]);
        let user = mul(&vec![joined], &get("readout")).remove(0);
        (att, user)
    }

    #[test]
    fn encoder_matches_dense_oracle() {
        for (ids, seed) in [(&[0u32, 1, 2][..], 7u64), (&[3, 0, 5, 0, 2, 6][..], 8), (&[4][..], 9)] {
            let f = fixture(small(5), ids, seed);
            let (att, user) = attention_of(&f);
            let (att_o, user_o) = dense_oracle(&f);
            for (i, row) in att_o.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    assert!((att[0].get(i, j) - v).abs() < 1e-5);
                }
            }
            for (a, b) in user.data().iter().zip(&user_o) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn readout_identity_blocks() {
        let d = 3;
        let mut f = fixture(small(d), &[0, 1, 2, 4], 10);
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let enc = f.model.encode(&mut tape, &b, &f.inputs).unwrap();
        let out = tape.value(enc.output).clone();
        let id = f.model.readout_param();
        for (top, expect_row) in [(true, f.inputs.master), (false, f.inputs.last)] {
            let mut w = Tensor::zeros(2 * d, d);
            for c in 0..d {
                w.set(if top { c } else { d + c }, c, 1.0);
            }
            f.params.assign(id, w).unwrap();
            let (_, user) = attention_of(&f);
            assert_eq!(user.data(), out.row(expect_row));
        }
    }

    #[test]
    fn predict_limits_and_oracle() {
        let p = predict(&[0.0; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));

        let mut f = fixture(small(3), &[0, 1], 11);
        let mut poi = Tensor::zeros(8, 3);
        for i in 0..3 {
            poi.set(i, i, 100.0);
        }
        let poi_id = f.model.poi_param();
        f.params.assign(poi_id, poi.clone()).unwrap();
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let s = tape.constant(Tensor::row_vector(vec![0.0, 1.0, 0.0]));
        let logits = f.model.logits(&mut tape, &b, s);
        assert!(predict(tape.value(logits).data())[1] > 1.0 - 1e-12);

        let mut r = rng::Rng::seed_from_u64(3);
        let poi = uniform(8, 3, 1.0, &mut r);
        f.params.assign(poi_id, poi.clone()).unwrap();
        let user = vec![0.3, -0.7, 1.1];
        let mut tape = Tape::new();
        let b = f.model.bind(&mut tape, &f.params);
        let s = tape.constant(Tensor::row_vector(user.clone()));
        let logits = f.model.logits(&mut tape, &b, s);
        let got = predict(tape.value(logits).data());
        let raw: Vec<f64> = (0..8).map(|i| dot(poi.row(i), &user).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (g, e) in got.iter().zip(&raw) {
            assert!((g - e / z).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rec_loss_closed_forms() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::zeros(1, 100));
        let l = rec_loss(&mut tape, logits, &[37]);
        assert!((tape.value(l).item() - 100f64.ln()).abs() < 1e-12);

        let sure = tape.constant(Tensor::row_vector(vec![0.0, 1e4, 0.0]));
        let l = rec_loss(&mut tape, sure, &[1]);
        assert!(tape.value(l).item().abs() < 1e-12);

        let two = tape.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap());
        let ab = rec_loss(&mut tape, two, &[0, 1]);
        let a = -(1.0f64 / (1.0 + 1f64.exp())).ln();
        let b = -(1.0f64 / (1.0 + 3f64.exp())).ln();
        assert!((tape.value(ab).item() - (a + b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn master_pairs_have_no_structural_zero() {
        let f = fixture(small(4), &[0, 1, 2, 3, 4, 5], 12);
        let (att, _) = attention_of(&f);
        assert!(att[0].data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn encoder_loss_passes_grad_check() {
        let cfg = GsanConfig {
            heads: 2,
            layers: 2,
            ..small(3)
        };
        let f = fixture(cfg, &[0, 2, 1, 2, 5], 13);
        let report = grad_check(&f.params, 1e-5, |tape, params| {
            let b = f.model.bind(tape, params);
            let enc = f.model.encode(tape, &b, &f.inputs).unwrap();
            let logits = f.model.logits(tape, &b, enc.user);
            rec_loss(tape, logits, &[3])
        })
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
    }

    proptest! {
        #[test]
        fn attention_rows_are_distributions(
            ids in prop::collection::vec(0u32..8, 1..7),
            seed in 0u64..1000,
            extreme in prop::sample::select(vec![-50.0, 0.0, 50.0]),
        ) {
            let mut f = fixture(small(4), &ids, seed);
            let spd = f.model.spd_param();
            let (r, c) = f.params.get(spd).shape();
            f.params.assign(spd, Tensor::full(r, c, extreme)).unwrap();
            let (att, _) = attention_of(&f);
            for a in &att {
                for i in 0..a.rows() {
                    let s: f64 = a.row(i).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-6);
                    prop_assert!(a.row(i).iter().all(|&v| v >= 0.0));
                }
            }
        }

        #[test]
        fn positive_user_scaling_keeps_ranking(seed in 0u64..500, c in 0.1f64..10.0) {
            let mut r = rng::Rng::seed_from_u64(seed);
            let poi = uniform(8, 3, 1.0, &mut r);
            let user: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
            let order = |u: &[f64]| {
                let scores: Vec<f64> = (0..8).map(|i| dot(poi.row(i), u)).collect();
                let mut idx: Vec<usize> = (0..8).collect();
                idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
                idx
            };
            let scaled: Vec<f64> = user.iter().map(|v| v * c).collect();
            prop_assert_eq!(order(&user), order(&scaled));
        }
    }
}
