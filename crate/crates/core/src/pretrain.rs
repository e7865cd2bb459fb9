//! node2vec pretraining on the global graphs: second-order biased random
//! walks, skip-gram with negative sampling, and additive fusion of the
//! spatial and temporal tables.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{GlobalSpatialGraph, GlobalTemporalGraph};
use crate::ingest::Catalog;
use crate::rng;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"PEMB";
pub const EMBEDDING_VERSION: u32 = 1;

/// One `dim`-vector per POI, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{dim} embedding table",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        cosine(self.row(i), self.row(j))
    }

    /// Writes the binary table plus a `<path>.ids` sidecar mapping row index
    /// to POI id.
    pub fn save(&self, path: &Path, catalog: &Catalog) -> Result<()> {
        if catalog.len() != self.rows {
            return Err(Error::Shape(format!(
                "table has {} rows but the catalog has {} POIs",
                self.rows,
                catalog.len()
            )));
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(&EMBEDDING_MAGIC).map_err(io)?;
        w.write_all(&EMBEDDING_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.rows as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;

        let ids = ids_path(path);
        let mut text = String::new();
        for (i, p) in catalog.pois().iter().enumerate() {
            text.push_str(&format!("{i}\t{}\n", p.poi_id));
        }
        fs::write(&ids, text).map_err(|e| Error::io(&ids, e))
    }

    /// Reads a table and its id sidecar, checking that row ids match the
    /// catalog order.
    pub fn load(path: &Path, catalog: &Catalog) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || bytes[..4] != EMBEDDING_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "embedding table",
            });
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != EMBEDDING_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: EMBEDDING_VERSION,
            });
        }
        let (rows, dim) = (word(8) as usize, word(12) as usize);
        let body = &bytes[16..];
        if body.len() != rows * dim * 4 {
            return Err(Error::Data(format!(
                "{}: expected {} bytes of table data, found {}",
                path.display(),
                rows * dim * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();

        let ids = ids_path(path);
        let text = fs::read_to_string(&ids).map_err(|e| Error::io(&ids, e))?;
        let names: Vec<&str> = text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| l.split('\t').nth(1).unwrap_or(""))
            .collect();
        let expected: Vec<&str> = catalog.pois().iter().map(|p| p.poi_id.as_str()).collect();
        if names != expected {
            return Err(Error::Data(format!(
                "{}: row ids do not match the catalog",
                ids.display()
            )));
        }
        Self::from_vec(rows, dim, data)
    }
}

fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Adjacency used for walks. Lists are sorted; an edge `u → v` exists when
/// `v` is in `neighbors[u]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkGraph {
    neighbors: Vec<Vec<u32>>,
}

impl WalkGraph {
    pub fn new(mut neighbors: Vec<Vec<u32>>) -> Self {
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn from_spatial(g: &GlobalSpatialGraph) -> Self {
        Self::new(
            g.adjacency
                .iter()
                .map(|l| l.iter().map(|(q, _)| q.0).collect())
                .collect(),
        )
    }

    /// Uses each node's retained top-N neighbour list.
    pub fn from_temporal(g: &GlobalTemporalGraph) -> Self {
        Self::new(
            g.neighbors
                .iter()
                .map(|l| l.iter().map(|(q, _)| q.0).collect())
                .collect(),
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.neighbors[u as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors[u as usize].binary_search(&v).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_len: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_len: 40,
            p: 1.0,
            q: 1.0,
        }
    }
}

/// Unnormalized node2vec weight of stepping to `next` from `cur`, having
/// arrived from `prev`.
pub fn transition_weight(graph: &WalkGraph, prev: u32, next: u32, p: f64, q: f64) -> f64 {
    if next == prev {
        1.0 / p
    } else if graph.has_edge(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

fn walk_from(graph: &WalkGraph, start: u32, cfg: &WalkConfig, rng: &mut rng::Rng) -> Vec<u32> {
    let mut walk = Vec::with_capacity(cfg.walk_len);
    walk.push(start);
    let mut weights = Vec::new();
    while walk.len() < cfg.walk_len {
        let cur = *walk.last().expect("nonempty");
        let nbrs = graph.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        let next = if walk.len() == 1 {
            nbrs[rng.gen_range(0..nbrs.len())]
        } else {
            let prev = walk[walk.len() - 2];
            weights.clear();
            weights.extend(nbrs.iter().map(|&x| transition_weight(graph, prev, x, cfg.p, cfg.q)));
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = nbrs.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = k;
                    break;
                }
                r -= w;
            }
            nbrs[pick]
        };
        walk.push(next);
    }
    walk
}

/// `walks_per_node` rounds, each starting one walk at every node in index
/// order. Each walk draws from its own derived seed, so the result does not
/// depend on thread scheduling.
pub fn random_walks(graph: &WalkGraph, cfg: &WalkConfig, seed: u64) -> Vec<Vec<u32>> {
    assert!(cfg.walk_len >= 2, "walks need at least two steps");
    assert!(cfg.p > 0.0 && cfg.q > 0.0, "node2vec p and q must be positive");
    let n = graph.num_nodes();
    (0..cfg.walks_per_node * n)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::child(seed, k as u64);
            walk_from(graph, (k % n) as u32, cfg, &mut r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting rate, decayed linearly towards zero over all epochs.
    pub lr: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 160,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
        }
    }
}

/// word2vec-style initialization: uniform in `±0.5/dim`.
pub fn init_table(rows: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng::child(seed, u64::MAX);
    let half = 0.5 / dim as f32;
    let data = (0..rows * dim).map(|_| r.gen_range(-half..half)).collect();
    EmbeddingTable { rows, dim, data }
}

fn sigmoid(x: f32) -> f32 {
    if x > 20.0 {
        1.0
    } else if x < -20.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Skip-gram with negative sampling over walk corpora. Negatives are drawn
/// from the unigram distribution of walk tokens raised to 0.75. Single
/// worker, so fully determined by `seed`.
pub fn train_skipgram(walks: &[Vec<u32>], num_nodes: usize, cfg: &SkipGramConfig, seed: u64) -> EmbeddingTable {
    assert!(cfg.dim >= 1 && cfg.window >= 1, "dimension and window must be positive");
    let mut counts = vec![0u64; num_nodes];
    for w in walks {
        for &t in w {
            counts[t as usize] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        log::warn!("empty walk corpus; returning a zero embedding table");
        return EmbeddingTable::zeros(num_nodes, cfg.dim);
    }
    let mut input = init_table(num_nodes, cfg.dim, seed);
    let mut output = EmbeddingTable::zeros(num_nodes, cfg.dim);
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .expect("at least one positive weight");
    let mut r = rng::child(seed, 0);

    let pairs_per_epoch: usize = walks
        .iter()
        .map(|w| {
            (0..w.len())
                .map(|i| i.min(cfg.window) + (w.len() - 1 - i).min(cfg.window))
                .sum::<usize>()
        })
        .sum();
    let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut grad = vec![0.0f32; cfg.dim];

    for _ in 0..cfg.epochs {
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = (cfg.lr * (1.0 - done as f64 / total)).max(cfg.lr * 1e-4) as f32;
                    done += 1;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0f32)
                        } else {
                            let neg = noise.sample(&mut r) as u32;
                            if neg == context {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let c = input.row(center as usize);
                        let o = output.row(target as usize);
                        let score: f32 = c.iter().zip(o).map(|(a, b)| a * b).sum();
                        let step = (label - sigmoid(score)) * lr;
                        for (g, ov) in grad.iter_mut().zip(o) {
                            *g += step * ov;
                        }
                        let c = input.row(center as usize).to_vec();
                        for (ov, cv) in output.row_mut(target as usize).iter_mut().zip(&c) {
                            *ov += step * cv;
                        }
                    }
                    for (cv, g) in input.row_mut(center as usize).iter_mut().zip(&grad) {
                        *cv += g;
                    }
                }
            }
        }
    }
    input
}

/// Elementwise sum of the spatial and temporal tables.
pub fn fuse_embeddings(spatial: &EmbeddingTable, temporal: &EmbeddingTable) -> Result<EmbeddingTable> {
    if spatial.rows != temporal.rows || spatial.dim != temporal.dim {
        return Err(Error::Shape(format!(
            "cannot fuse {}x{} with {}x{}",
            spatial.rows, spatial.dim, temporal.rows, temporal.dim
        )));
    }
    let data = spatial.data.iter().zip(&temporal.data).map(|(a, b)| a + b).collect();
    Ok(EmbeddingTable {
        rows: spatial.rows,
        dim: spatial.dim,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PretrainConfig {
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub spatial: EmbeddingTable,
    pub temporal: EmbeddingTable,
    pub fused: EmbeddingTable,
}

/// Embeds both global graphs (independent substreams of `seed`) and fuses
/// them.
pub fn pretrain(
    spatial: &GlobalSpatialGraph,
    temporal: &GlobalTemporalGraph,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<Pretrained> {
    let embed = |graph: WalkGraph, name: &str| {
        let walk_seed = rng::derive_seed(seed, &format!("{name}/walks"));
        let sg_seed = rng::derive_seed(seed, &format!("{name}/skipgram"));
        let walks = random_walks(&graph, &cfg.walk, walk_seed);
        train_skipgram(&walks, graph.num_nodes(), &cfg.skipgram, sg_seed)
    };
    let spatial = embed(WalkGraph::from_spatial(spatial), "spatial");
    let temporal = embed(WalkGraph::from_temporal(temporal), "temporal");
    let fused = fuse_embeddings(&spatial, &temporal)?;
    if !fused.is_finite() {
        return Err(Error::Numeric("pretrained embeddings contain non-finite values".into()));
    }
    Ok(Pretrained {
        spatial,
        temporal,
        fused,
    })
}
