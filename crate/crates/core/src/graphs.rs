//! Local trajectory graphs, the global temporal (co-occurrence) and spatial
//! (proximity) graphs, hop distances and master-node augmentation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Catalog, CategoryIdx, PoiIdx, Trajectory};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in km between two `(lat, lon)` points in degrees.
pub fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Unordered pair of categories labelling an edge; stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryPair(pub CategoryIdx, pub CategoryIdx);

impl CategoryPair {
    pub fn new(a: CategoryIdx, b: CategoryIdx) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }
}

/// Directed graph over the unique POIs of one trajectory.
///
/// Node-local indices are `0..len()`; edges are stored as sorted
/// `(from, to)` pairs and always include one self-loop per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGraph {
    pub nodes: Vec<PoiIdx>,
    pub categories: Vec<CategoryIdx>,
    pub edges: BTreeSet<(usize, usize)>,
    /// 1-based step of each POI's last occurrence; 0 for nodes that do not
    /// come from a check-in (inserted by augmentation).
    pub last_step: Vec<usize>,
    pub last_node: usize,
    pub seq_len: usize,
}

impl TrajectoryGraph {
    pub fn from_sequence(seq: &[PoiIdx], catalog: &Catalog) -> Self {
        assert!(!seq.is_empty(), "trajectory graph of an empty sequence");
        let mut nodes: Vec<PoiIdx> = Vec::new();
        let mut local: BTreeMap<PoiIdx, usize> = BTreeMap::new();
        let mut last_step = Vec::new();
        let mut edges = BTreeSet::new();
        let mut prev: Option<usize> = None;
        for (t, &poi) in seq.iter().enumerate() {
            let i = *local.entry(poi).or_insert_with(|| {
                nodes.push(poi);
                last_step.push(0);
                nodes.len() - 1
            });
            last_step[i] = t + 1;
            if let Some(p) = prev {
                edges.insert((p, i));
            }
            prev = Some(i);
        }
        for i in 0..nodes.len() {
            edges.insert((i, i));
        }
        let categories = nodes.iter().map(|&p| catalog.category(p)).collect();
        TrajectoryGraph {
            nodes,
            categories,
            edges,
            last_step,
            last_node: prev.expect("nonempty"),
            seq_len: seq.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position_of(&self, poi: PoiIdx) -> Option<usize> {
        self.nodes.iter().position(|&p| p == poi)
    }

    pub fn contains(&self, poi: PoiIdx) -> bool {
        self.nodes.contains(&poi)
    }

    pub fn edge_category(&self, from: usize, to: usize) -> CategoryPair {
        CategoryPair::new(self.categories[from], self.categories[to])
    }

    pub fn non_loop_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|(a, b)| a != b)
    }

    pub fn successors(&self, i: usize) -> Vec<usize> {
        self.non_loop_edges().filter(|e| e.0 == i).map(|e| e.1).collect()
    }

    pub fn predecessors(&self, i: usize) -> Vec<usize> {
        self.non_loop_edges().filter(|e| e.1 == i).map(|e| e.0).collect()
    }

    /// Direction-ignored neighbour lists without self-loops, sorted.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![BTreeSet::new(); self.len()];
        for (a, b) in self.non_loop_edges() {
            adj[a].insert(b);
            adj[b].insert(a);
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Connectivity with edge directions ignored.
    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return false;
        }
        let adj = self.undirected_adjacency();
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.len()
    }

    /// Appends a node with its self-loop and returns its local index.
    pub fn add_node(&mut self, poi: PoiIdx, category: CategoryIdx, last_step: usize) -> usize {
        self.nodes.push(poi);
        self.categories.push(category);
        self.last_step.push(last_step);
        let i = self.nodes.len() - 1;
        self.edges.insert((i, i));
        i
    }

    /// Removes node `i` and its edges, shifting higher local indices down.
    pub fn remove_node(&mut self, i: usize) {
        assert!(i != self.last_node, "the last check-in node cannot be removed");
        self.nodes.remove(i);
        self.categories.remove(i);
        self.last_step.remove(i);
        let shift = |x: usize| if x > i { x - 1 } else { x };
        self.edges = self
            .edges
            .iter()
            .filter(|(a, b)| *a != i && *b != i)
            .map(|&(a, b)| (shift(a), shift(b)))
            .collect();
        self.last_node = shift(self.last_node);
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Data("trajectory graph has no nodes".into()));
        }
        if self.categories.len() != n || self.last_step.len() != n {
            return Err(Error::Data("trajectory graph attribute lengths disagree".into()));
        }
        if self.last_node >= n {
            return Err(Error::Data("last node out of range".into()));
        }
        for i in 0..n {
            if !self.edges.contains(&(i, i)) {
                return Err(Error::Data(format!("node {i} has no self-loop")));
            }
        }
        if self.edges.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::Data("edge endpoint out of range".into()));
        }
        let unique: BTreeSet<PoiIdx> = self.nodes.iter().copied().collect();
        if unique.len() != n {
            return Err(Error::Data("duplicate POI in trajectory graph".into()));
        }
        Ok(())
    }
}

/// Resolves POI ids through the catalog and builds the local graph.
pub fn build_trajectory_graph(traj: &Trajectory, catalog: &Catalog) -> Result<TrajectoryGraph> {
    if traj.is_empty() {
        return Err(Error::Data("cannot build a graph from an empty trajectory".into()));
    }
    Ok(TrajectoryGraph::from_sequence(&catalog.sequence(traj)?, catalog))
}

/// Consecutive-visit statistics over a set of sequences. Merging is a
/// commutative sum, so partial counts can be built in parallel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionCounts {
    /// Undirected pair `(min, max)` → count.
    pub pairs: BTreeMap<(PoiIdx, PoiIdx), u32>,
    /// Directed `(from, to)` pairs seen at least once.
    pub directed: BTreeSet<(PoiIdx, PoiIdx)>,
    pub visits: BTreeMap<PoiIdx, u32>,
}

impl TransitionCounts {
    pub fn from_sequences<S: AsRef<[PoiIdx]>>(seqs: &[S]) -> Self {
        let mut out = Self::default();
        for seq in seqs {
            out.add_sequence(seq.as_ref());
        }
        out
    }

    pub fn add_sequence(&mut self, seq: &[PoiIdx]) {
        for &p in seq {
            *self.visits.entry(p).or_default() += 1;
        }
        for w in seq.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            *self.pairs.entry((a.min(b), a.max(b))).or_default() += 1;
            self.directed.insert((a, b));
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (k, v) in other.pairs {
            *self.pairs.entry(k).or_default() += v;
        }
        self.directed.extend(other.directed);
        for (k, v) in other.visits {
            *self.visits.entry(k).or_default() += v;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTemporalGraph {
    pub num_nodes: usize,
    /// Direction-ignored consecutive-visit counts keyed by `(min, max)`.
    pub cooccurrence: BTreeMap<(PoiIdx, PoiIdx), u32>,
    /// Per node, at most `N` neighbours by descending count, ties by
    /// ascending POI index.
    pub neighbors: Vec<Vec<(PoiIdx, u32)>>,
    /// Distinct POIs transiting into each POI.
    pub in_degree: Vec<u32>,
    /// Distinct POIs visited next from each POI.
    pub out_degree: Vec<u32>,
    pub visits: Vec<u32>,
}

impl GlobalTemporalGraph {
    pub fn from_counts(counts: TransitionCounts, num_nodes: usize, max_neighbors: usize) -> Self {
        assert!(max_neighbors >= 1, "neighbour cap must be at least 1");
        let mut all: Vec<Vec<(PoiIdx, u32)>> = vec![Vec::new(); num_nodes];
        for (&(a, b), &c) in &counts.pairs {
            all[a.index()].push((b, c));
            all[b.index()].push((a, c));
        }
        let neighbors = all
            .into_iter()
            .map(|mut list| {
                list.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
                list.truncate(max_neighbors);
                list
            })
            .collect();
        let mut in_degree = vec![0; num_nodes];
        let mut out_degree = vec![0; num_nodes];
        for &(a, b) in &counts.directed {
            out_degree[a.index()] += 1;
            in_degree[b.index()] += 1;
        }
        let mut visits = vec![0; num_nodes];
        for (p, v) in &counts.visits {
            visits[p.index()] = *v;
        }
        Self {
            num_nodes,
            cooccurrence: counts.pairs,
            neighbors,
            in_degree,
            out_degree,
            visits,
        }
    }

    pub fn neighbor_ids(&self, p: PoiIdx) -> impl Iterator<Item = PoiIdx> + '_ {
        self.neighbors[p.index()].iter().map(|(q, _)| *q)
    }
}

pub fn build_global_temporal<S: AsRef<[PoiIdx]> + Sync>(
    seqs: &[S],
    num_nodes: usize,
    max_neighbors: usize,
) -> GlobalTemporalGraph {
    let counts = seqs
        .par_chunks(256)
        .map(TransitionCounts::from_sequences)
        .reduce(TransitionCounts::default, TransitionCounts::merge);
    GlobalTemporalGraph::from_counts(counts, num_nodes, max_neighbors)
}

/// Undirected proximity graph: an edge joins two distinct POIs whose
/// great-circle distance is below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSpatialGraph {
    pub threshold_km: f64,
    /// Sorted neighbour lists with distances in km.
    pub adjacency: Vec<Vec<(PoiIdx, f64)>>,
}

impl GlobalSpatialGraph {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: PoiIdx, b: PoiIdx) -> bool {
        self.adjacency[a.index()]
            .binary_search_by(|(q, _)| q.cmp(&b))
            .is_ok()
    }
}

/// Quadratic scan restricted to a latitude band of width `threshold_km`.
pub fn build_global_spatial(catalog: &Catalog, threshold_km: f64) -> GlobalSpatialGraph {
    assert!(threshold_km > 0.0, "distance threshold must be positive");
    // one degree of latitude is ~111.19 km on a 6371 km sphere; pad the band
    let band_deg = threshold_km / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0) * 1.0001 + 1e-9;
    let mut by_lat: Vec<(f64, PoiIdx)> = catalog.indices().map(|p| (catalog.coords(p).0, p)).collect();
    by_lat.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let forward: Vec<Vec<(PoiIdx, PoiIdx, f64)>> = (0..by_lat.len())
        .into_par_iter()
        .map(|i| {
            let (lat_i, a) = by_lat[i];
            let mut out = Vec::new();
            for &(lat_j, b) in &by_lat[i + 1..] {
                if lat_j - lat_i > band_deg {
                    break;
                }
                let d = haversine(catalog.coords(a), catalog.coords(b));
                if d < threshold_km {
                    out.push((a, b, d));
                }
            }
            out
        })
        .collect();

    let mut adjacency = vec![Vec::new(); catalog.len()];
    for (a, b, d) in forward.into_iter().flatten() {
        adjacency[a.index()].push((b, d));
        adjacency[b.index()].push((a, d));
    }
    for list in &mut adjacency {
        list.sort_by_key(|x| x.0);
    }
    GlobalSpatialGraph {
        threshold_km,
        adjacency,
    }
}

/// Square table of hop counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpdTable {
    n: usize,
    hops: Vec<u32>,
}

impl SpdTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.hops[i * self.n + j]
    }

    pub fn max(&self) -> u32 {
        self.hops.iter().copied().max().unwrap_or(0)
    }
}

/// Breadth-first hop counts from every node over an undirected adjacency
/// list. Distances are clamped to `cap`; unreachable pairs get `cap`.
pub fn all_pairs_spd(adjacency: &[Vec<usize>], cap: u32) -> SpdTable {
    let n = adjacency.len();
    let mut hops = vec![cap; n * n];
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for t in 0..n {
            if dist[t] != u32::MAX {
                hops[s * n + t] = dist[t].min(cap);
            }
        }
    }
    SpdTable { n, hops }
}

/// BFS parent of every node reachable from `from`, expanding neighbours in
/// the order they are listed. `from` is its own parent; unreachable nodes get
/// `usize::MAX`. Walking parents back from any target reproduces
/// [`canonical_path`].
pub fn bfs_parents(adjacency: &[Vec<usize>], from: usize) -> Vec<usize> {
    let mut parent = vec![usize::MAX; adjacency.len()];
    parent[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    parent
}

/// Canonical shortest path from `from` to `to` as a node sequence, found by
/// BFS that expands neighbours in ascending index order. `None` if
/// unreachable.
pub fn canonical_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let n = adjacency.len();
    let mut parent = vec![usize::MAX; n];
    parent[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adjacency[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if parent[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// A trajectory graph plus a virtual master node (index `base.len()`)
/// linked to every POI node.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterGraph {
    pub base: TrajectoryGraph,
    /// Direction-ignored adjacency over all `len()` nodes, master included.
    pub adjacency: Vec<Vec<usize>>,
    pub spd: SpdTable,
    /// Haversine km between base nodes, row-major `base.len()²`.
    pub geo_dist: Vec<f64>,
}

impl MasterGraph {
    pub fn master(&self) -> usize {
        self.base.len()
    }

    pub fn len(&self) -> usize {
        self.base.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Geographic distance between two base nodes; `None` if either is the
    /// master node.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.base.len();
        (i < n && j < n).then(|| self.geo_dist[i * n + j])
    }
}

pub fn add_master_node(g: TrajectoryGraph, catalog: &Catalog, spd_cap: u32) -> MasterGraph {
    assert!(!g.is_empty(), "master node needs a nonempty graph");
    let n = g.len();
    let mut adjacency = g.undirected_adjacency();
    for list in adjacency.iter_mut() {
        list.push(n);
    }
    adjacency.push((0..n).collect());
    let spd = all_pairs_spd(&adjacency, spd_cap);
    let coords: Vec<(f64, f64)> = g.nodes.iter().map(|&p| catalog.coords(p)).collect();
    let mut geo_dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = haversine(coords[i], coords[j]);
            geo_dist[i * n + j] = d;
            geo_dist[j * n + i] = d;
        }
    }
    MasterGraph {
        base: g,
        adjacency,
        spd,
        geo_dist,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    Temporal,
    Spatial,
    Trajectory,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Temporal => "global-temporal",
            GraphKind::Spatial => "global-spatial",
            GraphKind::Trajectory => "trajectory",
        })
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-temporal" => Ok(GraphKind::Temporal),
            "global-spatial" => Ok(GraphKind::Spatial),
            "trajectory" => Ok(GraphKind::Trajectory),
            other => Err(Error::Data(format!("unknown graph kind `{other}`"))),
        }
    }
}

/// Weighted edge list as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub kind: GraphKind,
    pub node_count: usize,
    pub edges: Vec<(String, String, f64)>,
}

impl EdgeList {
    /// Temporal edges weighted by co-occurrence count; every retained
    /// `(node, neighbour)` pair is one line.
    pub fn temporal(g: &GlobalTemporalGraph, catalog: &Catalog) -> Self {
        let mut edges = Vec::new();
        for p in catalog.indices() {
            for &(q, c) in &g.neighbors[p.index()] {
                edges.push((catalog.poi(p).poi_id.clone(), catalog.poi(q).poi_id.clone(), c as f64));
            }
        }
        Self {
            kind: GraphKind::Temporal,
            node_count: g.num_nodes,
            edges,
        }
    }

    /// Spatial edges weighted by distance in km, each undirected edge once.
    pub fn spatial(g: &GlobalSpatialGraph, catalog: &Catalog) -> Self {
        let mut edges = Vec::new();
        for p in catalog.indices() {
            for &(q, d) in &g.adjacency[p.index()] {
                if p < q {
                    edges.push((catalog.poi(p).poi_id.clone(), catalog.poi(q).poi_id.clone(), d));
                }
            }
        }
        Self {
            kind: GraphKind::Spatial,
            node_count: g.num_nodes(),
            edges,
        }
    }

    /// Header `<node count> <edge count> <kind>`, then one
    /// `<from>\t<to>\t<weight>` line per edge with 6 fractional digits.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.node_count, self.edges.len(), self.kind)?;
        for (a, b, x) in &self.edges {
            writeln!(w, "{a}\t{b}\t{x:.6}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let bad = |m: &str| Error::Data(format!("edge list: {m}"));
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .map_err(|e| bad(&e.to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad("header must be `<nodes> <edges> <kind>`"));
        }
        let node_count = parts[0].parse().map_err(|_| bad("bad node count"))?;
        let edge_count: usize = parts[1].parse().map_err(|_| bad("bad edge count"))?;
        let kind = parts[2].parse()?;
        let mut edges = Vec::with_capacity(edge_count);
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(&format!("malformed edge line `{line}`")));
            }
            let x = f[2].parse().map_err(|_| bad("bad weight"))?;
            edges.push((f[0].to_string(), f[1].to_string(), x));
        }
        if edges.len() != edge_count {
            return Err(bad(&format!(
                "header declares {edge_count} edges, found {}",
                edges.len()
            )));
        }
        Ok(Self {
            kind,
            node_count,
            edges,
        })
    }
}
