//! Undirected simple graphs, random generators, chordless-path profiles and
//! decomposability machinery.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Unordered vertex pair, stored with the smaller label first.
pub type Edge = (usize, usize);

/// Canonical form of an unordered pair.
#[inline]
pub fn edge(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected simple graph on vertices `0..p`.
///
/// Edges are kept sorted and deduplicated; adjacency is mirrored in a bitset
/// so neighbor intersections are word operations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    p: usize,
    edges: Vec<Edge>,
    words: usize,
    adj: Vec<u64>,
}

impl Graph {
    pub fn new<I>(p: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        if p == 0 {
            return Err(Error::InvalidConfig("a graph needs at least one vertex".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for v in [i, j] {
                if v >= p {
                    return Err(Error::IndexOutOfRange { index: v, p });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            set.insert(edge(i, j));
        }
        Ok(Self::from_sorted(p, set.into_iter().collect()))
    }

    fn from_sorted(p: usize, edges: Vec<Edge>) -> Self {
        let words = p.div_ceil(64);
        let mut adj = vec![0u64; words * p];
        for &(i, j) in &edges {
            adj[i * words + j / 64] |= 1 << (j % 64);
            adj[j * words + i / 64] |= 1 << (i % 64);
        }
        Graph { p, edges, words, adj }
    }

    pub fn empty(p: usize) -> Self {
        Self::from_sorted(p.max(1), Vec::new())
    }

    pub fn complete(p: usize) -> Self {
        let p = p.max(1);
        let edges = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
        Self::from_sorted(p, edges)
    }

    /// Cycle 0–1–…–(p−1)–0. For p < 3 this degenerates to a path.
    pub fn cycle(p: usize) -> Self {
        let p = p.max(1);
        let mut edges: BTreeSet<Edge> = (0..p.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if p >= 3 {
            edges.insert((0, p - 1));
        }
        Self::from_sorted(p, edges.into_iter().collect())
    }

    /// Path 0–1–…–(p−1).
    pub fn path(p: usize) -> Self {
        let p = p.max(1);
        Self::from_sorted(p, (0..p - 1).map(|i| (i, i + 1)).collect())
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of unordered vertex pairs, C(p, 2).
    pub fn n_pairs(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && (self.adj[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    fn row(&self, v: usize) -> &[u64] {
        &self.adj[v * self.words..(v + 1) * self.words]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(v).iter().enumerate().flat_map(|(w, &bits)| {
            let mut bits = bits;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + t)
            })
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row(v).iter().map(|b| b.count_ones() as usize).sum()
    }

    /// |N(i) ∩ N(j)|.
    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// All unordered pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = Edge> {
        let p = self.p;
        (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
    }

    pub fn with_edge(&self, i: usize, j: usize) -> Self {
        let e = edge(i, j);
        match self.edges.binary_search(&e) {
            Ok(_) => self.clone(),
            Err(pos) => {
                let mut out = self.clone();
                out.edges.insert(pos, e);
                out.set_bit(e.0, e.1, true);
                out
            }
        }
    }

    pub fn without_edge(&self, i: usize, j: usize) -> Self {
        let e = edge(i, j);
        match self.edges.binary_search(&e) {
            Err(_) => self.clone(),
            Ok(pos) => {
                let mut out = self.clone();
                out.edges.remove(pos);
                out.set_bit(e.0, e.1, false);
                out
            }
        }
    }

    fn set_bit(&mut self, i: usize, j: usize, on: bool) {
        let w = self.words;
        for (a, b) in [(i, j), (j, i)] {
            let word = &mut self.adj[a * w + b / 64];
            if on {
                *word |= 1 << (b % 64);
            } else {
                *word &= !(1 << (b % 64));
            }
        }
    }

    pub fn complement(&self) -> Self {
        let edges = self.pairs().filter(|&(i, j)| !self.has_edge(i, j)).collect();
        Self::from_sorted(self.p, edges)
    }

    /// Subgraph induced by `vertices`, relabelled `vertices[k] -> k`.
    pub fn induced(&self, vertices: &[usize]) -> Self {
        let mut edges = Vec::new();
        for (a, &u) in vertices.iter().enumerate() {
            for (b, &v) in vertices.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    edges.push(edge(a, b));
                }
            }
        }
        edges.sort_unstable();
        Self::from_sorted(vertices.len().max(1), edges)
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.p];
        let mut out = Vec::new();
        for s in 0..self.p {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for w in self.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// FNV-1a hash of the vertex count and sorted edge list. Stable across runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.p as u64);
        for &(i, j) in &self.edges {
            eat(i as u64);
            eat(j as u64);
        }
        h
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            schema_version: Some(crate::SCHEMA_VERSION),
            p: self.p,
            edges: self.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        Self::new(json.p, json.edges.iter().map(|e| (e[0], e[1])))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: GraphJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&json)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("graph serialization cannot fail")
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(p={}, edges={:?})", self.p, self.edges)
    }
}

/// On-disk graph format: `{"p": int, "edges": [[i, j], ...]}`, 0-based.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
}

// ---------------------------------------------------------------------------
// Generators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    ScaleFree,
    RandomP,
    Random2P,
    Cluster,
}

impl GraphKind {
    pub const ALL: [GraphKind; 4] = [
        GraphKind::ScaleFree,
        GraphKind::RandomP,
        GraphKind::Random2P,
        GraphKind::Cluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::ScaleFree => "scale_free",
            GraphKind::RandomP => "random_p",
            GraphKind::Random2P => "random_2p",
            GraphKind::Cluster => "cluster",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "scale_free" | "scalefree" => Ok(GraphKind::ScaleFree),
            "random_p" => Ok(GraphKind::RandomP),
            "random_2p" => Ok(GraphKind::Random2P),
            "cluster" => Ok(GraphKind::Cluster),
            _ => Err(Error::UnsupportedKind(s.to_string())),
        }
    }
}

/// Per-edge Bernoulli probability giving `expected` edges on `p` vertices.
fn bernoulli_prob(p: usize, expected: f64) -> f64 {
    let pairs = (p * (p - 1)) as f64 / 2.0;
    (expected / pairs).min(1.0)
}

/// Number of clusters used by [`GraphKind::Cluster`].
pub fn cluster_count(p: usize) -> usize {
    (p / 20).max(2)
}

/// Contiguous near-equal vertex blocks used by [`GraphKind::Cluster`].
pub fn cluster_ranges(p: usize) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    rng::block_sizes(p, cluster_count(p))
        .into_iter()
        .map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Random graph of the given kind. Deterministic in `(kind, p, seed)`.
pub fn generate(kind: GraphKind, p: usize, seed: u64) -> Result<Graph> {
    let min = if kind == GraphKind::Cluster { 4 } else { 2 };
    if p < min {
        return Err(Error::TooFewVertices { p, min });
    }
    let mut rng = rng::seeded(seed);
    let mut edges = Vec::new();
    match kind {
        GraphKind::ScaleFree => {
            // one edge per arriving vertex, target chosen proportionally to degree
            let mut ends = vec![0usize, 1];
            edges.push((0, 1));
            for v in 2..p {
                let t = ends[rng.random_range(0..ends.len())];
                edges.push(edge(t, v));
                ends.push(t);
                ends.push(v);
            }
        }
        GraphKind::RandomP | GraphKind::Random2P => {
            let scale = if kind == GraphKind::RandomP { 1.0 } else { 2.0 };
            let prob = bernoulli_prob(p, scale * p as f64);
            for i in 0..p {
                for j in i + 1..p {
                    if rng.random::<f64>() < prob {
                        edges.push((i, j));
                    }
                }
            }
        }
        GraphKind::Cluster => {
            for range in cluster_ranges(p) {
                let m = range.len();
                let prob = bernoulli_prob(m, m as f64);
                for i in range.clone() {
                    for j in i + 1..range.end {
                        if rng.random::<f64>() < prob {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
    }
    Graph::new(p, edges)
}

/// Uniformly random graph on `p` vertices with exactly `m` edges.
pub fn random_with_edge_count(p: usize, m: usize, seed: u64) -> Result<Graph> {
    let g = Graph::empty(p);
    let mut pairs: Vec<Edge> = g.pairs().collect();
    if m > pairs.len() {
        return Err(Error::InvalidConfig(format!(
            "{m} edges requested on {p} vertices"
        )));
    }
    let mut rng = rng::seeded(seed);
    // partial Fisher-Yates
    for k in 0..m {
        let t = rng.random_range(k..pairs.len());
        pairs.swap(k, t);
    }
    Graph::new(p, pairs[..m].iter().copied())
}

// ---------------------------------------------------------------------------
// Chordless paths

/// Enumeration caps for [`path_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCaps {
    /// Longest path, in edges, that is enumerated.
    pub max_len: usize,
    pub max_paths: usize,
}

impl Default for PathCaps {
    fn default() -> Self {
        PathCaps {
            max_len: 12,
            max_paths: 10_000,
        }
    }
}

/// Chordless paths between the endpoints of a removed edge.
///
/// `d` counts the length-2 paths (common neighbors). `long_lengths` holds,
/// for every chordless path with at least two interior vertices, its number
/// of interior vertices, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathProfile {
    pub d: usize,
    pub long_lengths: Vec<usize>,
    pub truncated: bool,
}

impl PathProfile {
    pub fn new(d: usize, mut long_lengths: Vec<usize>) -> Self {
        long_lengths.sort_unstable();
        PathProfile {
            d,
            long_lengths,
            truncated: false,
        }
    }
}

/// Chordless-path profile between `q` and `r`, which must not be adjacent.
pub fn path_profile(g: &Graph, q: usize, r: usize, caps: PathCaps) -> Result<PathProfile> {
    for v in [q, r] {
        if v >= g.p() {
            return Err(Error::IndexOutOfRange { index: v, p: g.p() });
        }
    }
    if q == r {
        return Err(Error::SelfLoop(q));
    }
    if g.has_edge(q, r) {
        return Err(Error::EdgePresent(q, r));
    }
    let d = g.common_neighbors(q, r);
    let mut walk = ChordlessWalk {
        g,
        target: r,
        caps,
        path: vec![q],
        on_path: vec![false; g.p()],
        found: Vec::new(),
        truncated: false,
    };
    walk.on_path[q] = true;
    walk.extend();
    let mut profile = PathProfile::new(d, walk.found);
    profile.truncated = walk.truncated;
    Ok(profile)
}

struct ChordlessWalk<'a> {
    g: &'a Graph,
    target: usize,
    caps: PathCaps,
    path: Vec<usize>,
    on_path: Vec<bool>,
    found: Vec<usize>,
    truncated: bool,
}

impl ChordlessWalk<'_> {
    fn extend(&mut self) {
        let g = self.g;
        let last = *self.path.last().expect("path starts at q");
        let prefix_len = self.path.len() - 1;
        let candidates: Vec<usize> = g.neighbors(last).collect();
        for w in candidates {
            if self.found.len() >= self.caps.max_paths {
                self.truncated = true;
                return;
            }
            if w == self.target || self.on_path[w] {
                continue;
            }
            if self.path[..prefix_len].iter().any(|&u| g.has_edge(u, w)) {
                continue;
            }
            let interior = self.path.len(); // interior vertices once w is appended
            if g.has_edge(w, self.target) {
                // the path must close here; continuing would leave a chord w–target
                if interior >= 2 {
                    if interior + 1 > self.caps.max_len {
                        self.truncated = true;
                    } else {
                        self.found.push(interior);
                    }
                }
                continue;
            }
            if interior + 2 > self.caps.max_len {
                self.truncated = true;
                continue;
            }
            self.path.push(w);
            self.on_path[w] = true;
            self.extend();
            self.on_path[w] = false;
            self.path.pop();
        }
    }
}

// ---------------------------------------------------------------------------
// Decomposability

/// Maximum cardinality search visit order (ties broken by smallest label).
pub fn mcs_order(g: &Graph) -> Vec<usize> {
    let p = g.p();
    let mut label = vec![0usize; p];
    let mut visited = vec![false; p];
    let mut order = Vec::with_capacity(p);
    for _ in 0..p {
        let v = (0..p)
            .filter(|&v| !visited[v])
            .max_by_key(|&v| (label[v], std::cmp::Reverse(v)))
            .expect("unvisited vertex remains");
        visited[v] = true;
        order.push(v);
        for w in g.neighbors(v) {
            if !visited[w] {
                label[w] += 1;
            }
        }
    }
    order
}

/// Reverse MCS order. For decomposable graphs every vertex's later
/// neighbors form a clique under this order.
pub fn elimination_order(g: &Graph) -> Vec<usize> {
    let mut order = mcs_order(g);
    order.reverse();
    order
}

fn earlier_neighbors(g: &Graph, order: &[usize]) -> Vec<Vec<usize>> {
    let mut pos = vec![0usize; g.p()];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    order
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut m: Vec<usize> = g.neighbors(v).filter(|&w| pos[w] < k).collect();
            m.sort_unstable();
            m
        })
        .collect()
}

fn is_clique(g: &Graph, vs: &[usize]) -> bool {
    vs.iter()
        .enumerate()
        .all(|(a, &u)| vs[a + 1..].iter().all(|&v| g.has_edge(u, v)))
}

/// Chordality test (zero fill-in under maximum cardinality search).
pub fn is_decomposable(g: &Graph) -> bool {
    let order = mcs_order(g);
    earlier_neighbors(g, &order)
        .iter()
        .all(|m| is_clique(g, m))
}

/// Cliques of a decomposable graph with running-intersection separators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfectSequence {
    pub components: Vec<Vec<usize>>,
    pub separators: Vec<Vec<usize>>,
}

/// Perfect sequence of cliques for a connected decomposable graph.
pub fn perfect_sequence(g: &Graph) -> Result<PerfectSequence> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let order = mcs_order(g);
    let earlier = earlier_neighbors(g, &order);
    if !earlier.iter().all(|m| is_clique(g, m)) {
        return Err(Error::NotDecomposable);
    }
    let mut components = Vec::new();
    let mut separators = Vec::new();
    let mut current: Vec<usize> = vec![order[0]];
    for (k, &v) in order.iter().enumerate().skip(1) {
        let m = &earlier[k];
        let extends = m.len() == current.len() && m.iter().all(|u| current.contains(u));
        if extends {
            current.push(v);
        } else {
            let mut done = std::mem::take(&mut current);
            done.sort_unstable();
            components.push(done);
            separators.push(m.clone());
            current = m.clone();
            current.push(v);
        }
    }
    current.sort_unstable();
    components.push(current);
    Ok(PerfectSequence {
        components,
        separators,
    })
}

/// Perfect sequence of a possibly disconnected decomposable graph: per
/// component sequences concatenated, joined by empty separators.
pub fn perfect_sequence_components(g: &Graph) -> Result<PerfectSequence> {
    let mut out = PerfectSequence {
        components: Vec::new(),
        separators: Vec::new(),
    };
    for comp in g.components() {
        let sub = g.induced(&comp);
        let seq = perfect_sequence(&sub)?;
        let relabel = |vs: &Vec<usize>| -> Vec<usize> { vs.iter().map(|&k| comp[k]).collect() };
        if !out.components.is_empty() {
            out.separators.push(Vec::new());
        }
        out.components.extend(seq.components.iter().map(relabel));
        out.separators.extend(seq.separators.iter().map(relabel));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Blocks (biconnected components)

/// Vertices of the biconnected component of `g` containing edge `(i, j)`,
/// sorted ascending.
pub fn edge_block(g: &Graph, i: usize, j: usize) -> Result<Vec<usize>> {
    if !g.has_edge(i, j) {
        return Err(Error::EdgeAbsent(i, j));
    }
    let target = edge(i, j);
    let p = g.p();
    let mut disc = vec![usize::MAX; p];
    let mut low = vec![0usize; p];
    let mut timer = 0usize;
    let mut edge_stack: Vec<Edge> = Vec::new();
    let mut found: Option<Vec<usize>> = None;

    // iterative DFS from i; frames hold (vertex, parent, neighbor list, cursor)
    let mut frames: Vec<(usize, usize, Vec<usize>, usize)> = Vec::new();
    disc[i] = timer;
    low[i] = timer;
    timer += 1;
    frames.push((i, usize::MAX, g.neighbors(i).collect(), 0));
    while let Some(frame) = frames.last_mut() {
        let (v, parent) = (frame.0, frame.1);
        if frame.3 < frame.2.len() {
            let w = frame.2[frame.3];
            frame.3 += 1;
            if disc[w] == usize::MAX {
                edge_stack.push(edge(v, w));
                disc[w] = timer;
                low[w] = timer;
                timer += 1;
                frames.push((w, v, g.neighbors(w).collect(), 0));
            } else if w != parent && disc[w] < disc[v] {
                edge_stack.push(edge(v, w));
                low[v] = low[v].min(disc[w]);
            }
        } else {
            frames.pop();
            if let Some(up) = frames.last() {
                let u = up.0;
                low[u] = low[u].min(low[v]);
                if low[v] >= disc[u] {
                    // pop the block closed by edge (u, v)
                    let mut block = BTreeSet::new();
                    let mut hit = false;
                    while let Some(e) = edge_stack.pop() {
                        block.insert(e.0);
                        block.insert(e.1);
                        hit |= e == target;
                        if e == edge(u, v) {
                            break;
                        }
                    }
                    if hit {
                        found = Some(block.into_iter().collect());
                        break;
                    }
                }
            }
        }
    }
    found.ok_or(Error::EdgeAbsent(i, j))
}
