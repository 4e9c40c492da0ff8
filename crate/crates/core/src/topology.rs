//! Access-point network graph, anchor connected covers, distance-2 pilot
//! coloring and calibration subgraphs.
//!
//! Node identifiers are dense indices `0..n`. Edges are stored as ordered
//! pairs; every edge is present in both directions with the same average
//! SNR.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("network graph is empty")]
    EmptyGraph,
    #[error("network graph is disconnected: nodes {unreachable:?} unreachable from node 0")]
    DisconnectedGraph { unreachable: Vec<usize> },
    #[error("link SNR is not symmetric between {0} and {1}")]
    AsymmetricLink(usize, usize),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("position count {got} does not match node count {want}")]
    PositionCount { got: usize, want: usize },
    #[error("anchors are not a connected cover: {0}")]
    NotConnectedCover(CoverViolation),
    #[error("invalid calibration subgraph strategy: {0}")]
    InvalidStrategy(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoverViolation {
    NoAnchors,
    DuplicateAnchor(usize),
    /// Anchors not reachable from the first anchor inside the anchor subgraph.
    AnchorsDisconnected(Vec<usize>),
    /// Non-anchor nodes without any anchor neighbor.
    Uncovered(Vec<usize>),
}

impl std::fmt::Display for CoverViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoverViolation::NoAnchors => write!(f, "anchor set is empty"),
            CoverViolation::DuplicateAnchor(a) => write!(f, "anchor {a} listed twice"),
            CoverViolation::AnchorsDisconnected(v) => {
                write!(f, "anchor subgraph disconnected, unreachable anchors {v:?}")
            }
            CoverViolation::Uncovered(v) => write!(f, "non-anchor nodes {v:?} have no anchor neighbor"),
        }
    }
}

/// Directed AP graph with symmetric edges weighted by average SNR (dB).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n: usize,
    positions: Option<Vec<[f64; 2]>>,
    edges: BTreeMap<(usize, usize), f64>,
    adjacency: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Builds the graph from a symmetric link-SNR function, keeping the pairs
    /// whose average SNR strictly exceeds `snr_threshold_db`.
    pub fn build<F>(
        n: usize,
        positions: Option<Vec<[f64; 2]>>,
        snr_threshold_db: f64,
        link_snr_db: F,
    ) -> Result<Self, TopologyError>
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = link_snr_db(i, j);
                let b = link_snr_db(j, i);
                if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                    return Err(TopologyError::AsymmetricLink(i, j));
                }
                if a > snr_threshold_db {
                    edges.push((i, j, a));
                }
            }
        }
        Self::from_undirected(n, positions, &edges)
    }

    /// Builds the graph from undirected `(i, j, snr_db)` triples.
    pub fn from_undirected(
        n: usize,
        positions: Option<Vec<[f64; 2]>>,
        edges: &[(usize, usize, f64)],
    ) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::EmptyGraph);
        }
        if let Some(p) = &positions {
            if p.len() != n {
                return Err(TopologyError::PositionCount { got: p.len(), want: n });
            }
        }
        let mut map = BTreeMap::new();
        for &(i, j, snr) in edges {
            if i >= n {
                return Err(TopologyError::UnknownNode(i));
            }
            if j >= n {
                return Err(TopologyError::UnknownNode(j));
            }
            if i == j {
                continue;
            }
            map.insert((i, j), snr);
            map.insert((j, i), snr);
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in map.keys() {
            adjacency[i].push(j);
        }
        let graph = NetworkGraph { n, positions, edges: map, adjacency };
        let unreachable = graph.unreachable_from(0, |_| true);
        if !unreachable.is_empty() {
            return Err(TopologyError::DisconnectedGraph { unreachable });
        }
        Ok(graph)
    }

    /// Unweighted convenience constructor (all edges get 0 dB).
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let e: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 0.0)).collect();
        Self::from_undirected(n, None, &e)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&(i, j))
    }

    pub fn edge_snr_db(&self, i: usize, j: usize) -> Option<f64> {
        self.edges.get(&(i, j)).copied()
    }

    /// Ordered pairs, both directions.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.keys().copied()
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.keys().copied().filter(|&(i, j)| i < j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// BFS restricted to nodes accepted by `allowed`; returns allowed nodes
    /// not reached from `start`.
    fn unreachable_from(&self, start: usize, allowed: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] && allowed(v) {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.n).filter(|&v| allowed(v) && !seen[v]).collect()
    }
}

/// Validated anchor connected cover. `anchors[0]` is the default LS reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<usize>,
    is_anchor: Vec<bool>,
    induced_edges: Vec<(usize, usize)>,
    anchor_neighbors: BTreeMap<usize, Vec<usize>>,
}

impl AnchorSet {
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn is_anchor(&self, node: usize) -> bool {
        self.is_anchor.get(node).copied().unwrap_or(false)
    }

    /// Directed edges `E(A)` between anchors.
    pub fn induced_edges(&self) -> &[(usize, usize)] {
        &self.induced_edges
    }

    /// Anchor neighborhood `A(i)` of an anchor.
    pub fn anchor_neighbors(&self, anchor: usize) -> &[usize] {
        self.anchor_neighbors.get(&anchor).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Position of a node inside the anchor list.
    pub fn index_of(&self, node: usize) -> Option<usize> {
        self.anchors.iter().position(|&a| a == node)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Checks both connected-cover conditions and returns the anchor set.
pub fn validate_anchor_cover(graph: &NetworkGraph, anchors: &[usize]) -> Result<AnchorSet, TopologyError> {
    let n = graph.node_count();
    if anchors.is_empty() {
        return Err(TopologyError::NotConnectedCover(CoverViolation::NoAnchors));
    }
    let mut is_anchor = vec![false; n];
    for &a in anchors {
        if a >= n {
            return Err(TopologyError::UnknownNode(a));
        }
        if is_anchor[a] {
            return Err(TopologyError::NotConnectedCover(CoverViolation::DuplicateAnchor(a)));
        }
        is_anchor[a] = true;
    }
    let unreachable = graph.unreachable_from(anchors[0], |v| is_anchor[v]);
    if !unreachable.is_empty() {
        return Err(TopologyError::NotConnectedCover(CoverViolation::AnchorsDisconnected(unreachable)));
    }
    let uncovered: Vec<usize> = (0..n)
        .filter(|&v| !is_anchor[v] && !graph.neighbors(v).iter().any(|&u| is_anchor[u]))
        .collect();
    if !uncovered.is_empty() {
        return Err(TopologyError::NotConnectedCover(CoverViolation::Uncovered(uncovered)));
    }
    let induced_edges: Vec<_> = graph.directed_edges().filter(|&(i, j)| is_anchor[i] && is_anchor[j]).collect();
    let mut anchor_neighbors = BTreeMap::new();
    for &a in anchors {
        let nb: Vec<usize> = graph.neighbors(a).iter().copied().filter(|&u| is_anchor[u]).collect();
        anchor_neighbors.insert(a, nb);
    }
    Ok(AnchorSet { anchors: anchors.to_vec(), is_anchor, induced_edges, anchor_neighbors })
}

/// Orthogonal pilot-burst index per anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pub color_of: BTreeMap<usize, usize>,
    pub num_colors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColoringViolation {
    Uncolored(usize),
    /// Anchor `at` hears two neighbors `a`, `b` with the same color.
    NeighborClash { at: usize, a: usize, b: usize },
    /// Anchor and one of its anchor neighbors share a color.
    AdjacentClash { a: usize, b: usize },
}

/// Greedy distance-2 coloring of the anchor subgraph: anchors visited in
/// descending anchor-degree order (ties by id), each taking the smallest
/// color not used within two hops.
pub fn l11_coloring(anchor_set: &AnchorSet) -> PilotAssignment {
    let mut order: Vec<usize> = anchor_set.anchors().to_vec();
    order.sort_by_key(|&a| (std::cmp::Reverse(anchor_set.anchor_neighbors(a).len()), a));
    let mut color_of: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in &order {
        let mut used = BTreeSet::new();
        for &u in anchor_set.anchor_neighbors(v) {
            if let Some(&c) = color_of.get(&u) {
                used.insert(c);
            }
            for &w in anchor_set.anchor_neighbors(u) {
                if w != v {
                    if let Some(&c) = color_of.get(&w) {
                        used.insert(c);
                    }
                }
            }
        }
        let color = (0..).find(|c| !used.contains(c)).unwrap_or(0);
        color_of.insert(v, color);
    }
    let num_colors = color_of.values().collect::<BTreeSet<_>>().len();
    PilotAssignment { color_of, num_colors }
}

/// Verifies that every anchor hears pairwise-distinct colors from its anchor
/// neighbors, each different from its own.
pub fn check_pilot_assignment(anchor_set: &AnchorSet, assignment: &PilotAssignment) -> Result<(), ColoringViolation> {
    let color = |a: usize| assignment.color_of.get(&a).copied().ok_or(ColoringViolation::Uncolored(a));
    for &i in anchor_set.anchors() {
        let ci = color(i)?;
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for &j in anchor_set.anchor_neighbors(i) {
            let cj = color(j)?;
            if cj == ci {
                return Err(ColoringViolation::AdjacentClash { a: i, b: j });
            }
            if let Some(&prev) = seen.get(&cj) {
                return Err(ColoringViolation::NeighborClash { at: i, a: prev, b: j });
            }
            seen.insert(cj, j);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SubgraphStrategy {
    Full,
    Star { center: usize },
    Mst,
}

impl std::str::FromStr for SubgraphStrategy {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "full" => Ok(SubgraphStrategy::Full),
            "mst" => Ok(SubgraphStrategy::Mst),
            _ => {
                let inner = s
                    .strip_prefix("star(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| TopologyError::InvalidStrategy(s.to_string()))?;
                let center = inner.trim().parse().map_err(|_| TopologyError::InvalidStrategy(s.to_string()))?;
                Ok(SubgraphStrategy::Star { center })
            }
        }
    }
}

/// Symmetric connected spanning edge set used for calibration pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSubgraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl CalibrationSubgraph {
    pub fn from_undirected(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(TopologyError::UnknownNode(i.max(j)));
            }
            if i != j {
                set.insert((i, j));
                set.insert((j, i));
            }
        }
        let sub = CalibrationSubgraph { n, edges: set };
        sub.check_connected()?;
        Ok(sub)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Undirected edge set `F_u`, `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(i, j)| i < j)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn undirected_len(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        let unreachable: Vec<_> = (0..self.n).filter(|&v| !seen[v]).collect();
        if unreachable.is_empty() {
            Ok(())
        } else {
            Err(TopologyError::DisconnectedGraph { unreachable })
        }
    }
}

pub fn build_calibration_subgraph(
    graph: &NetworkGraph,
    strategy: SubgraphStrategy,
) -> Result<CalibrationSubgraph, TopologyError> {
    let n = graph.node_count();
    let edges: Vec<(usize, usize)> = match strategy {
        SubgraphStrategy::Full => graph.undirected_edges().collect(),
        SubgraphStrategy::Star { center } => {
            if center >= n {
                return Err(TopologyError::InvalidStrategy(format!("star center {center} out of range")));
            }
            graph.neighbors(center).iter().map(|&j| (center, j)).collect()
        }
        SubgraphStrategy::Mst => maximum_snr_spanning_tree(graph),
    };
    CalibrationSubgraph::from_undirected(n, &edges)
}

/// Kruskal on descending SNR, ties broken by `(i, j)`.
fn maximum_snr_spanning_tree(graph: &NetworkGraph) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = graph
        .undirected_edges()
        .map(|(i, j)| (graph.edge_snr_db(i, j).unwrap_or(f64::NEG_INFINITY), i, j))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut parent: Vec<usize> = (0..graph.node_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut tree = Vec::with_capacity(graph.node_count().saturating_sub(1));
    for (_, i, j) in candidates {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.push((i, j));
        }
    }
    tree
}

/// Square grid of `side x side` points spanning `[0, extent]^2`.
pub fn square_grid_positions(side: usize, extent: f64) -> Vec<[f64; 2]> {
    let step = if side > 1 { extent / (side - 1) as f64 } else { 0.0 };
    (0..side * side).map(|k| [(k % side) as f64 * step, (k / side) as f64 * step]).collect()
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
