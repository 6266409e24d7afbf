//! Dijkstra and A* route oracles over grids and road graphs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::env::grid::{Cell, GridConfig, GridState, Passenger};
use crate::env::{Action, GraphEnvState, Phase, RoadGraph};

/// Weighted directed adjacency with an admissible A* heuristic.
pub trait Adjacency {
    fn node_count(&self) -> usize;
    /// Calls `f(target, cost)` for each outgoing edge in ascending target order.
    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize, f64));
    /// Lower bound on the cost from `u` to `target`.
    fn heuristic(&self, u: usize, target: usize) -> f64;
}

/// Unit-cost grid view of a map; node `r * cols + c`.
#[derive(Debug, Clone, Copy)]
pub struct GridAdjacency<'a> {
    config: &'a GridConfig,
}

impl<'a> GridAdjacency<'a> {
    pub fn new(config: &'a GridConfig) -> Self {
        GridAdjacency { config }
    }

    pub fn node(&self, cell: Cell) -> usize {
        cell.0 * self.config.cols + cell.1
    }

    pub fn cell(&self, node: usize) -> Cell {
        (node / self.config.cols, node % self.config.cols)
    }
}

impl Adjacency for GridAdjacency<'_> {
    fn node_count(&self) -> usize {
        self.config.cell_count()
    }

    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize, f64)) {
        let cell = self.cell(u);
        // north, west, east, south is ascending node order
        for a in [Action::MoveNorth, Action::MoveWest, Action::MoveEast, Action::MoveSouth] {
            if let Some(next) = self.config.neighbor(cell, a) {
                f(self.node(next), 1.0);
            }
        }
    }

    fn heuristic(&self, u: usize, target: usize) -> f64 {
        let (a, b) = (self.cell(u), self.cell(target));
        (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)) as f64
    }
}

/// Road graph with a scaled Euclidean heuristic. The scale is the smallest
/// ratio of edge length to straight-line gap, which keeps the heuristic
/// admissible even when lengths are not Euclidean.
#[derive(Debug, Clone, Copy)]
pub struct GraphAdjacency<'a> {
    graph: &'a RoadGraph,
    scale: f64,
}

impl<'a> GraphAdjacency<'a> {
    pub fn new(graph: &'a RoadGraph) -> Self {
        let scale = graph
            .edges()
            .iter()
            .filter_map(|e| {
                let gap = graph.euclidean(e.u, e.v);
                (gap > 0.0).then(|| e.length / gap)
            })
            .fold(f64::INFINITY, f64::min);
        // shave a relative epsilon so rounding cannot make h exceed the true cost
        let scale = if scale.is_finite() { scale.min(1e12) * (1.0 - 1e-12) } else { 0.0 };
        GraphAdjacency { graph, scale }
    }
}

impl Adjacency for GraphAdjacency<'_> {
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize, f64)) {
        for &(v, len) in self.graph.out_edges(u) {
            f(v, len);
        }
    }

    fn heuristic(&self, u: usize, target: usize) -> f64 {
        self.graph.euclidean(u, target) * self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// `f64::INFINITY` when the target is unreachable.
    pub distance: f64,
    /// Node sequence from source to target; empty when unreachable.
    pub path: Vec<usize>,
    /// Nodes settled by the search.
    pub expanded: usize,
    pub elapsed: Duration,
}

impl PathResult {
    pub fn reachable(&self) -> bool {
        self.distance.is_finite()
    }

    /// Number of edges traversed.
    pub fn steps(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    pub fn path_string(&self) -> String {
        self.path.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    tie: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then(other.tie.total_cmp(&self.tie)).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn search(adj: &dyn Adjacency, source: usize, target: usize, use_heuristic: bool) -> PathResult {
    let start = Instant::now();
    let n = adj.node_count();
    assert!(source < n && target < n, "query endpoints must be valid node ids");
    let h = |u: usize| if use_heuristic { adj.heuristic(u, target) } else { 0.0 };
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry { key: h(source), tie: h(source), node: source });
    let mut expanded = 0;
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        expanded += 1;
        if u == target {
            break;
        }
        let du = dist[u];
        adj.for_each_neighbor(u, &mut |v, w| {
            let nd = du + w;
            if !settled[v] && nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                let hv = h(v);
                heap.push(Entry { key: nd + hv, tie: hv, node: v });
            }
        });
    }
    let mut path = Vec::new();
    if dist[target].is_finite() {
        let mut at = target;
        path.push(at);
        while at != source {
            at = prev[at];
            path.push(at);
        }
        path.reverse();
    }
    PathResult { distance: dist[target], path, expanded, elapsed: start.elapsed() }
}

/// Exact shortest path; ties in the queue break towards the smaller node id.
pub fn dijkstra(adj: &dyn Adjacency, source: usize, target: usize) -> PathResult {
    search(adj, source, target, false)
}

/// A* with the adjacency's heuristic; equal `f` values prefer the node
/// closer to the target, then the smaller id.
pub fn a_star(adj: &dyn Adjacency, source: usize, target: usize) -> PathResult {
    search(adj, source, target, true)
}

/// `start → pickup → dropoff` as two Dijkstra legs.
pub fn optimal_tour(adj: &dyn Adjacency, start: usize, pickup: usize, dropoff: usize) -> PathResult {
    let t = Instant::now();
    let a = dijkstra(adj, start, pickup);
    let b = dijkstra(adj, pickup, dropoff);
    if !a.reachable() || !b.reachable() {
        return PathResult { distance: f64::INFINITY, path: Vec::new(), expanded: a.expanded + b.expanded, elapsed: t.elapsed() };
    }
    let mut path = a.path;
    path.extend_from_slice(&b.path[1..]);
    PathResult { distance: a.distance + b.distance, path, expanded: a.expanded + b.expanded, elapsed: t.elapsed() }
}

/// Optimal tour for a grid episode state, or `None` if the passenger was
/// already delivered. For a passenger already aboard only the dropoff leg
/// remains.
pub fn grid_tour(config: &GridConfig, state: &GridState) -> Option<PathResult> {
    let adj = GridAdjacency::new(config);
    let taxi = adj.node(state.taxi());
    let dest = adj.node(config.depots[state.destination]);
    match state.passenger {
        Passenger::At(p) if p == state.destination && state.done => None,
        Passenger::At(p) => Some(optimal_tour(&adj, taxi, adj.node(config.depots[p]), dest)),
        Passenger::InTaxi => Some(dijkstra(&adj, taxi, dest)),
    }
}

/// Optimal number of actions for a grid episode: every move of the tour
/// plus the pickup (when the passenger is still waiting) and the dropoff.
pub fn grid_optimal_actions(config: &GridConfig, state: &GridState) -> Option<usize> {
    let tour = grid_tour(config, state)?;
    let pickup = usize::from(matches!(state.passenger, Passenger::At(_)));
    tour.reachable().then(|| tour.steps() + pickup + 1)
}

/// Best achievable episode reward: dropoff reward plus the step reward for
/// every move and for the pickup.
pub fn grid_optimal_reward(config: &GridConfig, state: &GridState) -> Option<f64> {
    let actions = grid_optimal_actions(config, state)?;
    Some(config.reward_dropoff + config.reward_step * (actions - 1) as f64)
}

/// Optimal remaining route for a graph episode state.
pub fn graph_tour(graph: &RoadGraph, state: &GraphEnvState) -> PathResult {
    let adj = GraphAdjacency::new(graph);
    match state.phase {
        Phase::ToPickup => optimal_tour(&adj, state.current_node, state.pickup_node, state.dropoff_node),
        _ => dijkstra(&adj, state.current_node, state.dropoff_node),
    }
}
