//! Road-network pickup-and-delivery environment. Nodes are intersections,
//! edges are streets; the taxi moves along outgoing edges.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Action, EnvError, EnvKind, Environment, Outcome, StateFeatures, StepResult, SubGoal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    // outgoing (target, length), sorted by target id
    out: Vec<Vec<(usize, f64)>>,
}

impl RoadGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, EnvError> {
        let n = nodes.len();
        if n < 2 {
            return Err(EnvError::Config("a road graph needs at least two nodes".into()));
        }
        let mut nodes = nodes;
        nodes.sort_by_key(|nd| nd.id);
        for (i, nd) in nodes.iter().enumerate() {
            if nd.id != i {
                return Err(EnvError::Config(format!("node ids must be dense 0..{n}; missing {i}")));
            }
        }
        let mut out = vec![Vec::<(usize, f64)>::new(); n];
        let mut add = |a: usize, b: usize, len: f64| {
            match out[a].iter_mut().find(|(t, _)| *t == b) {
                Some(e) => e.1 = e.1.min(len),
                None => out[a].push((b, len)),
            }
        };
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(EnvError::Config(format!("edge {}-{} references an unknown node", e.u, e.v)));
            }
            if e.u == e.v {
                return Err(EnvError::Config(format!("self-loop on node {}", e.u)));
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(EnvError::Config(format!("edge {}-{} has non-positive length", e.u, e.v)));
            }
            add(e.u, e.v, e.length);
            if !e.directed {
                add(e.v, e.u, e.length);
            }
        }
        for list in &mut out {
            list.sort_by_key(|(t, _)| *t);
        }
        let g = RoadGraph { nodes, edges, out };
        if !g.is_weakly_connected() {
            return Err(EnvError::Config("road graph is not connected".into()));
        }
        Ok(g)
    }

    /// Seeded planar-like lattice with jittered coordinates, a sprinkling of
    /// diagonals and some removed streets. Edge lengths are Euclidean.
    pub fn synthetic(n: usize, seed: u64) -> Result<Self, EnvError> {
        if n < 2 {
            return Err(EnvError::Config("a road graph needs at least two nodes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = (n as f64).sqrt().ceil() as usize;
        let nodes: Vec<Node> = (0..n)
            .map(|i| Node {
                id: i,
                x: (i % cols) as f64 + rng.random_range(-0.3..0.3),
                y: (i / cols) as f64 + rng.random_range(-0.3..0.3),
            })
            .collect();
        let mut candidates = Vec::new();
        for i in 0..n {
            let c = i % cols;
            if c + 1 < cols && i + 1 < n {
                candidates.push((i, i + 1));
            }
            if i + cols < n {
                candidates.push((i, i + cols));
            }
            if c + 1 < cols && i + cols + 1 < n && rng.random_bool(0.12) {
                candidates.push((i, i + cols + 1));
            }
        }
        candidates.shuffle(&mut rng);
        // keep a spanning forest unconditionally, drop ~15% of the remainder
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut kept = Vec::new();
        for (u, v) in candidates {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru] = rv;
                kept.push((u, v));
            } else if rng.random_bool(0.85) {
                kept.push((u, v));
            }
        }
        kept.sort();
        let edges = kept
            .into_iter()
            .map(|(u, v)| {
                let (a, b) = (nodes[u], nodes[v]);
                Edge { u, v, length: ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt(), directed: false }
            })
            .collect();
        RoadGraph::new(nodes, edges)
    }

    fn is_weakly_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut und = vec![Vec::new(); n];
        for (u, list) in self.out.iter().enumerate() {
            for &(v, _) in list {
                und[u].push(v);
                und[v].push(u);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &und[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing `(target, length)` pairs sorted by target id.
    pub fn out_edges(&self, u: usize) -> &[(usize, f64)] {
        &self.out[u]
    }

    pub fn max_out_degree(&self) -> usize {
        self.out.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn euclidean(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.nodes[a], self.nodes[b]);
        ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
    }

    /// Text format: `node <id> <x> <y>` lines, then
    /// `edge <u> <v> <length> [directed]` lines.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| EnvError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
            let idx = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s}: {e}")));
            match f[0] {
                "node" if f.len() == 4 => nodes.push(Node { id: idx(f[1])?, x: num(f[2])?, y: num(f[3])? }),
                "edge" if f.len() == 4 || (f.len() == 5 && f[4] == "directed") => edges.push(Edge {
                    u: idx(f[1])?,
                    v: idx(f[2])?,
                    length: num(f[3])?,
                    directed: f.len() == 5,
                }),
                _ => return Err(err(format!("malformed line `{line}`"))),
            }
        }
        RoadGraph::new(nodes, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for nd in &self.nodes {
            let _ = writeln!(out, "node {} {} {}", nd.id, nd.x, nd.y);
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {}{}", e.u, e.v, e.length, if e.directed { " directed" } else { "" });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trip {
    pub pickup: usize,
    pub dropoff: usize,
}

/// Parses a trips CSV with header `pickup,dropoff`.
pub fn parse_trips(text: &str) -> Result<Vec<Trip>, EnvError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "pickup,dropoff" => {}
        _ => return Err(EnvError::Parse { line: 1, message: "expected header `pickup,dropoff`".into() }),
    }
    lines
        .map(|(i, l)| {
            let err = |m: String| EnvError::Parse { line: i + 1, message: m };
            let (a, b) = l.trim().split_once(',').ok_or_else(|| err("expected two columns".into()))?;
            Ok(Trip {
                pickup: a.trim().parse().map_err(|e| err(format!("{a}: {e}")))?,
                dropoff: b.trim().parse().map_err(|e| err(format!("{b}: {e}")))?,
            })
        })
        .collect()
}

pub fn trips_to_csv(trips: &[Trip]) -> String {
    let mut out = String::from("pickup,dropoff\n");
    for t in trips {
        let _ = writeln!(out, "{},{}", t.pickup, t.dropoff);
    }
    out
}

/// `count` uniformly random trips with distinct endpoints.
pub fn random_trips(n_nodes: usize, count: usize, seed: u64) -> Vec<Trip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_trip(n_nodes, &mut rng)).collect()
}

fn random_trip<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Trip {
    let pickup = rng.random_range(0..n);
    let mut dropoff = rng.random_range(0..n - 1);
    if dropoff >= pickup {
        dropoff += 1;
    }
    Trip { pickup, dropoff }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    ToPickup,
    ToDropoff,
    Delivered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphEnvState {
    pub current_node: usize,
    pub phase: Phase,
    pub pickup_node: usize,
    pub dropoff_node: usize,
    pub done: bool,
    pub steps: u32,
}

impl GraphEnvState {
    /// Node the taxi is currently heading for.
    pub fn target(&self) -> usize {
        match self.phase {
            Phase::ToPickup => self.pickup_node,
            _ => self.dropoff_node,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub step_cost_scale: f64,
    /// Penalty for a move index beyond the node's out-degree.
    pub reward_step: f64,
    pub reward_pickup: f64,
    pub reward_dropoff: f64,
    pub reward_illegal: f64,
    pub max_steps_per_episode: u32,
}

impl GraphConfig {
    pub fn for_nodes(n: usize) -> Self {
        GraphConfig {
            step_cost_scale: 1.0,
            reward_step: -1.0,
            reward_pickup: 0.0,
            reward_dropoff: 20.0,
            reward_illegal: -10.0,
            max_steps_per_episode: (4 * n).max(16) as u32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphEnv {
    graph: RoadGraph,
    config: GraphConfig,
    actions: Vec<Action>,
}

impl GraphEnv {
    pub fn new(graph: RoadGraph, config: GraphConfig) -> Result<Self, EnvError> {
        if config.max_steps_per_episode == 0 {
            return Err(EnvError::Config("max_steps_per_episode must be positive".into()));
        }
        let mut actions: Vec<Action> = (0..graph.max_out_degree()).map(Action::MoveToNeighbor).collect();
        actions.push(Action::Pickup);
        actions.push(Action::Dropoff);
        Ok(GraphEnv { graph, config, actions })
    }

    pub fn with_defaults(graph: RoadGraph) -> Self {
        let cfg = GraphConfig::for_nodes(graph.node_count());
        GraphEnv::new(graph, cfg).expect("default config is valid")
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn num_state_keys(&self) -> usize {
        self.graph.node_count().pow(2)
    }

    /// Episode for `trip` starting at `start`, or at the pickup when `None`.
    pub fn reset_trip(&self, trip: Trip, start: Option<usize>) -> Result<GraphEnvState, EnvError> {
        let n = self.graph.node_count();
        if trip.pickup == trip.dropoff {
            return Err(EnvError::Config(format!("trip pickup and dropoff coincide at node {}", trip.pickup)));
        }
        let start = start.unwrap_or(trip.pickup);
        if trip.pickup >= n || trip.dropoff >= n || start >= n {
            return Err(EnvError::Config(format!("trip {trip:?} references a node outside 0..{n}")));
        }
        Ok(GraphEnvState {
            current_node: start,
            phase: Phase::ToPickup,
            pickup_node: trip.pickup,
            dropoff_node: trip.dropoff,
            done: false,
            steps: 0,
        })
    }

    /// Training reset for a fixed trip: the start node is drawn uniformly.
    pub fn reset_trip_seeded(&self, trip: Trip, seed: u64) -> Result<GraphEnvState, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.random_range(0..self.graph.node_count());
        self.reset_trip(trip, Some(start))
    }
}

impl Environment for GraphEnv {
    type State = GraphEnvState;

    fn id(&self) -> String {
        format!("graph{}e{}", self.graph.node_count(), self.graph.edges().len())
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Graph
    }

    fn actions(&self) -> &[Action] {
        &self.actions
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> GraphEnvState {
        let n = self.graph.node_count();
        let trip = random_trip(n, rng);
        let start = rng.random_range(0..n);
        self.reset_trip(trip, Some(start)).expect("random trip is valid")
    }

    fn step(&self, s: &GraphEnvState, action: usize) -> Result<StepResult<GraphEnvState>, EnvError> {
        if s.done {
            return Err(EnvError::SteppingDoneState);
        }
        check_action(action, self.actions.len())?;
        let cfg = &self.config;
        let mut next = *s;
        let (reward, outcome, subgoal, distance) = match self.actions[action] {
            Action::MoveToNeighbor(k) => match self.graph.out_edges(s.current_node).get(k) {
                Some(&(to, len)) => {
                    next.current_node = to;
                    (-len * cfg.step_cost_scale, Outcome::Moved, None, len)
                }
                None => (cfg.reward_step, Outcome::Blocked, None, 0.0),
            },
            Action::Pickup if s.phase == Phase::ToPickup && s.current_node == s.pickup_node => {
                next.phase = Phase::ToDropoff;
                (cfg.reward_pickup, Outcome::PickedUp, Some(SubGoal::PaxInTaxi), 0.0)
            }
            Action::Dropoff if s.phase == Phase::ToDropoff && s.current_node == s.dropoff_node => {
                next.phase = Phase::Delivered;
                next.done = true;
                (cfg.reward_dropoff, Outcome::DroppedOff, Some(SubGoal::Dropoff), 0.0)
            }
            _ => (cfg.reward_illegal, Outcome::Illegal, None, 0.0),
        };
        next.steps = s.steps.saturating_add(1);
        if next.steps >= cfg.max_steps_per_episode {
            next.done = true;
        }
        Ok(StepResult { done: next.done, next_state: next, reward, outcome, subgoal_achieved: subgoal, distance })
    }

    fn state_key(&self, s: &GraphEnvState) -> u64 {
        (s.current_node * self.graph.node_count() + s.target()) as u64
    }

    fn features(&self, s: &GraphEnvState) -> StateFeatures {
        StateFeatures {
            taxi_on_pax_loc: s.phase == Phase::ToPickup && s.current_node == s.pickup_node,
            taxi_on_dest: s.current_node == s.dropoff_node,
            pax_in_taxi: s.phase == Phase::ToDropoff,
            delivered: s.phase == Phase::Delivered,
            position: None,
        }
    }

    fn is_done(&self, s: &GraphEnvState) -> bool {
        s.done
    }

    fn action_node(&self, index: usize) -> &'static str {
        match self.actions[index] {
            Action::Pickup => "action_pickup",
            Action::Dropoff => "action_dropoff",
            _ => "action_move",
        }
    }

    fn is_selectable(&self, s: &GraphEnvState, action: usize) -> bool {
        match self.actions.get(action) {
            Some(Action::MoveToNeighbor(k)) => *k < self.graph.out_edges(s.current_node).len(),
            Some(_) => true,
            None => false,
        }
    }
}
