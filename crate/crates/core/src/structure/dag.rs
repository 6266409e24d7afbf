use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{StructureError, StructureParams};
use crate::sampler::{FeatureSchema, Role};

/// Human-supplied prohibitions applied during discovery.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabuSpec {
    /// `(parent_role, child_role)` pairs that may never form an edge.
    #[serde(default)]
    pub forbidden_parent_roles: Vec<(Role, Role)>,
    /// Explicit `(from, to)` edges.
    #[serde(default)]
    pub forbidden_edges: Vec<(String, String)>,
    /// Nodes removed from the graph entirely.
    #[serde(default)]
    pub forbidden_nodes: Vec<String>,
}

impl TabuSpec {
    /// Constraints for the transition schema: effects never point back to
    /// pre-transition nodes, actions have no parents (they are drawn
    /// uniformly), and the passenger can't be picked up by a dropoff.
    pub fn transition_roles() -> Self {
        TabuSpec {
            forbidden_parent_roles: vec![
                (Role::Goal, Role::State),
                (Role::Goal, Role::Action),
                (Role::Action, Role::State),
                (Role::State, Role::Action),
                (Role::Action, Role::Action),
            ],
            forbidden_edges: vec![("dropoff_next".into(), "pax_in_taxi_next".into())],
            forbidden_nodes: Vec::new(),
        }
    }

    pub fn validate(&self, names: &[String]) -> Result<(), StructureError> {
        let known: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        let unknown: Vec<String> = self
            .forbidden_edges
            .iter()
            .flat_map(|(a, b)| [a, b])
            .chain(&self.forbidden_nodes)
            .filter(|n| !known.contains(n.as_str()))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(StructureError::UnknownNodes(unknown))
        }
    }

    /// `allowed[(i, j)]` is true when edge `i -> j` may carry weight.
    pub fn allowed_mask(&self, names: &[String], roles: &[Role]) -> Result<DMatrix<bool>, StructureError> {
        self.validate(names)?;
        let d = names.len();
        let forbidden_node = |i: usize| self.forbidden_nodes.contains(&names[i]);
        Ok(DMatrix::from_fn(d, d, |i, j| {
            i != j
                && !forbidden_node(i)
                && !forbidden_node(j)
                && !self.forbidden_parent_roles.contains(&(roles[i], roles[j]))
                && !self.forbidden_edges.iter().any(|(a, b)| *a == names[i] && *b == names[j])
        }))
    }

    pub fn forbids(&self, from: &str, from_role: Role, to: &str, to_role: Role) -> bool {
        from == to
            || self.forbidden_nodes.iter().any(|n| n == from || n == to)
            || self.forbidden_parent_roles.contains(&(from_role, to_role))
            || self.forbidden_edges.iter().any(|(a, b)| a == from && b == to)
    }
}

/// Zeroes every off-diagonal entry of `w` the tabu specification forbids.
pub fn apply_tabu(
    w: &DMatrix<f64>,
    tabu: &TabuSpec,
    names: &[String],
    roles: &[Role],
) -> Result<DMatrix<f64>, StructureError> {
    if w.nrows() != names.len() || w.ncols() != names.len() || roles.len() != names.len() {
        return Err(StructureError::Dimension { expected: names.len(), found: w.nrows() });
    }
    let mask = tabu.allowed_mask(names, roles)?;
    Ok(DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| if i == j || mask[(i, j)] { w[(i, j)] } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNode {
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Weighted DAG over feature nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalDag {
    pub nodes: Vec<DagNode>,
    pub edges: Vec<DagEdge>,
    /// Unthresholded optimizer weights, `weights[i][j]` for `i -> j`.
    #[serde(default)]
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub tabu: TabuSpec,
    #[serde(default)]
    pub params: Option<StructureParams>,
}

impl CausalDag {
    /// Builds a DAG from explicit edges; rejects unknown names and cycles.
    pub fn from_edges(nodes: Vec<DagNode>, edges: Vec<DagEdge>) -> Result<Self, StructureError> {
        let d = nodes.len();
        let mut dag = CausalDag { nodes, edges: Vec::new(), weights: vec![vec![0.0; d]; d], tabu: TabuSpec::default(), params: None };
        for e in edges {
            let (i, j) = (dag.require(&e.from)?, dag.require(&e.to)?);
            dag.weights[i][j] = e.weight;
            dag.edges.push(e);
        }
        dag.sort_edges();
        if !dag.is_acyclic() {
            return Err(StructureError::Cyclic);
        }
        Ok(dag)
    }

    fn require(&self, name: &str) -> Result<usize, StructureError> {
        self.index_of(name).ok_or_else(|| StructureError::UnknownNodes(vec![name.to_string()]))
    }

    fn sort_edges(&mut self) {
        let idx: BTreeMap<String, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect();
        self.edges.sort_by_key(|e| (idx[&e.from], idx[&e.to]));
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.role)
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to)
    }

    /// Parent names of `node`, sorted by name.
    pub fn parents(&self, node: &str) -> Vec<String> {
        let mut p: Vec<String> = self.edges.iter().filter(|e| e.to == node).map(|e| e.from.clone()).collect();
        p.sort();
        p
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            if let (Some(i), Some(j)) = (self.index_of(&e.from), self.index_of(&e.to)) {
                adj[i].push(j);
            }
        }
        adj
    }

    /// Kahn topological order, or `None` when the edge set has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        topological_order(&self.adjacency())
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Edges that violate `tabu` given the node roles.
    pub fn tabu_violations(&self, tabu: &TabuSpec) -> Vec<DagEdge> {
        self.edges
            .iter()
            .filter(|e| {
                let (rf, rt) = (self.role_of(&e.from).unwrap(), self.role_of(&e.to).unwrap());
                tabu.forbids(&e.from, rf, &e.to, rt)
            })
            .cloned()
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DAG serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StructureError> {
        let dag: CausalDag = serde_json::from_str(text).map_err(|e| StructureError::Format(e.to_string()))?;
        let d = dag.len();
        let mut check = CausalDag::from_edges(dag.nodes.clone(), dag.edges.clone())?;
        if dag.weights.len() == d && dag.weights.iter().all(|r| r.len() == d) {
            check.weights = dag.weights;
        }
        check.tabu = dag.tabu;
        check.params = dag.params;
        Ok(check)
    }

    /// Graphviz rendering. Goal nodes are filled red; weights are written
    /// with full precision so the document can be read back losslessly.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph causal_structure {\n");
        for n in &self.nodes {
            let style = match n.role {
                Role::Goal => ", style=filled, fillcolor=red, fontcolor=white",
                Role::Action => ", shape=box",
                Role::State => "",
            };
            let _ = writeln!(out, "  \"{}\" [role={}{}];", n.name, n.role.as_str(), style);
        }
        for e in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [weight={:?}, label=\"{:.2}\"];", e.from, e.to, e.weight, e.weight);
        }
        out.push_str("}\n");
        out
    }

    /// Reads documents produced by [`CausalDag::to_dot`].
    pub fn from_dot(text: &str) -> Result<Self, StructureError> {
        let bad = |l: &str| StructureError::Format(format!("unrecognised DOT line `{l}`"));
        let quoted = |s: &str| -> Option<(String, usize)> {
            let start = s.find('"')? + 1;
            let len = s[start..].find('"')?;
            Some((s[start..start + len].to_string(), start + len + 1))
        };
        let attr = |s: &str, key: &str| -> Option<String> {
            let at = s.find(&format!("{key}="))? + key.len() + 1;
            Some(s[at..].split([',', ']']).next()?.trim().to_string())
        };
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with("digraph") || line == "}" {
                continue;
            }
            let (first, rest) = quoted(line).ok_or_else(|| bad(line))?;
            let tail = &line[rest..];
            if let Some(arrow) = tail.trim_start().strip_prefix("->") {
                let (second, _) = quoted(arrow).ok_or_else(|| bad(line))?;
                let weight = attr(tail, "weight").and_then(|w| w.parse().ok()).ok_or_else(|| bad(line))?;
                edges.push(DagEdge { from: first, to: second, weight });
            } else {
                let role = attr(tail, "role").and_then(|r| r.parse().ok()).ok_or_else(|| bad(line))?;
                nodes.push(DagNode { name: first, role });
            }
        }
        CausalDag::from_edges(nodes, edges)
    }

    /// Re-expresses the DAG over another schema's columns. Grid compass-move
    /// nodes collapse onto a shared `action_move` node when the target schema
    /// has one; nodes the schema lacks are dropped and schema columns the DAG
    /// lacks become isolated nodes.
    pub fn transfer_to(&self, schema: &FeatureSchema) -> Result<CausalDag, StructureError> {
        const MOVES: [&str; 4] = ["action_north", "action_south", "action_east", "action_west"];
        let target_names = schema.names();
        let map = |name: &str| -> Option<String> {
            if target_names.contains(&name) {
                Some(name.to_string())
            } else if MOVES.contains(&name) && target_names.contains(&"action_move") {
                Some("action_move".to_string())
            } else {
                None
            }
        };
        for n in &self.nodes {
            if let Some(c) = schema.columns.iter().find(|c| c.name == n.name) {
                if c.role != n.role {
                    return Err(StructureError::Incompatible(format!(
                        "node `{}` is a {} node in the DAG but a {} column in the schema",
                        n.name,
                        n.role.as_str(),
                        c.role.as_str()
                    )));
                }
            }
        }
        let nodes: Vec<DagNode> =
            schema.columns.iter().map(|c| DagNode { name: c.name.clone(), role: c.role }).collect();
        let mut merged: BTreeMap<(String, String), f64> = BTreeMap::new();
        for e in &self.edges {
            if let (Some(a), Some(b)) = (map(&e.from), map(&e.to)) {
                if a == b {
                    continue;
                }
                let w = merged.entry((a, b)).or_insert(0.0);
                if e.weight.abs() > w.abs() {
                    *w = e.weight;
                }
            }
        }
        let dropped: Vec<&str> =
            self.nodes.iter().map(|n| n.name.as_str()).filter(|n| map(n).is_none()).collect();
        if !dropped.is_empty() {
            log::warn!("structure transfer drops nodes absent from the target schema: {dropped:?}");
        }
        let d = nodes.len();
        let mut dag = CausalDag { nodes, edges: Vec::new(), weights: vec![vec![0.0; d]; d], tabu: self.tabu.clone(), params: self.params.clone() };
        for ((a, b), w) in merged {
            let (i, j) = (dag.require(&a)?, dag.require(&b)?);
            dag.weights[i][j] = w;
            dag.edges.push(DagEdge { from: a, to: b, weight: w });
        }
        dag.sort_edges();
        repair_cycles(&mut dag);
        Ok(dag)
    }
}

pub(crate) fn topological_order(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    let d = adj.len();
    let mut indeg = vec![0usize; d];
    for list in adj {
        for &j in list {
            indeg[j] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &j in &adj[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.insert(j);
            }
        }
    }
    (order.len() == d).then_some(order)
}

fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn dfs(u: usize, adj: &[Vec<usize>], color: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        color[u] = 1;
        stack.push(u);
        for &v in &adj[u] {
            if color[v] == 1 {
                let at = stack.iter().position(|&x| x == v).unwrap();
                return Some(stack[at..].to_vec());
            }
            if color[v] == 0 {
                if let Some(c) = dfs(v, adj, color, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        color[u] = 2;
        None
    }
    let mut color = vec![0u8; adj.len()];
    for s in 0..adj.len() {
        if color[s] == 0 {
            let mut stack = Vec::new();
            if let Some(c) = dfs(s, adj, &mut color, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Deletes the smallest-|weight| edge of each remaining cycle until the
/// edge set is acyclic. Returns the removed edges.
pub fn repair_cycles(dag: &mut CausalDag) -> Vec<DagEdge> {
    let mut removed = Vec::new();
    while let Some(cycle) = find_cycle(&dag.adjacency()) {
        let names: Vec<&str> = cycle.iter().map(|&i| dag.nodes[i].name.as_str()).collect();
        let pos = (0..cycle.len())
            .filter_map(|k| {
                let (a, b) = (names[k], names[(k + 1) % names.len()]);
                dag.edges.iter().position(|e| e.from == a && e.to == b)
            })
            .min_by(|&x, &y| dag.edges[x].weight.abs().total_cmp(&dag.edges[y].weight.abs()))
            .expect("cycle has edges");
        let e = dag.edges.remove(pos);
        log::warn!("removed edge {} -> {} (weight {:.4}) to break a residual cycle", e.from, e.to, e.weight);
        removed.push(e);
    }
    removed
}
