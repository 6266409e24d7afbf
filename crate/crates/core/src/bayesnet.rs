//! Discrete Bayesian networks: maximum-likelihood CPD fitting and exact
//! inference by variable elimination.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::Dataset;
use crate::structure::{CausalDag, StructureError};

/// Partial assignment `node name -> value index`.
pub type Evidence = BTreeMap<String, usize>;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("cannot fit CPDs on an empty dataset")]
    EmptyDataset,
    #[error("DAG nodes missing from the dataset: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("node `{node}` has {found} values, above the cap of {cap}")]
    CardinalityCap { node: String, found: usize, cap: usize },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("value {value} outside the domain of `{node}` (size {size})")]
    ValueOutOfDomain { node: String, value: usize, size: usize },
    #[error("target `{0}` is also evidence")]
    TargetInEvidence(String),
    #[error("invalid CPD for `{node}`: {reason}")]
    InvalidCpd { node: String, reason: String },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("malformed network document: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub smoothing: f64,
    pub max_cardinality: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams { smoothing: 1.0, max_cardinality: 64 }
    }
}

/// `P(node | parents)`. Rows enumerate parent assignments row-major over
/// `parents` (sorted by name, first parent most significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpd {
    pub parents: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBayesNet {
    #[serde(flatten)]
    pub dag: CausalDag,
    pub domains: BTreeMap<String, usize>,
    pub cpds: BTreeMap<String, Cpd>,
    #[serde(skip)]
    compiled: Compiled,
}

/// Index-based view used by inference.
#[derive(Debug, Clone, Default, PartialEq)]
struct Compiled {
    card: Vec<usize>,
    parents: Vec<Vec<usize>>,
    /// Flattened CPD factor over `scope` (sorted variable indices).
    factors: Vec<Factor>,
    children: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub probability: f64,
    /// The evidence has zero probability; `probability` is reported as 0.
    pub zero_evidence: bool,
}

impl DiscreteBayesNet {
    /// Builds a network from explicit tables, checking shapes and
    /// normalization.
    pub fn from_tables(
        dag: CausalDag,
        domains: BTreeMap<String, usize>,
        tables: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self, BayesError> {
        let mut cpds = BTreeMap::new();
        for n in &dag.nodes {
            let table = tables.get(&n.name).cloned().ok_or_else(|| BayesError::InvalidCpd {
                node: n.name.clone(),
                reason: "no table".into(),
            })?;
            cpds.insert(n.name.clone(), Cpd { parents: dag.parents(&n.name), table });
        }
        Self::assemble(dag, domains, cpds)
    }

    fn assemble(dag: CausalDag, domains: BTreeMap<String, usize>, cpds: BTreeMap<String, Cpd>) -> Result<Self, BayesError> {
        let d = dag.len();
        let idx = |name: &str| dag.index_of(name).ok_or_else(|| BayesError::UnknownNode(name.to_string()));
        let mut card = Vec::with_capacity(d);
        for n in &dag.nodes {
            card.push(*domains.get(&n.name).ok_or_else(|| BayesError::UnknownNode(n.name.clone()))?);
        }
        let mut parents = Vec::with_capacity(d);
        let mut factors = Vec::with_capacity(d);
        let mut children = vec![Vec::new(); d];
        for (i, n) in dag.nodes.iter().enumerate() {
            let cpd = cpds.get(&n.name).ok_or_else(|| BayesError::InvalidCpd {
                node: n.name.clone(),
                reason: "no CPD".into(),
            })?;
            let invalid = |reason: String| BayesError::InvalidCpd { node: n.name.clone(), reason };
            if cpd.parents != dag.parents(&n.name) {
                return Err(invalid(format!("parents {:?} differ from the DAG's", cpd.parents)));
            }
            let pa: Vec<usize> = cpd.parents.iter().map(|p| idx(p)).collect::<Result<_, _>>()?;
            let rows: usize = pa.iter().map(|&p| card[p]).product();
            if cpd.table.len() != rows {
                return Err(invalid(format!("{} rows, expected {rows}", cpd.table.len())));
            }
            for row in &cpd.table {
                if row.len() != card[i] {
                    return Err(invalid(format!("row of length {}, expected {}", row.len(), card[i])));
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("row {row:?} is not a distribution")));
                }
            }
            for &p in &pa {
                children[p].push(i);
            }
            factors.push(Factor::from_cpd(i, &pa, &card, &cpd.table));
            parents.push(pa);
        }
        let compiled = Compiled { card, parents, factors, children };
        Ok(DiscreteBayesNet { dag, domains, cpds, compiled })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BayesError> {
        let raw: DiscreteBayesNet = serde_json::from_str(text).map_err(|e| BayesError::Format(e.to_string()))?;
        let dag = CausalDag::from_json(&serde_json::to_string(&raw.dag).expect("dag serializes"))?;
        Self::assemble(dag, raw.domains, raw.cpds)
    }

    pub fn cardinality(&self, node: &str) -> Option<usize> {
        self.domains.get(node).copied()
    }

    fn node(&self, name: &str) -> Result<usize, BayesError> {
        self.dag.index_of(name).ok_or_else(|| BayesError::UnknownNode(name.to_string()))
    }

    fn resolve(&self, evidence: &Evidence) -> Result<Vec<(usize, usize)>, BayesError> {
        evidence
            .iter()
            .map(|(name, &value)| {
                let i = self.node(name)?;
                let size = self.compiled.card[i];
                if value >= size {
                    return Err(BayesError::ValueOutOfDomain { node: name.clone(), value, size });
                }
                Ok((i, value))
            })
            .collect()
    }

    /// Posterior distribution of `target` given `evidence`, or `None` when
    /// the evidence has zero probability.
    pub fn query_distribution(&self, target: &str, evidence: &Evidence) -> Result<Option<Vec<f64>>, BayesError> {
        let t = self.node(target)?;
        if evidence.contains_key(target) {
            return Err(BayesError::TargetInEvidence(target.to_string()));
        }
        let ev = self.resolve(evidence)?;
        Ok(self.eliminate(t, &ev))
    }

    /// `P(target = value | evidence)`; zero-probability evidence yields 0
    /// with the flag set rather than an error.
    pub fn query_probability(&self, target: &str, value: usize, evidence: &Evidence) -> Result<QueryResult, BayesError> {
        let size = self.cardinality(target).ok_or_else(|| BayesError::UnknownNode(target.to_string()))?;
        if value >= size {
            return Err(BayesError::ValueOutOfDomain { node: target.to_string(), value, size });
        }
        Ok(match self.query_distribution(target, evidence)? {
            Some(dist) => QueryResult { probability: dist[value], zero_evidence: false },
            None => QueryResult { probability: 0.0, zero_evidence: true },
        })
    }

    fn eliminate(&self, target: usize, evidence: &[(usize, usize)]) -> Option<Vec<f64>> {
        let c = &self.compiled;
        // barren nodes (no evidence or target among their descendants) sum to one
        let mut relevant = BTreeSet::new();
        let mut stack: Vec<usize> = std::iter::once(target).chain(evidence.iter().map(|e| e.0)).collect();
        while let Some(v) = stack.pop() {
            if relevant.insert(v) {
                stack.extend(&c.parents[v]);
            }
        }
        let ev: BTreeMap<usize, usize> = evidence.iter().copied().filter(|(v, _)| relevant.contains(v)).collect();
        let mut factors: Vec<Factor> = relevant.iter().map(|&v| c.factors[v].reduce(&ev)).collect();
        let mut hidden: BTreeSet<usize> = relevant.iter().copied().filter(|v| *v != target && !ev.contains_key(v)).collect();
        while !hidden.is_empty() {
            let var = self.pick_min_degree(&hidden, &factors);
            hidden.remove(&var);
            let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.scope.contains(&var));
            factors = rest;
            if let Some(prod) = touching.into_iter().reduce(|a, b| a.product(&b, &c.card)) {
                factors.push(prod.sum_out(var));
            }
        }
        let joint = factors.into_iter().fold(Factor::unit(), |a, b| a.product(&b, &c.card));
        debug_assert_eq!(joint.scope, vec![target]);
        let total: f64 = joint.values.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return None;
        }
        Some(joint.values.iter().map(|v| v / total).collect())
    }

    // fewest distinct neighbours in the current interaction graph; ties by name
    fn pick_min_degree(&self, hidden: &BTreeSet<usize>, factors: &[Factor]) -> usize {
        hidden
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let deg = |v: usize| {
                    factors
                        .iter()
                        .filter(|f| f.scope.contains(&v))
                        .flat_map(|f| f.scope.iter().copied())
                        .filter(|&u| u != v)
                        .collect::<BTreeSet<_>>()
                        .len()
                };
                deg(a).cmp(&deg(b)).then_with(|| self.dag.nodes[a].name.cmp(&self.dag.nodes[b].name))
            })
            .expect("non-empty")
    }

    /// `P(full assignment)` as the product of CPD entries; `values` follows
    /// DAG node order.
    pub fn joint_probability(&self, values: &[usize]) -> f64 {
        let c = &self.compiled;
        (0..values.len())
            .map(|i| {
                let row = c.parents[i].iter().fold(0, |acc, &p| acc * c.card[p] + values[p]);
                self.cpds[&self.dag.nodes[i].name].table[row][values[i]]
            })
            .product()
    }

    pub fn children(&self, node: &str) -> Vec<String> {
        self.dag.index_of(node).map_or_else(Vec::new, |i| {
            self.compiled.children[i].iter().map(|&c| self.dag.nodes[c].name.clone()).collect()
        })
    }
}

/// Fits every CPD by smoothed maximum likelihood:
/// `(count + s) / (parent_count + s·|domain|)`, uniform for unseen parent
/// configurations.
pub fn fit_cpds(dag: &CausalDag, data: &Dataset, params: &FitParams) -> Result<DiscreteBayesNet, BayesError> {
    if data.n_rows() == 0 {
        return Err(BayesError::EmptyDataset);
    }
    let missing: Vec<String> =
        dag.nodes.iter().filter(|n| data.schema.index_of(&n.name).is_none()).map(|n| n.name.clone()).collect();
    if !missing.is_empty() {
        return Err(BayesError::MissingColumns(missing));
    }
    let col = |name: &str| data.schema.index_of(name).expect("checked above");
    let mut domains = BTreeMap::new();
    for n in &dag.nodes {
        let card = data.schema.columns[col(&n.name)].cardinality;
        if card > params.max_cardinality {
            return Err(BayesError::CardinalityCap { node: n.name.clone(), found: card, cap: params.max_cardinality });
        }
        domains.insert(n.name.clone(), card);
    }
    let mut cpds = BTreeMap::new();
    for n in &dag.nodes {
        let parents = dag.parents(&n.name);
        let pcols: Vec<(usize, usize)> = parents.iter().map(|p| (col(p), domains[p])).collect();
        let card = domains[&n.name];
        let rows: usize = pcols.iter().map(|&(_, k)| k).product();
        let mut counts = vec![vec![0u64; card]; rows];
        let c = col(&n.name);
        for r in data.rows() {
            let row = pcols.iter().fold(0, |acc, &(pc, k)| acc * k + r[pc] as usize);
            counts[row][r[c] as usize] += 1;
        }
        let s = params.smoothing;
        let table = counts
            .into_iter()
            .map(|cnt| {
                let total: u64 = cnt.iter().sum();
                let denom = total as f64 + s * card as f64;
                if denom <= 0.0 {
                    vec![1.0 / card as f64; card]
                } else {
                    cnt.iter().map(|&k| (k as f64 + s) / denom).collect()
                }
            })
            .collect();
        cpds.insert(n.name.clone(), Cpd { parents, table });
    }
    DiscreteBayesNet::assemble(dag.clone(), domains, cpds)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Factor {
    /// Variable indices, ascending.
    scope: Vec<usize>,
    cards: Vec<usize>,
    /// Row-major over `scope` (last variable fastest).
    values: Vec<f64>,
}

impl Factor {
    fn unit() -> Self {
        Factor { scope: Vec::new(), cards: Vec::new(), values: vec![1.0] }
    }

    fn from_cpd(node: usize, parents: &[usize], card: &[usize], table: &[Vec<f64>]) -> Self {
        let mut scope: Vec<usize> = parents.iter().copied().chain(std::iter::once(node)).collect();
        scope.sort_unstable();
        let cards: Vec<usize> = scope.iter().map(|&v| card[v]).collect();
        let size = cards.iter().product();
        let mut values = vec![0.0; size];
        let mut assign = vec![0usize; scope.len()];
        for slot in values.iter_mut() {
            let value_of = |v: usize| assign[scope.iter().position(|&s| s == v).unwrap()];
            let row = parents.iter().fold(0, |acc, &p| acc * card[p] + value_of(p));
            *slot = table[row][value_of(node)];
            increment(&mut assign, &cards);
        }
        Factor { scope, cards, values }
    }

    fn reduce(&self, evidence: &BTreeMap<usize, usize>) -> Factor {
        if !self.scope.iter().any(|v| evidence.contains_key(v)) {
            return self.clone();
        }
        let keep: Vec<usize> = (0..self.scope.len()).filter(|&k| !evidence.contains_key(&self.scope[k])).collect();
        let scope: Vec<usize> = keep.iter().map(|&k| self.scope[k]).collect();
        let cards: Vec<usize> = keep.iter().map(|&k| self.cards[k]).collect();
        let strides = strides(&self.cards);
        let base: usize = self
            .scope
            .iter()
            .enumerate()
            .filter_map(|(k, v)| evidence.get(v).map(|&x| x * strides[k]))
            .sum();
        let size = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assign = vec![0usize; scope.len()];
        for _ in 0..size {
            let off: usize = keep.iter().zip(&assign).map(|(&k, &a)| a * strides[k]).sum();
            values.push(self.values[base + off]);
            increment(&mut assign, &cards);
        }
        Factor { scope, cards, values }
    }

    fn product(&self, other: &Factor, card: &[usize]) -> Factor {
        let scope: Vec<usize> = self.scope.iter().chain(&other.scope).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let cards: Vec<usize> = scope.iter().map(|&v| card[v]).collect();
        let map = |f: &Factor| -> Vec<usize> {
            let s = strides(&f.cards);
            scope.iter().map(|v| f.scope.iter().position(|u| u == v).map_or(0, |k| s[k])).collect()
        };
        let (sa, sb) = (map(self), map(other));
        let size = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assign = vec![0usize; scope.len()];
        for _ in 0..size {
            let (mut ia, mut ib) = (0, 0);
            for (k, &a) in assign.iter().enumerate() {
                ia += a * sa[k];
                ib += a * sb[k];
            }
            values.push(self.values[ia] * other.values[ib]);
            increment(&mut assign, &cards);
        }
        Factor { scope, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let k = self.scope.iter().position(|&v| v == var).expect("variable in scope");
        let outer: usize = self.cards[..k].iter().product();
        let inner: usize = self.cards[k + 1..].iter().product();
        let ck = self.cards[k];
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for x in 0..ck {
                let src = &self.values[(o * ck + x) * inner..(o * ck + x + 1) * inner];
                for (dst, v) in values[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(k);
        cards.remove(k);
        Factor { scope, cards, values }
    }
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

fn increment(assign: &mut [usize], cards: &[usize]) {
    for k in (0..assign.len()).rev() {
        assign[k] += 1;
        if assign[k] < cards[k] {
            return;
        }
        assign[k] = 0;
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sampler::{Column, FeatureSchema, Provenance, Role, Tier, TransitionRecord};
    use crate::structure::{DagEdge, DagNode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bool_nodes(names: &[&str]) -> Vec<DagNode> {
        names.iter().map(|n| DagNode { name: n.to_string(), role: Role::State }).collect()
    }

    fn edge(a: &str, b: &str) -> DagEdge {
        DagEdge { from: a.into(), to: b.into(), weight: 1.0 }
    }

    fn dataset(names: &[&str], rows: &[Vec<u16>]) -> Dataset {
        let schema = FeatureSchema {
            tier: Tier::Core,
            reward_node: false,
            columns: names.iter().map(|n| Column { name: n.to_string(), role: Role::State, cardinality: 2 }).collect(),
        };
        let mut ds = Dataset::new(schema, Provenance { env_id: "fixture".into(), steps: rows.len(), seed: 0 });
        for r in rows {
            ds.push(TransitionRecord { values: r.clone(), reward: 0.0 }).unwrap();
        }
        ds
    }

    fn exact() -> FitParams {
        FitParams { smoothing: 0.0, ..FitParams::default() }
    }

    /// Brute-force `P(target = value | evidence)` over every joint assignment.
    pub(crate) fn enumerate(bn: &DiscreteBayesNet, target: &str, value: usize, evidence: &Evidence) -> Option<f64> {
        let names = bn.dag.names();
        let cards: Vec<usize> = names.iter().map(|n| bn.domains[n]).collect();
        let t = bn.dag.index_of(target).unwrap();
        let ev: Vec<(usize, usize)> = evidence.iter().map(|(n, &v)| (bn.dag.index_of(n).unwrap(), v)).collect();
        let (mut num, mut den) = (0.0, 0.0);
        let mut assign = vec![0usize; names.len()];
        let total: usize = cards.iter().product();
        for _ in 0..total {
            if ev.iter().all(|&(i, v)| assign[i] == v) {
                // joint as a direct product of table lookups
                let mut p = 1.0;
                for (i, n) in names.iter().enumerate() {
                    let cpd = &bn.cpds[n];
                    let mut row = 0;
                    for par in &cpd.parents {
                        let pi = bn.dag.index_of(par).unwrap();
                        row = row * cards[pi] + assign[pi];
                    }
                    p *= cpd.table[row][assign[i]];
                }
                den += p;
                if assign[t] == value {
                    num += p;
                }
            }
            increment(&mut assign, &cards);
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn parentless_node_frequency() {
        let rows: Vec<Vec<u16>> = (0..100).map(|i| vec![(i < 70) as u16]).collect();
        let dag = CausalDag::from_edges(bool_nodes(&["a"]), vec![]).unwrap();
        let bn = fit_cpds(&dag, &dataset(&["a"], &rows), &exact()).unwrap();
        assert!((bn.cpds["a"].table[0][1] - 0.70).abs() < 1e-12);
        let q = bn.query_probability("a", 1, &Evidence::new()).unwrap();
        assert!((q.probability - 0.70).abs() < 1e-12);
    }

    #[test]
    fn conditional_frequency_from_hand_counts() {
        let mut rows = vec![vec![1, 1]; 8];
        rows.extend(vec![vec![1, 0]; 2]);
        rows.extend(vec![vec![0, 0]; 5]);
        let dag = CausalDag::from_edges(bool_nodes(&["a", "b"]), vec![edge("a", "b")]).unwrap();
        let bn = fit_cpds(&dag, &dataset(&["a", "b"], &rows), &exact()).unwrap();
        assert!((bn.cpds["b"].table[1][1] - 0.8).abs() < 1e-12);
        let ev = Evidence::from([("a".to_string(), 1)]);
        assert!((bn.query_probability("b", 1, &ev).unwrap().probability - 0.8).abs() < 1e-12);
    }

    #[test]
    fn smoothing_formula_and_unseen_parent_rows() {
        let rows = vec![vec![1, 1], vec![1, 1], vec![1, 0]];
        let dag = CausalDag::from_edges(bool_nodes(&["a", "b"]), vec![edge("a", "b")]).unwrap();
        let data = dataset(&["a", "b"], &rows);
        let bn = fit_cpds(&dag, &data, &exact()).unwrap();
        assert_eq!(bn.cpds["b"].table[0], vec![0.5, 0.5]);
        let smoothed = fit_cpds(&dag, &data, &FitParams::default()).unwrap();
        // (2 + 1) / (3 + 2)
        assert!((smoothed.cpds["b"].table[1][1] - 0.6).abs() < 1e-12);
        assert_eq!(smoothed.cpds["b"].table[0], vec![0.5, 0.5]);
    }

    #[test]
    fn fit_errors() {
        let dag = CausalDag::from_edges(bool_nodes(&["a", "zz"]), vec![]).unwrap();
        assert!(matches!(fit_cpds(&dag, &dataset(&["a"], &[vec![1]]), &exact()), Err(BayesError::MissingColumns(c)) if c == ["zz"]));
        let dag = CausalDag::from_edges(bool_nodes(&["a"]), vec![]).unwrap();
        assert!(matches!(fit_cpds(&dag, &dataset(&["a"], &[]), &exact()), Err(BayesError::EmptyDataset)));
        let capped = FitParams { max_cardinality: 1, ..exact() };
        assert!(matches!(fit_cpds(&dag, &dataset(&["a"], &[vec![1]]), &capped), Err(BayesError::CardinalityCap { .. })));
    }

    fn chain() -> DiscreteBayesNet {
        let dag = CausalDag::from_edges(bool_nodes(&["a", "b", "c"]), vec![edge("a", "b"), edge("b", "c")]).unwrap();
        let domains = BTreeMap::from([("a".into(), 2), ("b".into(), 2), ("c".into(), 2)]);
        let tables = BTreeMap::from([
            ("a".to_string(), vec![vec![0.4, 0.6]]),
            ("b".to_string(), vec![vec![0.7, 0.3], vec![0.2, 0.8]]),
            ("c".to_string(), vec![vec![0.9, 0.1], vec![0.25, 0.75]]),
        ]);
        DiscreteBayesNet::from_tables(dag, domains, tables).unwrap()
    }

    #[test]
    fn chain_matches_hand_enumeration() {
        let bn = chain();
        // P(c=T | a=T) = 0.2·0.1 + 0.8·0.75
        let ev = Evidence::from([("a".to_string(), 1)]);
        let p = bn.query_probability("c", 1, &ev).unwrap().probability;
        assert!((p - (0.2 * 0.1 + 0.8 * 0.75)).abs() < 1e-12);
        // P(a=T | c=T) by Bayes over the 8 joint assignments
        let ev = Evidence::from([("c".to_string(), 1)]);
        let p = bn.query_probability("a", 1, &ev).unwrap().probability;
        let num = 0.6 * (0.2 * 0.1 + 0.8 * 0.75);
        let den = num + 0.4 * (0.7 * 0.1 + 0.3 * 0.75);
        assert!((p - num / den).abs() < 1e-12);
    }

    #[test]
    fn deterministic_row_yields_certainty_and_zero_evidence_is_flagged() {
        let dag = CausalDag::from_edges(bool_nodes(&["a", "g"]), vec![edge("a", "g")]).unwrap();
        let domains = BTreeMap::from([("a".into(), 2), ("g".into(), 2)]);
        let tables = BTreeMap::from([
            ("a".to_string(), vec![vec![1.0, 0.0]]),
            ("g".to_string(), vec![vec![0.5, 0.5], vec![0.0, 1.0]]),
        ]);
        let bn = DiscreteBayesNet::from_tables(dag, domains, tables).unwrap();
        let q = bn.query_probability("g", 1, &Evidence::from([("a".to_string(), 1)])).unwrap();
        assert_eq!(q, QueryResult { probability: 0.0, zero_evidence: true });
        let q = bn.query_probability("g", 1, &Evidence::from([("a".to_string(), 0)])).unwrap();
        assert_eq!(q.probability, 0.5);
    }

    #[test]
    fn target_in_evidence_is_rejected() {
        let bn = chain();
        let ev = Evidence::from([("c".to_string(), 1)]);
        assert!(matches!(bn.query_probability("c", 1, &ev), Err(BayesError::TargetInEvidence(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let bn = chain();
        let back = DiscreteBayesNet::from_json(&bn.to_json()).unwrap();
        assert_eq!(back, bn);
    }

    /// Random network over `n` binary nodes with edges only from lower to
    /// higher index.
    pub(crate) fn random_network(rng: &mut ChaCha8Rng, n: usize, names: &[String], roles: &[Role]) -> DiscreteBayesNet {
        let nodes: Vec<DagNode> = (0..n).map(|i| DagNode { name: names[i].clone(), role: roles[i] }).collect();
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                if rng.random_bool(0.3) && edges.iter().filter(|e: &&DagEdge| e.to == names[j]).count() < 4 {
                    edges.push(DagEdge { from: names[i].clone(), to: names[j].clone(), weight: 1.0 });
                }
            }
        }
        let dag = CausalDag::from_edges(nodes, edges).unwrap();
        let domains: BTreeMap<String, usize> = names[..n].iter().map(|n| (n.clone(), 2)).collect();
        let tables = names[..n]
            .iter()
            .map(|name| {
                let rows = 1 << dag.parents(name).len();
                let table = (0..rows)
                    .map(|_| {
                        // occasional hard zeros exercise the zero-evidence path
                        let p: f64 = if rng.random_bool(0.1) { 0.0 } else { rng.random() };
                        vec![1.0 - p, p]
                    })
                    .collect();
                (name.clone(), table)
            })
            .collect();
        DiscreteBayesNet::from_tables(dag, domains, tables).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn elimination_equals_enumeration(seed in any::<u64>(), n in 2usize..=9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let names: Vec<String> = (0..n).map(|i| format!("v{i:02}")).collect();
            let bn = random_network(&mut rng, n, &names, &vec![Role::State; n]);
            let target = rng.random_range(0..n);
            let mut ev = Evidence::new();
            for i in 0..n {
                if i != target && rng.random_bool(0.4) {
                    ev.insert(names[i].clone(), rng.random_range(0..2));
                }
            }
            let dist = bn.query_distribution(&names[target], &ev).unwrap();
            match (dist, enumerate(&bn, &names[target], 1, &ev)) {
                (Some(d), Some(p)) => {
                    prop_assert!((d[1] - p).abs() < 1e-9);
                    prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
                (None, None) => {}
                (d, p) => prop_assert!(false, "elimination {d:?} vs enumeration {p:?}"),
            }
        }
    }
}
