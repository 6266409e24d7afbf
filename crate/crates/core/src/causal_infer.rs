//! Sub-goal-driven action selection over a fitted Bayesian network.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesnet::{BayesError, DiscreteBayesNet, Evidence};
use crate::env::StateFeatures;
use crate::sampler::{Role, PAX_IN_TAXI, TAXI_COL, TAXI_ON_DEST, TAXI_ON_PAX_LOC, TAXI_ROW};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("goal list is empty")]
    NoGoals,
    #[error("goal `{0}` is not a node of the network")]
    UnknownGoal(String),
    #[error("node `{0}` is not a goal-role node")]
    NotAGoal(String),
    #[error("goal `{0}` listed twice")]
    DuplicateGoal(String),
    #[error("no actions to choose from")]
    NoActions,
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

/// Ordered sub-goal node names `o_1..o_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    goals: Vec<String>,
}

impl GoalSpec {
    pub fn new(goals: Vec<String>, bn: &DiscreteBayesNet) -> Result<Self, InferError> {
        if goals.is_empty() {
            return Err(InferError::NoGoals);
        }
        for (i, g) in goals.iter().enumerate() {
            match bn.dag.role_of(g) {
                None => return Err(InferError::UnknownGoal(g.clone())),
                Some(Role::Goal) => {}
                Some(_) => return Err(InferError::NotAGoal(g.clone())),
            }
            if goals[..i].contains(g) {
                return Err(InferError::DuplicateGoal(g.clone()));
            }
        }
        Ok(GoalSpec { goals })
    }

    /// Comma-separated list, e.g. `pax_in_taxi_next,dropoff_next`.
    pub fn parse(text: &str, bn: &DiscreteBayesNet) -> Result<Self, InferError> {
        Self::new(text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(), bn)
    }

    pub fn goals(&self) -> &[String] {
        &self.goals
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// Index into the action list passed to [`infer_max_prob`].
    pub best_action: usize,
    pub probability: f64,
    pub per_action: Vec<f64>,
    /// No action raised the probability above zero.
    pub all_zero: bool,
}

/// Evidence over the network's state-role nodes that `features` can supply.
pub fn state_evidence(bn: &DiscreteBayesNet, features: &StateFeatures) -> Evidence {
    let mut ev = Evidence::new();
    let mut put = |name: &str, value: usize| {
        if bn.dag.role_of(name) == Some(Role::State) {
            ev.insert(name.to_string(), value);
        }
    };
    put(TAXI_ON_PAX_LOC, features.taxi_on_pax_loc as usize);
    put(TAXI_ON_DEST, features.taxi_on_dest as usize);
    put(PAX_IN_TAXI, features.pax_in_taxi as usize);
    if let Some((r, c)) = features.position {
        put(TAXI_ROW, r);
        put(TAXI_COL, c);
    }
    ev
}

/// For every action, clamps its node True and every other action node False
/// on top of `state`, and queries `P(goal = True | ·)`. The best action is
/// replaced only on strict improvement, so ties go to the lowest index.
///
/// `action_nodes[i]` names the network node of action `i`; several actions
/// may share a node.
pub fn infer_max_prob(
    bn: &DiscreteBayesNet,
    state: &Evidence,
    action_nodes: &[&str],
    goal: &str,
) -> Result<InferenceResult, InferError> {
    if action_nodes.is_empty() {
        return Err(InferError::NoActions);
    }
    match bn.dag.role_of(goal) {
        None => return Err(InferError::UnknownGoal(goal.to_string())),
        Some(Role::Goal) => {}
        Some(_) => return Err(InferError::NotAGoal(goal.to_string())),
    }
    let bn_actions: Vec<&str> =
        bn.dag.nodes.iter().filter(|n| n.role == Role::Action).map(|n| n.name.as_str()).collect();
    let mut per_action = Vec::with_capacity(action_nodes.len());
    let mut memo: Vec<(&str, f64)> = Vec::new();
    let (mut best_action, mut p) = (0, 0.0);
    for (i, &node) in action_nodes.iter().enumerate() {
        let q = match memo.iter().find(|(n, _)| *n == node) {
            Some(&(_, q)) => q,
            None => {
                let mut ev = state.clone();
                for &a in &bn_actions {
                    ev.insert(a.to_string(), (a == node) as usize);
                }
                let q = bn.query_probability(goal, 1, &ev)?.probability;
                memo.push((node, q));
                q
            }
        };
        per_action.push(q);
        if p < q {
            p = q;
            best_action = i;
        }
    }
    Ok(InferenceResult { best_action, probability: p, per_action, all_zero: p == 0.0 })
}
