//! Tabular Q-learning, plain and causally guided.
//!
//! The guided learner asks the Bayesian network, at every step, which action
//! most raises the probability of the current sub-goal. When that action is
//! a parent of the sub-goal in the DAG it is taken directly (the *infer*
//! branch); otherwise the step falls back to ε-greedy selection.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesnet::{DiscreteBayesNet, Evidence};
use crate::causal_infer::{infer_max_prob, GoalSpec, InferError, InferenceResult};
use crate::env::{EnvError, Environment, Outcome, StateFeatures, SubGoal};
use crate::par::Execution;
use crate::sampler::{Role, DROPOFF_NEXT, PAX_IN_TAXI, PAX_IN_TAXI_NEXT, TAXI_COL, TAXI_ON_DEST, TAXI_ON_PAX_LOC, TAXI_ROW};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("network lacks action nodes used by the environment: {}", .0.join(", "))]
    Incompatible(Vec<String>),
    #[error("malformed Q-table: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalAdvance {
    /// Advance whenever the infer branch fires.
    Literal,
    /// Advance only when the environment reports the sub-goal achieved.
    Confirmed,
}

/// Which steps have their reward multiplied by the inferred probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScaling {
    EveryStep,
    InferBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
    pub seed: u64,
    pub goal_advance: GoalAdvance,
    pub reward_scaling: RewardScaling,
    /// The infer branch fires only when the best action's probability
    /// reaches this value. Zero recovers the unconditional rule.
    pub infer_threshold: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            episodes: 1000,
            learning_rate: 0.1,
            discount: 0.99,
            epsilon: 1.0,
            epsilon_min: 0.05,
            epsilon_decay: 0.999,
            seed: 0,
            goal_advance: GoalAdvance::Literal,
            reward_scaling: RewardScaling::EveryStep,
            infer_threshold: 0.5,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.epsilon_min) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if self.epsilon_min > self.epsilon {
            return bad("epsilon_min exceeds epsilon");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.infer_threshold) {
            return bad("infer_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of the configuration, as hex.
    pub fn hash_hex(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Sparse Q-table; unvisited entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub num_actions: usize,
    pub env_id: String,
    pub config_hash: String,
    values: HashMap<u64, Vec<f64>>,
}

impl QTable {
    pub fn new(num_actions: usize, env_id: impl Into<String>, config_hash: impl Into<String>) -> Self {
        QTable { num_actions, env_id: env_id.into(), config_hash: config_hash.into(), values: HashMap::new() }
    }

    pub fn get(&self, key: u64, action: usize) -> f64 {
        self.values.get(&key).map_or(0.0, |row| row[action])
    }

    pub fn row(&self, key: u64) -> Option<&[f64]> {
        self.values.get(&key).map(Vec::as_slice)
    }

    fn row_mut(&mut self, key: u64) -> &mut Vec<f64> {
        let n = self.num_actions;
        self.values.entry(key).or_insert_with(|| vec![0.0; n])
    }

    pub fn set(&mut self, key: u64, action: usize, value: f64) {
        self.row_mut(key)[action] = value;
    }

    pub fn visited_states(&self) -> usize {
        self.values.len()
    }

    /// `max_a Q(key, a)` over the actions `allowed` admits.
    pub fn max_value(&self, key: u64, allowed: impl Fn(usize) -> bool) -> f64 {
        let Some(row) = self.values.get(&key) else { return 0.0 };
        let best = row.iter().enumerate().filter(|(a, _)| allowed(*a)).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Lowest-index action attaining the maximum among `allowed` actions.
    pub fn greedy(&self, key: u64, allowed: impl Fn(usize) -> bool) -> usize {
        let row = self.values.get(&key);
        let mut best = None;
        for a in (0..self.num_actions).filter(|&a| allowed(a)) {
            let q = row.map_or(0.0, |r| r[a]);
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        best.map_or(0, |(a, _)| a)
    }

    /// Dense CSV sorted by state key: two `#` header lines, then
    /// `state,action,value` rows.
    pub fn to_csv(&self) -> String {
        let mut keys: Vec<&u64> = self.values.keys().collect();
        keys.sort_unstable();
        let mut out = format!("# env={} actions={} config_hash={}\nstate,action,value\n", self.env_id, self.num_actions, self.config_hash);
        for k in keys {
            for (a, v) in self.values[k].iter().enumerate() {
                let _ = writeln!(out, "{k},{a},{v}");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, LearnError> {
        let bad = |m: String| LearnError::Format(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let field = |key: &str| -> Result<String, LearnError> {
            header
                .trim_start_matches('#')
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("header lacks `{key}`")))
        };
        let num_actions: usize = field("actions")?.parse().map_err(|_| bad("bad action count".into()))?;
        let mut q = QTable::new(num_actions, field("env")?, field("config_hash")?);
        if lines.next() != Some("state,action,value") {
            return Err(bad("missing column header".into()));
        }
        for (i, line) in lines.enumerate() {
            let mut it = line.split(',');
            let mut next = || it.next().ok_or_else(|| bad(format!("short row {}", i + 3)));
            let (k, a, v) = (next()?, next()?, next()?);
            let k: u64 = k.parse().map_err(|_| bad(format!("bad state on row {}", i + 3)))?;
            let a: usize = a.parse().map_err(|_| bad(format!("bad action on row {}", i + 3)))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("bad value on row {}", i + 3)))?;
            if a >= num_actions || !v.is_finite() {
                return Err(bad(format!("row {} out of range", i + 3)));
            }
            q.set(k, a, v);
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub steps: u32,
    pub epsilon: f64,
    pub infer_count: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,total_reward,steps,epsilon,infer_count\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.episode, r.total_reward, r.steps, r.epsilon, r.infer_count);
        }
        out
    }

    /// Mean total reward over episodes `from..=to` (1-based, inclusive).
    pub fn mean_reward(&self, from: usize, to: usize) -> f64 {
        let xs: Vec<f64> = self.window(from, to).collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }

    pub fn reward_std(&self, from: usize, to: usize) -> f64 {
        let xs: Vec<f64> = self.window(from, to).collect();
        let m = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len().max(1) as f64).sqrt()
    }

    fn window(&self, from: usize, to: usize) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter(move |r| r.episode >= from && r.episode <= to).map(|r| r.total_reward)
    }
}

/// Fitted network plus the per-environment bookkeeping the infer branch
/// needs, with results memoized by (state evidence, goal index).
#[derive(Debug, Clone)]
pub struct CausalGuide<'a> {
    bn: &'a DiscreteBayesNet,
    goals: GoalSpec,
    action_nodes: Vec<&'static str>,
    /// `parent_of[j][a]`: action `a`'s node is a DAG parent of goal `j`.
    parent_of: Vec<Vec<bool>>,
    state_nodes: Vec<&'static str>,
    cache: HashMap<(u64, usize), InferenceResult>,
}

const STATE_NODES: [&str; 5] = [TAXI_ON_PAX_LOC, TAXI_ON_DEST, PAX_IN_TAXI, TAXI_ROW, TAXI_COL];

fn state_value(f: &StateFeatures, node: &str) -> Option<usize> {
    match node {
        TAXI_ON_PAX_LOC => Some(f.taxi_on_pax_loc as usize),
        TAXI_ON_DEST => Some(f.taxi_on_dest as usize),
        PAX_IN_TAXI => Some(f.pax_in_taxi as usize),
        TAXI_ROW => f.position.map(|p| p.0),
        TAXI_COL => f.position.map(|p| p.1),
        _ => None,
    }
}

impl<'a> CausalGuide<'a> {
    pub fn new<E: Environment>(env: &E, bn: &'a DiscreteBayesNet, goals: GoalSpec) -> Result<Self, LearnError> {
        let action_nodes: Vec<&'static str> = (0..env.num_actions()).map(|a| env.action_node(a)).collect();
        let mut missing: Vec<String> =
            action_nodes.iter().filter(|n| bn.dag.role_of(n) != Some(Role::Action)).map(|n| n.to_string()).collect();
        missing.dedup();
        if !missing.is_empty() {
            return Err(LearnError::Incompatible(missing));
        }
        let parent_of = goals
            .goals()
            .iter()
            .map(|g| {
                let parents = bn.dag.parents(g);
                let row: Vec<bool> = action_nodes.iter().map(|n| parents.iter().any(|p| p == n)).collect();
                if !row.iter().any(|&b| b) {
                    log::warn!("goal `{g}` has no action parent; the infer branch can never fire for it");
                }
                row
            })
            .collect();
        let state_nodes = STATE_NODES.into_iter().filter(|n| bn.dag.role_of(n) == Some(Role::State)).collect();
        Ok(CausalGuide { bn, goals, action_nodes, parent_of, state_nodes, cache: HashMap::new() })
    }

    pub fn goals(&self) -> &GoalSpec {
        &self.goals
    }

    pub fn action_nodes(&self) -> &[&'static str] {
        &self.action_nodes
    }

    pub fn is_parent(&self, goal: usize, action: usize) -> bool {
        self.parent_of[goal][action]
    }

    pub fn evidence(&self, features: &StateFeatures) -> Evidence {
        self.state_nodes
            .iter()
            .filter_map(|&n| state_value(features, n).map(|v| (n.to_string(), v)))
            .collect()
    }

    pub fn infer(&mut self, features: &StateFeatures, goal: usize) -> Result<&InferenceResult, LearnError> {
        // state values are tiny categoricals; pack them 16 bits apiece
        let key = self
            .state_nodes
            .iter()
            .fold(0u64, |acc, &n| (acc << 16) | state_value(features, n).map_or(0xffff, |v| v as u64));
        if !self.cache.contains_key(&(key, goal)) {
            let ev = self.evidence(features);
            let r = infer_max_prob(self.bn, &ev, &self.action_nodes, &self.goals.goals()[goal])?;
            self.cache.insert((key, goal), r);
        }
        Ok(&self.cache[&(key, goal)])
    }

    fn achieves(&self, goal: usize, sub: Option<SubGoal>) -> bool {
        matches!(
            (self.goals.goals()[goal].as_str(), sub),
            (PAX_IN_TAXI_NEXT, Some(SubGoal::PaxInTaxi)) | (DROPOFF_NEXT, Some(SubGoal::Dropoff))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Infer,
    Explore,
    Exploit,
}

struct Decision {
    action: usize,
    branch: Branch,
    p: f64,
    goal: usize,
}

/// Mutable per-run state shared by training, evaluation and tracing.
struct Agent<'g, 'a> {
    guide: Option<&'g mut CausalGuide<'a>>,
    goal: usize,
    epsilon: f64,
    cfg: LearnerConfig,
}

impl Agent<'_, '_> {
    fn decide<E: Environment, R: Rng>(
        &mut self,
        env: &E,
        q: &QTable,
        s: &E::State,
        rng: &mut R,
        explore: bool,
    ) -> Result<(Decision, Option<InferenceResult>), LearnError> {
        let goal = self.goal;
        let mut inference = None;
        if let Some(guide) = self.guide.as_deref_mut() {
            let r = guide.infer(&env.features(s), goal)?.clone();
            if guide.is_parent(goal, r.best_action) && r.probability >= self.cfg.infer_threshold {
                let d = Decision { action: r.best_action, branch: Branch::Infer, p: r.probability, goal };
                if self.cfg.goal_advance == GoalAdvance::Literal {
                    self.goal = (goal + 1).min(guide.goals().len() - 1);
                }
                return Ok((d, Some(r)));
            }
            inference = Some(r);
        }
        let p = inference.as_ref().map_or(1.0, |r| r.probability);
        let selectable = |a: usize| env.is_selectable(s, a);
        let d = if explore && rng.random::<f64>() < self.epsilon {
            let choices: Vec<usize> = (0..env.num_actions()).filter(|&a| selectable(a)).collect();
            Decision { action: choices[rng.random_range(0..choices.len())], branch: Branch::Explore, p, goal }
        } else {
            Decision { action: q.greedy(env.state_key(s), selectable), branch: Branch::Exploit, p, goal }
        };
        if explore {
            self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_min);
        }
        Ok((d, inference))
    }

    fn after_step(&mut self, sub: Option<SubGoal>) {
        if self.cfg.goal_advance == GoalAdvance::Confirmed {
            if let Some(guide) = self.guide.as_deref() {
                if guide.achieves(self.goal, sub) {
                    self.goal = (self.goal + 1).min(guide.goals().len() - 1);
                }
            }
        }
    }

    fn scaled_reward(&self, d: &Decision, r: f64) -> f64 {
        if self.guide.is_none() {
            return r;
        }
        match (self.cfg.reward_scaling, d.branch) {
            (RewardScaling::EveryStep, _) | (RewardScaling::InferBranch, Branch::Infer) => r * d.p,
            _ => r,
        }
    }
}

/// Resumable training loop shared by both learners. Each call to
/// [`Trainer::run_episode`] plays one ε-greedy episode and updates the table.
pub struct Trainer<'e, 'g, 'a, E: Environment> {
    env: &'e E,
    guide: Option<&'g mut CausalGuide<'a>>,
    cfg: LearnerConfig,
    rng: ChaCha8Rng,
    q: QTable,
    curve: TrainingCurve,
    epsilon: f64,
}

impl<'e, 'g, 'a, E: Environment> Trainer<'e, 'g, 'a, E> {
    pub fn new(env: &'e E, guide: Option<&'g mut CausalGuide<'a>>, cfg: &LearnerConfig) -> Result<Self, LearnError> {
        cfg.validate()?;
        Ok(Trainer {
            env,
            guide,
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            q: QTable::new(env.num_actions(), env.id(), cfg.hash_hex()),
            curve: TrainingCurve { records: Vec::with_capacity(cfg.episodes) },
            epsilon: cfg.epsilon,
        })
    }

    /// Plays one episode from `start`, or from a random reset when `None`.
    pub fn run_episode(&mut self, start: Option<&E::State>) -> Result<&EpisodeRecord, LearnError> {
        let (env, cfg) = (self.env, &self.cfg);
        let mut agent = Agent { guide: self.guide.as_deref_mut(), goal: 0, epsilon: self.epsilon, cfg: cfg.clone() };
        let mut s = match start {
            Some(s) => s.clone(),
            None => env.reset(&mut self.rng),
        };
        let (mut total, mut steps, mut infer_count) = (0.0, 0u32, 0u32);
        while !env.is_done(&s) {
            let (d, _) = agent.decide(env, &self.q, &s, &mut self.rng, true)?;
            let res = env.step(&s, d.action)?;
            let key = env.state_key(&s);
            let target = if res.outcome == Outcome::DroppedOff {
                0.0
            } else {
                self.q.max_value(env.state_key(&res.next_state), |a| env.is_selectable(&res.next_state, a))
            };
            let old = self.q.get(key, d.action);
            let r = agent.scaled_reward(&d, res.reward);
            self.q.set(key, d.action, old + cfg.learning_rate * (r + cfg.discount * target - old));
            agent.after_step(res.subgoal_achieved);
            total += res.reward;
            steps += 1;
            infer_count += (d.branch == Branch::Infer) as u32;
            s = res.next_state;
        }
        self.epsilon = agent.epsilon;
        let episode = self.curve.records.len() + 1;
        self.curve.records.push(EpisodeRecord { episode, total_reward: total, steps, epsilon: self.epsilon, infer_count });
        Ok(self.curve.records.last().expect("just pushed"))
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn guide(&self) -> Option<&CausalGuide<'a>> {
        self.guide.as_deref()
    }

    pub fn episodes_run(&self) -> usize {
        self.curve.records.len()
    }

    pub fn finish(self) -> (QTable, TrainingCurve) {
        (self.q, self.curve)
    }
}

fn learn<E: Environment>(
    env: &E,
    guide: Option<&mut CausalGuide>,
    cfg: &LearnerConfig,
) -> Result<(QTable, TrainingCurve), LearnError> {
    let mut trainer = Trainer::new(env, guide, cfg)?;
    for _ in 0..cfg.episodes {
        trainer.run_episode(None)?;
    }
    Ok(trainer.finish())
}

/// Causally guided Q-learning.
pub fn qcogni_learn<E: Environment>(
    env: &E,
    guide: &mut CausalGuide,
    cfg: &LearnerConfig,
) -> Result<(QTable, TrainingCurve), LearnError> {
    learn(env, Some(guide), cfg)
}

/// Plain ε-greedy Q-learning on raw rewards.
pub fn vanilla_q_learn<E: Environment>(env: &E, cfg: &LearnerConfig) -> Result<(QTable, TrainingCurve), LearnError> {
    learn(env, None, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome<S> {
    pub reward: f64,
    pub steps: u32,
    pub distance: f64,
    /// The passenger was delivered before the step budget ran out.
    pub success: bool,
    /// Visited states, starting with the initial one.
    pub states: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport<S> {
    pub episodes: Vec<EpisodeOutcome<S>>,
}

impl<S> EvaluationReport<S> {
    pub fn success_rate(&self) -> f64 {
        self.episodes.iter().filter(|e| e.success).count() as f64 / self.episodes.len().max(1) as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.episodes.iter().map(|e| e.reward).sum::<f64>() / self.episodes.len().max(1) as f64
    }
}

fn rollout<E: Environment>(
    env: &E,
    q: &QTable,
    guide: Option<&mut CausalGuide>,
    start: &E::State,
    mut on_step: impl FnMut(&E::State, &Decision, Option<&InferenceResult>, f64),
) -> Result<EpisodeOutcome<E::State>, LearnError> {
    let cfg = LearnerConfig { epsilon: 0.0, epsilon_min: 0.0, ..LearnerConfig::default() };
    let mut agent = Agent { guide, goal: 0, epsilon: 0.0, cfg };
    // ε = 0 never consumes randomness
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = start.clone();
    let mut out = EpisodeOutcome { reward: 0.0, steps: 0, distance: 0.0, success: false, states: vec![s.clone()] };
    while !env.is_done(&s) {
        let (d, inf) = agent.decide(env, q, &s, &mut rng, false)?;
        let res = env.step(&s, d.action)?;
        agent.after_step(res.subgoal_achieved);
        out.reward += res.reward;
        out.steps += 1;
        out.distance += res.distance;
        out.success |= res.outcome == Outcome::DroppedOff;
        on_step(&s, &d, inf.as_ref(), res.reward);
        s = res.next_state;
        out.states.push(s.clone());
    }
    Ok(out)
}

/// Greedy rollouts from each start state (ε = 0; the infer branch stays
/// active when a guide is supplied). Episodes run concurrently.
pub fn evaluate_policy<E: Environment>(
    env: &E,
    q: &QTable,
    guide: Option<&CausalGuide>,
    starts: &[E::State],
    exec: Execution,
) -> Result<EvaluationReport<E::State>, LearnError> {
    let episodes = exec.map(starts, |s| {
        let mut g = guide.cloned();
        rollout(env, q, g.as_mut(), s, |_, _, _, _| {})
    });
    Ok(EvaluationReport { episodes: episodes.into_iter().collect::<Result<_, _>>()? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProbability {
    pub action: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFeatures {
    pub taxi_on_pax_loc: bool,
    pub taxi_on_dest: bool,
    pub pax_in_taxi: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u32,
    pub state_key: u64,
    pub features: TraceFeatures,
    pub goal: Option<String>,
    pub branch: Branch,
    pub action: String,
    pub p: f64,
    pub per_action: Vec<ActionProbability>,
    pub reward: f64,
    pub cumulative_reward: f64,
}

/// One greedy episode with a record per decision.
pub fn trace_episode<E: Environment>(
    env: &E,
    q: &QTable,
    mut guide: Option<&mut CausalGuide>,
    start: &E::State,
) -> Result<Vec<TraceRecord>, LearnError> {
    let goal_names: Option<Vec<String>> = guide.as_deref().map(|g| g.goals().goals().to_vec());
    let mut records = Vec::new();
    let mut cumulative = 0.0;
    rollout(env, q, guide.as_deref_mut(), start, |s, d, inf, reward| {
        cumulative += reward;
        let f = env.features(s);
        let per_action = match inf {
            Some(r) => r.per_action.clone(),
            None => vec![d.p; env.num_actions()],
        };
        records.push(TraceRecord {
            step: records.len() as u32 + 1,
            state_key: env.state_key(s),
            features: TraceFeatures {
                taxi_on_pax_loc: f.taxi_on_pax_loc,
                taxi_on_dest: f.taxi_on_dest,
                pax_in_taxi: f.pax_in_taxi,
                position: f.position,
            },
            goal: goal_names.as_ref().map(|g| g[d.goal].clone()),
            branch: d.branch,
            action: env.actions()[d.action].name(),
            p: d.p,
            per_action: env
                .actions()
                .iter()
                .zip(per_action)
                .map(|(a, p)| ActionProbability { action: a.name(), p })
                .collect(),
            reward,
            cumulative_reward: cumulative,
        });
    })?;
    Ok(records)
}

pub fn trace_to_jsonl(records: &[TraceRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("trace serializes") + "\n").collect()
}
