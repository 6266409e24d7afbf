//! Random-walk data collection and transition feature extraction.
//!
//! Every record pairs pre-transition state and action indicators with
//! post-transition goal indicators, so an edge such as
//! `action_pickup -> pax_in_taxi_next` reads as "this action, taken in this
//! state, produces that outcome".

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvKind, Environment, Outcome, StateFeatures, StepResult};

pub const TAXI_ON_PAX_LOC: &str = "taxi_on_pax_loc";
pub const TAXI_ON_DEST: &str = "taxi_on_dest";
pub const PAX_IN_TAXI: &str = "pax_in_taxi";
pub const TAXI_ROW: &str = "taxi_row";
pub const TAXI_COL: &str = "taxi_col";
pub const PAX_IN_TAXI_NEXT: &str = "pax_in_taxi_next";
pub const DROPOFF_NEXT: &str = "dropoff_next";
pub const REWARD_CLASS: &str = "reward_class";

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error("dataset parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    State,
    Action,
    Goal,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::State => "state",
            Role::Action => "action",
            Role::Goal => "goal",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "state" => Ok(Role::State),
            "action" => Ok(Role::Action),
            "goal" => Ok(Role::Goal),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Shared by grid and graph environments.
    Core,
    /// Core plus categorical taxi row/column (grid only).
    Positional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: Role,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub tier: Tier,
    pub reward_node: bool,
    pub columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn for_env<E: Environment>(env: &E, tier: Tier, reward_node: bool) -> Result<Self, SamplerError> {
        let col = |name: &str, role, cardinality| Column { name: name.to_string(), role, cardinality };
        let mut columns = vec![
            col(TAXI_ON_PAX_LOC, Role::State, 2),
            col(TAXI_ON_DEST, Role::State, 2),
            col(PAX_IN_TAXI, Role::State, 2),
        ];
        if tier == Tier::Positional {
            let (rows, cols) = env
                .position_domains()
                .ok_or_else(|| SamplerError::Schema("positional features need a grid environment".into()))?;
            columns.push(col(TAXI_ROW, Role::State, rows));
            columns.push(col(TAXI_COL, Role::State, cols));
        }
        for i in 0..env.num_actions() {
            let name = env.action_node(i);
            if !columns.iter().any(|c| c.name == name) {
                columns.push(col(name, Role::Action, 2));
            }
        }
        columns.push(col(PAX_IN_TAXI_NEXT, Role::Goal, 2));
        columns.push(col(DROPOFF_NEXT, Role::Goal, 2));
        if reward_node {
            columns.push(col(REWARD_CLASS, Role::Goal, 3));
        }
        Ok(FeatureSchema { tier, reward_node, columns })
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }
}

/// One sampled transition as a flat feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub values: Vec<u16>,
    pub reward: f64,
}

fn reward_class(outcome: Outcome) -> u16 {
    match outcome {
        Outcome::Illegal => 0,
        Outcome::DroppedOff => 2,
        _ => 1,
    }
}

/// Precomputed column layout for one (environment, schema) pair.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    schema: FeatureSchema,
    action_cols: Vec<usize>,
    action_col_set: Vec<usize>,
    row_col: Option<(usize, usize)>,
    next_cols: (usize, usize),
    reward_col: Option<usize>,
}

impl FeatureExtractor {
    pub fn new<E: Environment>(env: &E, schema: &FeatureSchema) -> Result<Self, SamplerError> {
        let need = |name: &str| {
            schema.index_of(name).ok_or_else(|| SamplerError::Schema(format!("schema lacks column `{name}`")))
        };
        for name in [TAXI_ON_PAX_LOC, TAXI_ON_DEST, PAX_IN_TAXI] {
            if need(name)? > 2 {
                return Err(SamplerError::Schema("state columns must lead the schema".into()));
            }
        }
        let action_cols = (0..env.num_actions()).map(|i| need(env.action_node(i))).collect::<Result<Vec<_>, _>>()?;
        let mut action_col_set = action_cols.clone();
        action_col_set.sort_unstable();
        action_col_set.dedup();
        if let Some(extra) = schema
            .columns
            .iter()
            .enumerate()
            .find(|(i, c)| c.role == Role::Action && !action_col_set.contains(i))
        {
            return Err(SamplerError::Schema(format!(
                "action column `{}` has no counterpart in environment {}",
                extra.1.name,
                env.id()
            )));
        }
        let row_col = match schema.tier {
            Tier::Core => None,
            Tier::Positional => {
                if env.kind() != EnvKind::Grid {
                    return Err(SamplerError::Schema("positional tier requires a grid environment".into()));
                }
                Some((need(TAXI_ROW)?, need(TAXI_COL)?))
            }
        };
        Ok(FeatureExtractor {
            schema: schema.clone(),
            action_cols,
            action_col_set,
            row_col,
            next_cols: (need(PAX_IN_TAXI_NEXT)?, need(DROPOFF_NEXT)?),
            reward_col: if schema.reward_node { Some(need(REWARD_CLASS)?) } else { None },
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn fill(&self, pre: &StateFeatures, action: usize, post: &StateFeatures, outcome: Outcome, out: &mut [u16]) {
        out.fill(0);
        out[0] = pre.taxi_on_pax_loc as u16;
        out[1] = pre.taxi_on_dest as u16;
        out[2] = pre.pax_in_taxi as u16;
        if let (Some((rc, cc)), Some((r, c))) = (self.row_col, pre.position) {
            out[rc] = r as u16;
            out[cc] = c as u16;
        }
        out[self.action_cols[action]] = 1;
        out[self.next_cols.0] = post.pax_in_taxi as u16;
        out[self.next_cols.1] = post.delivered as u16;
        if let Some(col) = self.reward_col {
            out[col] = reward_class(outcome);
        }
    }

    pub fn action_columns(&self) -> &[usize] {
        &self.action_col_set
    }
}

/// Feature row for a single transition.
pub fn extract_features<E: Environment>(
    env: &E,
    schema: &FeatureSchema,
    state: &E::State,
    action: usize,
    result: &StepResult<E::State>,
) -> Result<TransitionRecord, SamplerError> {
    let fx = FeatureExtractor::new(env, schema)?;
    if action >= env.num_actions() {
        return Err(SamplerError::Schema(format!("action {action} out of range")));
    }
    let mut values = vec![0; schema.len()];
    fx.fill(&env.features(state), action, &env.features(&result.next_state), result.outcome, &mut values);
    Ok(TransitionRecord { values, reward: result.reward })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub env_id: String,
    pub steps: usize,
    pub seed: u64,
}

/// Tabular corpus of transitions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub provenance: Provenance,
    values: Vec<u16>,
    rewards: Vec<f64>,
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: FeatureSchema,
    pub provenance: Provenance,
    pub rows: usize,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, provenance: Provenance) -> Self {
        Dataset { schema, provenance, values: Vec::new(), rewards: Vec::new() }
    }

    pub fn push(&mut self, record: TransitionRecord) -> Result<(), SamplerError> {
        if record.values.len() != self.schema.len() {
            return Err(SamplerError::Schema(format!(
                "record has {} values, schema has {} columns",
                record.values.len(),
                self.schema.len()
            )));
        }
        for (v, c) in record.values.iter().zip(&self.schema.columns) {
            if *v as usize >= c.cardinality {
                return Err(SamplerError::Schema(format!("value {v} outside the domain of `{}`", c.name)));
            }
        }
        self.values.extend_from_slice(&record.values);
        self.rewards.push(record.reward);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[u16] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.values.chunks_exact(self.n_cols().max(1))
    }

    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn record(&self, i: usize) -> TransitionRecord {
        TransitionRecord { values: self.row(i).to_vec(), reward: self.rewards[i] }
    }

    pub fn column(&self, name: &str) -> Option<Vec<u16>> {
        let j = self.schema.index_of(name)?;
        Some(self.rows().map(|r| r[j]).collect())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta { schema: self.schema.clone(), provenance: self.provenance.clone(), rows: self.n_rows() }
    }

    /// CSV with one header naming every column plus `reward`; booleans as 0/1.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 2 + self.n_rows() * 4);
        out.push_str(&self.schema.names().join(","));
        out.push_str(",reward\n");
        for (row, r) in self.rows().zip(&self.rewards) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{r}");
        }
        out
    }

    pub fn from_csv(text: &str, meta: &DatasetMeta) -> Result<Self, SamplerError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, h)| h).unwrap_or("");
        let expected = format!("{},reward", meta.schema.names().join(","));
        if header.trim() != expected {
            let have: Vec<&str> = header.split(',').collect();
            let missing: Vec<&str> =
                meta.schema.names().into_iter().filter(|n| !have.contains(n)).collect();
            return Err(SamplerError::Schema(format!(
                "CSV header does not match metadata schema (missing columns: {missing:?})"
            )));
        }
        let mut ds = Dataset::new(meta.schema.clone(), meta.provenance.clone());
        let d = meta.schema.len();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SamplerError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 1 {
                return Err(err(format!("expected {} fields, found {}", d + 1, fields.len())));
            }
            let values = fields[..d]
                .iter()
                .map(|f| f.trim().parse::<u16>().map_err(|e| err(format!("{f}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let reward = fields[d].trim().parse::<f64>().map_err(|e| err(format!("{}: {e}", fields[d])))?;
            ds.push(TransitionRecord { values, reward }).map_err(|e| err(e.to_string()))?;
        }
        Ok(ds)
    }
}

/// Uniform random walk of exactly `steps` transitions, resetting the
/// environment whenever an episode ends.
pub fn random_walk<E: Environment>(
    env: &E,
    schema: &FeatureSchema,
    steps: usize,
    seed: u64,
) -> Result<Dataset, SamplerError> {
    random_walk_visiting(env, schema, steps, seed, |_| {})
}

/// [`random_walk`] that also hands every pre-transition state to `visit`.
pub fn random_walk_visiting<E: Environment>(
    env: &E,
    schema: &FeatureSchema,
    steps: usize,
    seed: u64,
    mut visit: impl FnMut(&E::State),
) -> Result<Dataset, SamplerError> {
    if steps == 0 {
        return Err(SamplerError::ZeroSteps);
    }
    let fx = FeatureExtractor::new(env, schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = Dataset::new(schema.clone(), Provenance { env_id: env.id(), steps, seed });
    ds.values.reserve(steps * schema.len());
    ds.rewards.reserve(steps);
    let mut row = vec![0u16; schema.len()];
    let mut state = env.reset(&mut rng);
    let n_actions = env.num_actions();
    for _ in 0..steps {
        visit(&state);
        let action = rng.random_range(0..n_actions);
        let out = env.step(&state, action)?;
        fx.fill(&env.features(&state), action, &env.features(&out.next_state), out.outcome, &mut row);
        ds.values.extend_from_slice(&row);
        ds.rewards.push(out.reward);
        state = if out.done { env.reset(&mut rng) } else { out.next_state };
    }
    Ok(ds)
}
