//! Pickup-and-delivery environments.
//!
//! Both environments are immutable descriptions plus pure transition
//! functions over explicit state values, so one environment can be shared by
//! any number of concurrent runs.

pub mod graph;
pub mod grid;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{GraphConfig, GraphEnv, GraphEnvState, Phase, RoadGraph, Trip};
pub use grid::{GridConfig, GridEnv, GridState, Passenger};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot step a state whose episode is already done")]
    SteppingDoneState,
    #[error("action index {index} out of range (environment has {count} actions)")]
    ActionOutOfRange { index: usize, count: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Discrete action. Grid environments use the four compass moves, graph
/// environments use `MoveToNeighbor(k)` where `k` indexes the outgoing edges
/// of the current node sorted by target id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveNorth,
    MoveSouth,
    MoveEast,
    MoveWest,
    MoveToNeighbor(usize),
    Pickup,
    Dropoff,
}

impl Action {
    pub fn name(&self) -> String {
        match self {
            Action::MoveNorth => "north".into(),
            Action::MoveSouth => "south".into(),
            Action::MoveEast => "east".into(),
            Action::MoveWest => "west".into(),
            Action::MoveToNeighbor(k) => format!("move_{k}"),
            Action::Pickup => "pickup".into(),
            Action::Dropoff => "dropoff".into(),
        }
    }

    pub fn is_move(&self) -> bool {
        !matches!(self, Action::Pickup | Action::Dropoff)
    }
}

/// What a transition did, independent of the reward scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Moved,
    Blocked,
    PickedUp,
    DroppedOff,
    Illegal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubGoal {
    PaxInTaxi,
    Dropoff,
}

impl SubGoal {
    pub fn as_str(&self) -> &'static str {
        match self {
            SubGoal::PaxInTaxi => "pax_in_taxi",
            SubGoal::Dropoff => "dropoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<S> {
    pub next_state: S,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
    pub subgoal_achieved: Option<SubGoal>,
    /// Distance travelled by this transition (cells on the grid, edge length
    /// on graphs).
    pub distance: f64,
}

/// Environment-independent view of a state used for feature extraction and
/// causal evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateFeatures {
    pub taxi_on_pax_loc: bool,
    pub taxi_on_dest: bool,
    pub pax_in_taxi: bool,
    pub delivered: bool,
    pub position: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    Grid,
    Graph,
}

pub trait Environment: Sync {
    type State: Clone + std::fmt::Debug + PartialEq + Send + Sync;

    fn id(&self) -> String;
    fn kind(&self) -> EnvKind;
    fn actions(&self) -> &[Action];
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn step(&self, state: &Self::State, action: usize) -> Result<StepResult<Self::State>, EnvError>;
    /// Key used by tabular learners; must not depend on the step counter.
    fn state_key(&self, state: &Self::State) -> u64;
    fn features(&self, state: &Self::State) -> StateFeatures;
    fn is_done(&self, state: &Self::State) -> bool;
    /// Name of the causal-model node that represents action `index`.
    fn action_node(&self, index: usize) -> &'static str;
    /// Categorical domain sizes of the positional features, if any.
    fn position_domains(&self) -> Option<(usize, usize)> {
        None
    }
    /// Whether greedy selection may pick `action` in `state`.
    fn is_selectable(&self, _state: &Self::State, _action: usize) -> bool {
        true
    }

    fn num_actions(&self) -> usize {
        self.actions().len()
    }
}

pub(crate) fn check_action(index: usize, count: usize) -> Result<(), EnvError> {
    if index >= count {
        Err(EnvError::ActionOutOfRange { index, count })
    } else {
        Ok(())
    }
}
