//! Causal reinforcement learning for pickup-and-delivery routing.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`sampler`] collects a random-walk dataset of transitions from an
//!    [`env`] environment.
//! 2. [`structure`] learns a weighted causal DAG from the dataset with a
//!    continuous acyclicity-constrained optimizer.
//! 3. [`bayesnet`] fits conditional probability tables over the DAG and
//!    answers exact posterior queries.
//! 4. [`learner`] trains a tabular Q-learner that consults the network via
//!    [`causal_infer`] to pick sub-goal actions and weight rewards.
//!
//! [`shortest_path`] provides the Dijkstra/A* baselines and route oracles,
//! and [`harness`] wires everything into reproducible experiments.

pub mod bayesnet;
pub mod causal_infer;
pub mod env;
pub mod harness;
pub mod learner;
pub mod par;
pub mod sampler;
pub mod shortest_path;
pub mod structure;

pub use par::Execution;
