//! Experiment drivers: the grid scaling study and the road-graph route
//! comparison. Both produce plain CSV text; the CLI decides where it goes.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesnet::{fit_cpds, BayesError, DiscreteBayesNet, FitParams};
use crate::causal_infer::{GoalSpec, InferError};
use crate::env::graph::{GraphEnv, RoadGraph, Trip};
use crate::env::grid::{GridConfig, GridEnv, GridState, Passenger};
use crate::env::{EnvError, Environment};
use crate::learner::{evaluate_policy, CausalGuide, LearnError, LearnerConfig, QTable, RewardScaling, Trainer};
use crate::par::Execution;
use crate::sampler::{random_walk, FeatureSchema, SamplerError, Tier};
use crate::shortest_path::{a_star, dijkstra, grid_optimal_reward, optimal_tour, GraphAdjacency, GridAdjacency};
use crate::structure::{CausalDag, StructureError, StructureParams};

/// Goal order used throughout: passenger aboard, then delivered.
pub const TAXI_GOALS: &str = "pax_in_taxi_next,dropoff_next";

/// Smallest and largest grid sides of the full scaling sweep.
pub const FULL_SWEEP: (usize, usize) = (8, 512);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Structure settings that recover the pickup edges on the taxi walk. The
/// library defaults prune the weak linear weight of `action_pickup`.
pub fn taxi_structure_params() -> StructureParams {
    StructureParams { l1_penalty: 1e-4, threshold: 0.01, ..StructureParams::default() }
}

/// Learner settings for road graphs: deterministic moves allow full-step
/// updates, a high exploration floor keeps alternative routes revalued, and
/// edge-length penalties stay unscaled so route length drives the values.
pub fn graph_learner_config() -> LearnerConfig {
    LearnerConfig {
        learning_rate: 1.0,
        discount: 1.0,
        epsilon_min: 0.3,
        reward_scaling: RewardScaling::InferBranch,
        ..LearnerConfig::default()
    }
}

/// Fits the network over `dag` on a fresh random walk of `env` and wraps it
/// with the taxi goal order.
pub fn fit_network<E: Environment>(env: &E, dag: &CausalDag, walk_steps: usize, seed: u64) -> Result<DiscreteBayesNet, HarnessError> {
    let schema = FeatureSchema::for_env(env, Tier::Core, false)?;
    let dag = if dag.names() == schema.names() { dag.clone() } else { dag.transfer_to(&schema)? };
    let data = random_walk(env, &schema, walk_steps, seed)?;
    Ok(fit_cpds(&dag, &data, &FitParams::default())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    QCogni,
    QLearning,
    Dijkstra,
    AStar,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::QCogni, Algorithm::QLearning, Algorithm::Dijkstra, Algorithm::AStar];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::QCogni => "qcogni",
            Algorithm::QLearning => "qlearning",
            Algorithm::Dijkstra => "dijkstra",
            Algorithm::AStar => "astar",
        }
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm `{s}` (expected qcogni, qlearning, dijkstra or astar)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    /// Grid sides; each size is an `n`×`n` generated grid.
    pub sizes: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub repeats: usize,
    /// Seeds the grid layout and probe config; repeat `r` trains with `seed + r`.
    pub seed: u64,
    /// Sizes with more cells are skipped.
    pub max_nodes: usize,
    pub max_episodes: usize,
    pub max_seconds: f64,
    /// Random-walk length for fitting the network on each grid.
    pub walk_steps: usize,
    pub learner: LearnerConfig,
    pub exec: Execution,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            sizes: vec![8, 16, 32, 64],
            algorithms: Algorithm::ALL.to_vec(),
            repeats: 3,
            seed: 0,
            max_nodes: 4096,
            max_episodes: 20_000,
            max_seconds: 120.0,
            walk_steps: 100_000,
            learner: LearnerConfig::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub size: usize,
    pub nodes: usize,
    pub algorithm: Algorithm,
    pub repeat: usize,
    /// `None` when the size was skipped.
    pub elapsed: Option<Duration>,
    pub criterion_met: bool,
    pub note: Option<String>,
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("size,nodes,algorithm,repeat,elapsed_s,criterion_met\n");
    for r in rows {
        let (elapsed, met) = match r.elapsed {
            Some(d) => (format!("{:.6}", d.as_secs_f64()), r.criterion_met.to_string()),
            None => ("NA".to_string(), format!("skipped ({})", r.note.as_deref().unwrap_or("budget"))),
        };
        let _ = writeln!(out, "{}x{},{},{},{},{},{}", r.size, r.size, r.nodes, r.algorithm.as_str(), r.repeat, elapsed, met);
    }
    out
}

/// Times every (size, algorithm, repeat) cell. Search algorithms are timed on
/// the probe tour query; learners are timed from network fitting to the
/// first episode after which the greedy policy earns the oracle-optimal
/// reward from the probe config. Cells run concurrently; rows come back
/// sorted by size, algorithm and repeat.
pub fn bench_scaling(cfg: &ScalingConfig, dag: &CausalDag) -> Result<Vec<ScalingRow>, HarnessError> {
    if cfg.sizes.is_empty() || cfg.algorithms.is_empty() || cfg.repeats == 0 {
        return Err(HarnessError::Config("sizes, algorithms and repeats must be non-empty".into()));
    }
    if let Some(&bad) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(HarnessError::Config(format!("grid side {bad} is too small (minimum 2)")));
    }
    cfg.learner.validate()?;
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut algorithms = cfg.algorithms.clone();
    algorithms.sort_unstable();
    algorithms.dedup();

    let mut cells = Vec::new();
    for &size in &sizes {
        for &algorithm in &algorithms {
            for repeat in 0..cfg.repeats {
                cells.push((size, algorithm, repeat));
            }
        }
    }
    let rows = cfg.exec.map(&cells, |&(size, algorithm, repeat)| run_cell(cfg, dag, size, algorithm, repeat));
    rows.into_iter().collect()
}

fn run_cell(cfg: &ScalingConfig, dag: &CausalDag, size: usize, algorithm: Algorithm, repeat: usize) -> Result<ScalingRow, HarnessError> {
    let nodes = size * size;
    let mut row = ScalingRow { size, nodes, algorithm, repeat, elapsed: None, criterion_met: false, note: None };
    if nodes > cfg.max_nodes {
        row.note = Some(format!("{nodes} nodes exceeds budget {}", cfg.max_nodes));
        return Ok(row);
    }
    let env = GridEnv::new(GridConfig::generated(size, size, cfg.seed)?)?;
    let probe = env.reset_seeded(cfg.seed);
    let optimal = grid_optimal_reward(env.config(), &probe)
        .ok_or_else(|| HarnessError::Config(format!("probe config on {size}x{size} has no tour")))?;
    match algorithm {
        Algorithm::Dijkstra | Algorithm::AStar => {
            let adj = GridAdjacency::new(env.config());
            let depots = &env.config().depots;
            let pax = match probe.passenger {
                Passenger::At(p) => p,
                Passenger::InTaxi => unreachable!("reset states wait at a depot"),
            };
            let (start, pickup, dropoff) =
                (adj.node(probe.taxi()), adj.node(depots[pax]), adj.node(depots[probe.destination]));
            let oracle = optimal_tour(&adj, start, pickup, dropoff).distance;
            let t = Instant::now();
            let distance = if algorithm == Algorithm::Dijkstra {
                optimal_tour(&adj, start, pickup, dropoff).distance
            } else {
                a_star(&adj, start, pickup).distance + a_star(&adj, pickup, dropoff).distance
            };
            row.elapsed = Some(t.elapsed());
            row.criterion_met = distance == oracle;
        }
        Algorithm::QCogni | Algorithm::QLearning => {
            let learner = LearnerConfig { seed: cfg.learner.seed + repeat as u64, ..cfg.learner.clone() };
            let t = Instant::now();
            let (met, episodes) = if algorithm == Algorithm::QCogni {
                let bn = fit_network(&env, dag, cfg.walk_steps, cfg.seed)?;
                let mut guide = CausalGuide::new(&env, &bn, GoalSpec::parse(TAXI_GOALS, &bn)?)?;
                train_to_criterion(&env, Some(&mut guide), &learner, &probe, optimal, cfg, t)?
            } else {
                train_to_criterion(&env, None, &learner, &probe, optimal, cfg, t)?
            };
            row.elapsed = Some(t.elapsed());
            row.criterion_met = met;
            if !met {
                row.note = Some(format!("budget exhausted after {episodes} episodes"));
            }
        }
    }
    Ok(row)
}

fn train_to_criterion(
    env: &GridEnv,
    guide: Option<&mut CausalGuide>,
    learner: &LearnerConfig,
    probe: &GridState,
    optimal: f64,
    cfg: &ScalingConfig,
    started: Instant,
) -> Result<(bool, usize), HarnessError> {
    let mut trainer = Trainer::new(env, guide, learner)?;
    while trainer.episodes_run() < cfg.max_episodes && started.elapsed().as_secs_f64() < cfg.max_seconds {
        trainer.run_episode(Some(probe))?;
        let report = evaluate_policy(env, trainer.q_table(), trainer.guide(), std::slice::from_ref(probe), Execution::Sequential)?;
        if report.episodes[0].reward == optimal {
            return Ok((true, trainer.episodes_run()));
        }
    }
    Ok((false, trainer.episodes_run()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteClass {
    Equal,
    Longer,
    Shorter,
    Failed,
    Invalid,
}

impl RouteClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RouteClass::Equal => "equal",
            RouteClass::Longer => "longer",
            RouteClass::Shorter => "shorter",
            RouteClass::Failed => "failed",
            RouteClass::Invalid => "invalid",
        }
    }

    /// Compares a rollout distance with the oracle, treating a relative gap
    /// below 1e-9 as equal.
    pub fn classify(delivered: bool, distance: f64, oracle: f64) -> Self {
        if !delivered {
            RouteClass::Failed
        } else if (distance - oracle).abs() <= 1e-9 * oracle.max(1.0) {
            RouteClass::Equal
        } else if distance > oracle {
            RouteClass::Longer
        } else {
            RouteClass::Shorter
        }
    }
}

/// One algorithm's route for one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub algorithm: &'static str,
    pub distance: f64,
    pub steps: usize,
    pub delivered: bool,
    pub elapsed: Duration,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripComparison {
    pub trip_id: usize,
    pub trip: Trip,
    pub oracle: Option<Route>,
    pub qcogni: Option<Route>,
    pub qcogni_class: RouteClass,
    pub vanilla: Option<Route>,
    pub vanilla_class: Option<RouteClass>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub equal: usize,
    pub longer: usize,
    pub shorter: usize,
    pub failed: usize,
    pub invalid: usize,
}

impl ClassCounts {
    fn add(&mut self, c: RouteClass) {
        match c {
            RouteClass::Equal => self.equal += 1,
            RouteClass::Longer => self.longer += 1,
            RouteClass::Shorter => self.shorter += 1,
            RouteClass::Failed => self.failed += 1,
            RouteClass::Invalid => self.invalid += 1,
        }
    }

    pub fn valid(&self) -> usize {
        self.equal + self.longer + self.shorter + self.failed
    }

    /// Fraction of valid trips in `count`.
    pub fn fraction(&self, count: usize) -> f64 {
        if self.valid() == 0 {
            0.0
        } else {
            count as f64 / self.valid() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteComparison {
    pub trips: Vec<TripComparison>,
    pub qcogni: ClassCounts,
    pub vanilla: Option<ClassCounts>,
}

fn fmt_distance(r: Option<&Route>) -> String {
    r.map_or_else(String::new, |r| if r.delivered { format!("{:.6}", r.distance) } else { String::new() })
}

impl RouteComparison {
    /// Per-trip distances and classes; contains no timings, so reruns are
    /// byte-identical.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("trip_id,pickup,dropoff,dijkstra,qcogni,qcogni_class,vanilla,vanilla_class\n");
        for t in &self.trips {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.trip_id,
                t.trip.pickup,
                t.trip.dropoff,
                fmt_distance(t.oracle.as_ref()),
                fmt_distance(t.qcogni.as_ref()),
                t.qcogni_class.as_str(),
                fmt_distance(t.vanilla.as_ref()),
                t.vanilla_class.map_or("", |c| c.as_str()),
            );
        }
        out
    }

    /// One line per algorithm with class fractions over valid trips.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("algorithm,valid,invalid,equal,longer,shorter,failed\n");
        let mut line = |name: &str, c: &ClassCounts| {
            let _ = writeln!(
                out,
                "{name},{},{},{:.4},{:.4},{:.4},{:.4}",
                c.valid(),
                c.invalid,
                c.fraction(c.equal),
                c.fraction(c.longer),
                c.fraction(c.shorter),
                c.fraction(c.failed)
            );
        };
        line("qcogni", &self.qcogni);
        if let Some(v) = &self.vanilla {
            line("qlearning", v);
        }
        out
    }

    /// Every computed route with its wall time.
    pub fn routes_csv(&self) -> String {
        let mut out = String::from("trip_id,algorithm,distance,steps,elapsed_us,path\n");
        for t in &self.trips {
            for r in [&t.oracle, &t.qcogni, &t.vanilla].into_iter().flatten() {
                let path: Vec<String> = r.path.iter().map(usize::to_string).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    t.trip_id,
                    r.algorithm,
                    fmt_distance(Some(r)),
                    r.steps,
                    r.elapsed.as_micros(),
                    path.join("-")
                );
            }
        }
        out
    }
}

fn rollout_route(
    env: &GraphEnv,
    q: &QTable,
    guide: Option<&CausalGuide>,
    trip: Trip,
    algorithm: &'static str,
) -> Result<Route, HarnessError> {
    let t = Instant::now();
    let start = env.reset_trip(trip, None)?;
    let report = evaluate_policy(env, q, guide, std::slice::from_ref(&start), Execution::Sequential)?;
    let elapsed = t.elapsed();
    let ep = &report.episodes[0];
    let mut path: Vec<usize> = ep.states.iter().map(|s| s.current_node).collect();
    path.dedup();
    Ok(Route { algorithm, distance: ep.distance, steps: path.len() - 1, delivered: ep.success, elapsed, path })
}

/// Greedy rollouts of the trained tables on every trip, each compared with
/// the Dijkstra pickup-to-dropoff distance. Trips naming unknown nodes are
/// marked invalid and skipped.
pub fn compare_routes(
    env: &GraphEnv,
    trips: &[Trip],
    qcogni: &QTable,
    guide: &CausalGuide,
    vanilla: Option<&QTable>,
    exec: Execution,
) -> Result<RouteComparison, HarnessError> {
    let graph: &RoadGraph = env.graph();
    let n = graph.node_count();
    let adj = GraphAdjacency::new(graph);
    let indexed: Vec<(usize, Trip)> = trips.iter().copied().enumerate().collect();
    let rows = exec.map(&indexed, |&(trip_id, trip)| -> Result<TripComparison, HarnessError> {
        let mut row = TripComparison {
            trip_id,
            trip,
            oracle: None,
            qcogni: None,
            qcogni_class: RouteClass::Invalid,
            vanilla: None,
            vanilla_class: vanilla.map(|_| RouteClass::Invalid),
            note: None,
        };
        if trip.pickup >= n || trip.dropoff >= n || trip.pickup == trip.dropoff {
            row.note = Some(format!("trip ({}, {}) is not a valid pair of distinct nodes in 0..{n}", trip.pickup, trip.dropoff));
            return Ok(row);
        }
        let t = Instant::now();
        let best = dijkstra(&adj, trip.pickup, trip.dropoff);
        let elapsed = t.elapsed();
        if !best.reachable() {
            row.note = Some("dropoff unreachable from pickup".into());
            return Ok(row);
        }
        let oracle = best.distance;
        row.oracle = Some(Route {
            algorithm: "dijkstra",
            distance: oracle,
            steps: best.steps(),
            delivered: true,
            elapsed,
            path: best.path,
        });
        let q = rollout_route(env, qcogni, Some(guide), trip, "qcogni")?;
        row.qcogni_class = RouteClass::classify(q.delivered, q.distance, oracle);
        row.qcogni = Some(q);
        if let Some(vq) = vanilla {
            let v = rollout_route(env, vq, None, trip, "qlearning")?;
            row.vanilla_class = Some(RouteClass::classify(v.delivered, v.distance, oracle));
            row.vanilla = Some(v);
        }
        Ok(row)
    });
    let trips: Vec<TripComparison> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut qc = ClassCounts::default();
    let mut vc = vanilla.map(|_| ClassCounts::default());
    for t in &trips {
        if let Some(note) = &t.note {
            log::warn!("trip {}: {note}", t.trip_id);
        }
        qc.add(t.qcogni_class);
        if let (Some(c), Some(class)) = (vc.as_mut(), t.vanilla_class) {
            c.add(class);
        }
    }
    Ok(RouteComparison { trips, qcogni: qc, vanilla: vc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::graph::random_trips;
    use crate::learner::{qcogni_learn, vanilla_q_learn};
    use crate::sampler::Role;
    use crate::structure::{DagEdge, DagNode};

    fn hand_dag(schema: &FeatureSchema) -> CausalDag {
        let nodes = schema.columns.iter().map(|c| DagNode { name: c.name.clone(), role: c.role }).collect();
        let e = |a: &str, b: &str| DagEdge { from: a.into(), to: b.into(), weight: 1.0 };
        CausalDag::from_edges(
            nodes,
            vec![
                e("taxi_on_pax_loc", "pax_in_taxi_next"),
                e("action_pickup", "pax_in_taxi_next"),
                e("pax_in_taxi", "pax_in_taxi_next"),
                e("taxi_on_dest", "dropoff_next"),
                e("pax_in_taxi", "dropoff_next"),
                e("action_dropoff", "dropoff_next"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn classification_rule() {
        assert_eq!(RouteClass::classify(true, 10.0, 10.0 + 1e-12), RouteClass::Equal);
        assert_eq!(RouteClass::classify(true, 11.0, 10.0), RouteClass::Longer);
        assert_eq!(RouteClass::classify(true, 9.0, 10.0), RouteClass::Shorter);
        assert_eq!(RouteClass::classify(false, 10.0, 10.0), RouteClass::Failed);
    }

    #[test]
    fn algorithms_parse() {
        assert_eq!("AStar".parse::<Algorithm>().unwrap(), Algorithm::AStar);
        assert!("bfs".parse::<Algorithm>().is_err());
    }

    #[test]
    fn oversized_grids_are_skipped() {
        let env = GridEnv::new(GridConfig::generated(8, 8, 0).unwrap()).unwrap();
        let dag = hand_dag(&FeatureSchema::for_env(&env, Tier::Core, false).unwrap());
        let cfg = ScalingConfig {
            sizes: vec![16, 8, FULL_SWEEP.1],
            algorithms: vec![Algorithm::AStar, Algorithm::Dijkstra],
            repeats: 2,
            max_nodes: 256,
            ..ScalingConfig::default()
        };
        let rows = bench_scaling(&cfg, &dag).unwrap();
        let keys: Vec<(usize, Algorithm, usize)> = rows.iter().map(|r| (r.size, r.algorithm, r.repeat)).collect();
        assert_eq!(keys.len(), 12);
        assert_eq!(keys[0], (8, Algorithm::Dijkstra, 0));
        assert_eq!(keys[11], (512, Algorithm::AStar, 1));
        assert!(rows[..8].iter().all(|r| r.criterion_met && r.elapsed.is_some()));
        assert!(rows[8..].iter().all(|r| r.elapsed.is_none()));
        let csv = scaling_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().starts_with("8x8,64,dijkstra,0,"));
        assert!(csv.lines().last().unwrap().starts_with("512x512,262144,astar,1,NA,skipped"));
    }

    #[test]
    fn learners_reach_the_probe_optimum_on_a_small_grid() {
        let env = GridEnv::new(GridConfig::generated(4, 4, 3).unwrap()).unwrap();
        let dag = hand_dag(&FeatureSchema::for_env(&env, Tier::Core, false).unwrap());
        let cfg = ScalingConfig {
            sizes: vec![4],
            algorithms: vec![Algorithm::QCogni, Algorithm::QLearning],
            repeats: 1,
            seed: 3,
            walk_steps: 20_000,
            ..ScalingConfig::default()
        };
        let rows = bench_scaling(&cfg, &dag).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.criterion_met), "{rows:?}");
    }

    #[test]
    fn route_comparison_partitions_trips() {
        let graph = RoadGraph::synthetic(16, 5).unwrap();
        let env = GraphEnv::with_defaults(graph);
        let schema = FeatureSchema::for_env(&env, Tier::Core, false).unwrap();
        assert!(schema.columns.iter().any(|c| c.role == Role::Action && c.name == "action_move"));
        let bn = fit_network(&env, &hand_dag(&schema), 50_000, 1).unwrap();
        let mut guide = CausalGuide::new(&env, &bn, GoalSpec::parse(TAXI_GOALS, &bn).unwrap()).unwrap();
        let cfg = LearnerConfig { episodes: 3000, ..graph_learner_config() };
        let (q, _) = qcogni_learn(&env, &mut guide, &cfg).unwrap();
        let (vq, _) = vanilla_q_learn(&env, &cfg).unwrap();
        let mut trips = random_trips(16, 20, 2);
        trips.push(Trip { pickup: 3, dropoff: 99 });
        let cmp = compare_routes(&env, &trips, &q, &guide, Some(&vq), Execution::Parallel).unwrap();
        assert_eq!(cmp.trips.len(), 21);
        assert_eq!(cmp.qcogni.invalid, 1);
        assert_eq!(cmp.qcogni.valid(), 20);
        assert_eq!(cmp.qcogni.shorter, 0);
        let c = cmp.qcogni;
        let total = c.fraction(c.equal) + c.fraction(c.longer) + c.fraction(c.shorter) + c.fraction(c.failed);
        assert!((total - 1.0).abs() < 1e-12);
        for t in cmp.trips.iter().filter(|t| t.qcogni_class == RouteClass::Equal) {
            assert_eq!(t.qcogni.as_ref().unwrap().path.first(), Some(&t.trip.pickup));
            assert_eq!(t.qcogni.as_ref().unwrap().path.last(), Some(&t.trip.dropoff));
        }
        let again = compare_routes(&env, &trips, &q, &guide, Some(&vq), Execution::Sequential).unwrap();
        assert_eq!(again.comparison_csv(), cmp.comparison_csv());
        assert_eq!(again.summary_csv(), cmp.summary_csv());
        assert!(cmp.routes_csv().lines().count() > 40);
    }
}
