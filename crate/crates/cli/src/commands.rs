use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use causalq::bayesnet::{fit_cpds, DiscreteBayesNet, FitParams};
use causalq::causal_infer::GoalSpec;
use causalq::env::graph::{parse_trips, random_trips};
use causalq::env::{Environment, GraphEnv, Trip};
use causalq::harness::{
    bench_scaling, compare_routes, graph_learner_config, scaling_csv, taxi_structure_params, Algorithm, RouteClass,
    ScalingConfig,
};
use causalq::learner::{
    evaluate_policy, qcogni_learn, trace_episode, trace_to_jsonl, vanilla_q_learn, CausalGuide, GoalAdvance,
    LearnerConfig, QTable, RewardScaling,
};
use causalq::sampler::{random_walk, Dataset, DatasetMeta, FeatureSchema, Tier};
use causalq::shortest_path::{dijkstra, grid_optimal_reward, grid_tour, GraphAdjacency};
use causalq::structure::{discover_structure, CausalDag, StructureParams, TabuSpec};
use causalq::Execution;

use crate::args::*;
use crate::io::{build_env, output_path, sibling, stem_sibling, with_env, AnyEnv, Inputs, Outputs};
use crate::UsageError;

fn meta_path(data: &Path) -> std::path::PathBuf {
    sibling(data, ".meta.json")
}

fn load_dataset(path: &Path, inputs: &mut Inputs) -> Result<Dataset> {
    let meta_file = meta_path(path);
    inputs.require(path)?;
    inputs.require(&meta_file).context("dataset metadata sidecar is missing")?;
    let meta: DatasetMeta = serde_json::from_str(&inputs.read(&meta_file)?)
        .with_context(|| format!("malformed dataset metadata {}", meta_file.display()))?;
    Ok(Dataset::from_csv(&inputs.read(path)?, &meta)?)
}

fn load_bn(args: &GuideArgs, inputs: &mut Inputs) -> Result<Option<DiscreteBayesNet>> {
    match &args.bn {
        Some(path) => {
            inputs.require(path)?;
            Ok(Some(DiscreteBayesNet::from_json(&inputs.read(path)?)?))
        }
        None => Ok(None),
    }
}

fn make_guide<'a, E: Environment>(env: &E, bn: Option<&'a DiscreteBayesNet>, goals: &str) -> Result<Option<CausalGuide<'a>>> {
    match bn {
        Some(bn) => Ok(Some(CausalGuide::new(env, bn, GoalSpec::parse(goals, bn)?)?)),
        None => Ok(None),
    }
}

fn load_qtable<E: Environment>(env: &E, path: &Path, inputs: &mut Inputs) -> Result<QTable> {
    inputs.require(path)?;
    let q = QTable::from_csv(&inputs.read(path)?)?;
    if q.env_id != env.id() || q.num_actions != env.num_actions() {
        bail!(
            "Q-table {} was trained on `{}` with {} actions, but the environment is `{}` with {} actions",
            path.display(),
            q.env_id,
            q.num_actions,
            env.id(),
            env.num_actions()
        );
    }
    Ok(q)
}

fn learner_config(args: &LearnerArgs) -> LearnerConfig {
    let mut cfg = match args.learner_preset {
        LearnerPreset::Default => LearnerConfig::default(),
        LearnerPreset::Graph => graph_learner_config(),
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    set(&mut cfg.learning_rate, args.learning_rate);
    set(&mut cfg.discount, args.discount);
    set(&mut cfg.epsilon, args.epsilon);
    set(&mut cfg.epsilon_min, args.epsilon_min);
    set(&mut cfg.epsilon_decay, args.epsilon_decay);
    set(&mut cfg.infer_threshold, args.infer_threshold);
    if let Some(g) = args.goal_advance {
        cfg.goal_advance = match g {
            GoalAdvanceArg::Literal => GoalAdvance::Literal,
            GoalAdvanceArg::Confirmed => GoalAdvance::Confirmed,
        };
    }
    if let Some(s) = args.reward_scaling {
        cfg.reward_scaling = match s {
            ScalingArg::EveryStep => RewardScaling::EveryStep,
            ScalingArg::InferBranch => RewardScaling::InferBranch,
        };
    }
    cfg.seed = args.seed;
    cfg
}

fn graph_trips(env: &GraphEnv, file: Option<&Path>, count: usize, seed: u64, inputs: &mut Inputs) -> Result<Vec<Trip>> {
    match file {
        Some(path) => {
            inputs.require(path)?;
            Ok(parse_trips(&inputs.read(path)?)?)
        }
        None => Ok(random_trips(env.graph().node_count(), count, seed)),
    }
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let env = build_env(&args.env, &mut inputs)?;
    let tier = match args.tier {
        TierArg::Core => Tier::Core,
        TierArg::Positional => Tier::Positional,
    };
    let data = with_env!(&env, e => {
        let schema = FeatureSchema::for_env(e, tier, args.reward_node)?;
        random_walk(e, &schema, args.steps as usize, args.seed)?
    });
    let out = output_path(&args.out);
    let mut outputs = Outputs::new();
    outputs.add(out.clone(), data.to_csv());
    outputs.add(meta_path(&out), serde_json::to_string_pretty(&data.meta())? + "\n");
    outputs.commit("sample", args, &inputs)
}

pub fn discover(args: &DiscoverArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let data = load_dataset(&args.data, &mut inputs)?;
    let tabu = match &args.tabu {
        Some(path) => {
            inputs.require(path)?;
            serde_json::from_str(&inputs.read(path)?).context("malformed tabu specification")?
        }
        None => match args.tabu_preset {
            TabuPreset::Transition => TabuSpec::transition_roles(),
            TabuPreset::None => TabuSpec::default(),
        },
    };
    let mut params = match args.preset {
        StructurePreset::Default => StructureParams::default(),
        StructurePreset::Taxi => taxi_structure_params(),
    };
    if let Some(v) = args.l1_penalty {
        params.l1_penalty = v;
    }
    if let Some(v) = args.threshold {
        params.threshold = v;
    }
    if let Some(v) = args.max_outer_iterations {
        params.max_outer_iterations = v;
    }
    if let Some(v) = args.h_tolerance {
        params.h_tolerance = v;
    }
    let dag = discover_structure(&data, &tabu, &params)?;
    for e in &dag.edges {
        log::info!("{} -> {} ({:.4})", e.from, e.to, e.weight);
    }
    let out = output_path(&args.out);
    let mut outputs = Outputs::new();
    outputs.add(out.clone(), dag.to_json() + "\n");
    outputs.add(out.with_extension("dot"), dag.to_dot());
    outputs.commit("discover", args, &inputs)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    inputs.require(&args.dag)?;
    let mut dag = CausalDag::from_json(&inputs.read(&args.dag)?)?;
    let data = load_dataset(&args.data, &mut inputs)?;
    if args.transfer {
        dag = dag.transfer_to(&data.schema)?;
    } else if dag.names() != data.schema.names() {
        let missing: Vec<String> = dag.names().into_iter().filter(|n| data.schema.index_of(n).is_none()).collect();
        bail!(
            "DAG and dataset schemas differ (DAG nodes missing from the data: {missing:?}); pass --transfer to re-express the DAG"
        );
    }
    let bn = fit_cpds(&dag, &data, &FitParams { smoothing: args.smoothing, max_cardinality: args.max_cardinality })?;
    let mut outputs = Outputs::new();
    outputs.add(output_path(&args.out), bn.to_json() + "\n");
    outputs.commit("fit", args, &inputs)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let env = build_env(&args.env, &mut inputs)?;
    let bn = match args.algorithm {
        AlgorithmArg::Qcogni => Some(load_bn(&args.guide, &mut inputs)?.ok_or_else(|| UsageError("qcogni training needs --bn".into()))?),
        AlgorithmArg::Qlearning => None,
    };
    let cfg = learner_config(&args.learner);
    let (q, curve) = with_env!(&env, e => match make_guide(e, bn.as_ref(), &args.guide.goals)? {
        Some(mut guide) => qcogni_learn(e, &mut guide, &cfg)?,
        None => vanilla_q_learn(e, &cfg)?,
    });
    let tail = cfg.episodes.saturating_sub(100);
    println!(
        "trained {} episodes; mean reward over the last {} episodes {:.2}",
        cfg.episodes,
        cfg.episodes - tail,
        curve.mean_reward(tail + 1, cfg.episodes)
    );
    let out = output_path(&args.out);
    let curve_path = args.curve.as_deref().map(output_path).unwrap_or_else(|| stem_sibling(&out, ".curve.csv"));
    let mut outputs = Outputs::new();
    outputs.add(out, q.to_csv());
    outputs.add(curve_path, curve.to_csv());
    outputs.commit("train", args, &inputs)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let env = build_env(&args.env, &mut inputs)?;
    let bn = load_bn(&args.guide, &mut inputs)?;
    let mut csv = String::from("config,reward,steps,distance,success,oracle_reward,oracle_distance,optimal\n");
    let (mut optimal, mut success, total);
    match &env {
        AnyEnv::Grid(e) => {
            let q = load_qtable(e, &args.qtable, &mut inputs)?;
            let guide = make_guide(e, bn.as_ref(), &args.guide.goals)?;
            let starts: Vec<_> = (0..args.configs as u64).map(|i| e.reset_seeded(args.seed + i)).collect();
            let report = evaluate_policy(e, &q, guide.as_ref(), &starts, Execution::default())?;
            (optimal, success, total) = (0, 0, starts.len());
            for (i, (s, ep)) in starts.iter().zip(&report.episodes).enumerate() {
                let best = grid_optimal_reward(e.config(), s).context("start config has no tour")?;
                let tour = grid_tour(e.config(), s).context("start config has no tour")?;
                let hit = ep.reward == best;
                optimal += hit as usize;
                success += ep.success as usize;
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{},{},{}",
                    ep.reward, ep.steps, ep.distance, ep.success, best, tour.distance, hit
                );
            }
        }
        AnyEnv::Graph(e) => {
            let q = load_qtable(e, &args.qtable, &mut inputs)?;
            let guide = make_guide(e, bn.as_ref(), &args.guide.goals)?;
            let trips = graph_trips(e, args.trips.as_deref(), args.configs, args.seed, &mut inputs)?;
            let starts = trips.iter().map(|t| e.reset_trip(*t, None)).collect::<Result<Vec<_>, _>>()?;
            let report = evaluate_policy(e, &q, guide.as_ref(), &starts, Execution::default())?;
            let adj = GraphAdjacency::new(e.graph());
            (optimal, success, total) = (0, 0, starts.len());
            for (i, (t, ep)) in trips.iter().zip(&report.episodes).enumerate() {
                let best = dijkstra(&adj, t.pickup, t.dropoff).distance;
                let hit = RouteClass::classify(ep.success, ep.distance, best) == RouteClass::Equal;
                optimal += hit as usize;
                success += ep.success as usize;
                let _ = writeln!(
                    csv,
                    "{i},{},{},{:.6},{},,{:.6},{}",
                    ep.reward, ep.steps, ep.distance, ep.success, best, hit
                );
            }
        }
    }
    println!("optimal {optimal}/{total}, delivered {success}/{total}");
    let mut outputs = Outputs::new();
    outputs.add(output_path(&args.out), csv);
    outputs.commit("eval", args, &inputs)
}

pub fn trace(args: &TraceArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let env = build_env(&args.env, &mut inputs)?;
    let bn = load_bn(&args.guide, &mut inputs)?;
    let records = match &env {
        AnyEnv::Grid(e) => {
            let q = load_qtable(e, &args.qtable, &mut inputs)?;
            let mut guide = make_guide(e, bn.as_ref(), &args.guide.goals)?;
            trace_episode(e, &q, guide.as_mut(), &e.reset_seeded(args.seed))?
        }
        AnyEnv::Graph(e) => {
            let q = load_qtable(e, &args.qtable, &mut inputs)?;
            let mut guide = make_guide(e, bn.as_ref(), &args.guide.goals)?;
            let trip = random_trips(e.graph().node_count(), 1, args.seed)[0];
            trace_episode(e, &q, guide.as_mut(), &e.reset_trip(trip, None)?)?
        }
    };
    let mut outputs = Outputs::new();
    outputs.add(output_path(&args.out), trace_to_jsonl(&records));
    outputs.commit("trace", args, &inputs)
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let algorithms = args
        .algorithms
        .iter()
        .map(|a| a.parse::<Algorithm>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| UsageError(e.to_string()))?;
    if let Some(&bad) = args.sizes.iter().find(|&&n| n < 2) {
        return Err(UsageError(format!("grid side {bad} is too small (minimum 2)")).into());
    }
    let dag = match &args.dag {
        Some(path) => {
            inputs.require(path)?;
            CausalDag::from_json(&inputs.read(path)?)?
        }
        None => {
            log::info!("discovering the taxi structure for the guided learner");
            let env = causalq::env::GridEnv::taxi_v3();
            let schema = FeatureSchema::for_env(&env, Tier::Core, false)?;
            let data = random_walk(&env, &schema, 500_000, 7)?;
            discover_structure(&data, &TabuSpec::transition_roles(), &taxi_structure_params())?
        }
    };
    let cfg = ScalingConfig {
        sizes: args.sizes.clone(),
        algorithms,
        repeats: args.repeats as usize,
        seed: args.seed,
        max_nodes: args.max_nodes,
        max_episodes: args.max_episodes,
        max_seconds: args.max_seconds,
        walk_steps: args.walk_steps,
        exec: if args.sequential { Execution::Sequential } else { Execution::default() },
        ..ScalingConfig::default()
    };
    let rows = bench_scaling(&cfg, &dag)?;
    for r in rows.iter().filter(|r| r.note.is_some()) {
        log::warn!("{}x{} {} repeat {}: {}", r.size, r.size, r.algorithm.as_str(), r.repeat, r.note.as_deref().unwrap_or(""));
    }
    let mut outputs = Outputs::new();
    outputs.add(output_path(&args.out), scaling_csv(&rows));
    outputs.commit("bench-scaling", args, &inputs)
}

pub fn route_compare(args: &RouteArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let AnyEnv::Graph(env) = build_env(&args.env, &mut inputs)? else {
        return Err(UsageError("route-compare needs a graph environment (graphN or graph:PATH)".into()).into());
    };
    let bn = load_bn(&args.guide, &mut inputs)?.ok_or_else(|| UsageError("route-compare needs --bn".into()))?;
    let q = load_qtable(&env, &args.qtable, &mut inputs)?;
    let vanilla = match &args.vanilla_qtable {
        Some(path) => Some(load_qtable(&env, path, &mut inputs)?),
        None => None,
    };
    let guide = CausalGuide::new(&env, &bn, GoalSpec::parse(&args.guide.goals, &bn)?)?;
    let trips = graph_trips(&env, args.trips.as_deref(), args.trip_count, args.trip_seed, &mut inputs)?;
    let cmp = compare_routes(&env, &trips, &q, &guide, vanilla.as_ref(), Execution::default())?;
    print!("{}", cmp.summary_csv());
    let out = output_path(&args.out);
    let mut outputs = Outputs::new();
    outputs.add(out.clone(), cmp.comparison_csv());
    outputs.add(stem_sibling(&out, "_summary.csv"), cmp.summary_csv());
    outputs.add(stem_sibling(&out, "_routes.csv"), cmp.routes_csv());
    outputs.commit("route-compare", args, &inputs)
}
