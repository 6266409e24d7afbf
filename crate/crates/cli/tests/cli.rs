use std::path::Path;
use std::process::{Command, Output};

fn causalq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalq"))
        .args(args)
        .current_dir(dir)
        .env_remove("CAUSALQ_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = causalq(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// sample, discover, fit, train, eval and trace on a short taxi walk.
fn pipeline(dir: &Path) {
    ok(dir, &["sample", "--env", "taxi5", "--steps", "20000", "--seed", "7", "--out", "walk.csv"]);
    ok(dir, &["discover", "--data", "walk.csv", "--preset", "taxi", "--out", "dag.json"]);
    ok(dir, &["fit", "--dag", "dag.json", "--data", "walk.csv", "--out", "bn.json"]);
    ok(dir, &["train", "--env", "taxi5", "--bn", "bn.json", "--episodes", "200", "--seed", "3", "--out", "q.csv"]);
    ok(dir, &["eval", "--env", "taxi5", "--bn", "bn.json", "--qtable", "q.csv", "--configs", "20", "--out", "eval.csv"]);
    ok(dir, &["trace", "--env", "taxi5", "--bn", "bn.json", "--qtable", "q.csv", "--out", "trace.jsonl"]);
}

const PRIMARY: [&str; 9] =
    ["walk.csv", "walk.csv.meta.json", "dag.json", "dag.dot", "bn.json", "q.csv", "q.curve.csv", "eval.csv", "trace.jsonl"];

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for name in PRIMARY {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert_eq!(read(a.path(), "walk.csv").iter().filter(|&&c| c == b'\n').count(), 20_001);
}

#[test]
fn manifests_record_parameters_and_input_hashes() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let m: serde_json::Value = serde_json::from_slice(&read(dir.path(), "q.csv.manifest.json")).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["args"]["learner"]["episodes"], 200);
    assert_eq!(m["args"]["learner"]["seed"], 3);
    let input = &m["inputs"][0];
    assert_eq!(input["path"], "bn.json");
    assert_eq!(input["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][1], "q.curve.csv");
}

#[test]
fn zero_steps_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = causalq(dir.path(), &["sample", "--steps", "0", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn unknown_environment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = causalq(dir.path(), &["sample", "--env", "maze9", "--steps", "5", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_qtable_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = causalq(dir.path(), &["eval", "--env", "taxi5", "--qtable", "absent.csv", "--out", "eval.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn schema_mismatch_names_the_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--env", "taxi5", "--steps", "2000", "--out", "grid.csv"]);
    ok(d, &["discover", "--data", "grid.csv", "--preset", "taxi", "--out", "dag.json"]);
    ok(d, &["sample", "--env", "graph16", "--steps", "2000", "--out", "graph.csv"]);
    let out = causalq(d, &["fit", "--dag", "dag.json", "--data", "graph.csv", "--out", "bn.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("action_north"));
    ok(d, &["fit", "--dag", "dag.json", "--data", "graph.csv", "--transfer", "--out", "bn.json"]);
    let out = causalq(d, &["train", "--env", "taxi5", "--bn", "bn.json", "--episodes", "5", "--out", "q.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--steps", "2000", "--out", "walk.csv"]);
    let out = causalq(d, &["discover", "--data", "walk.csv", "--preset", "taxi", "--max-outer-iterations", "1", "--out", "dag.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("dag.json").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# sampling\nsteps = 5\nseed = 4\nout = from_file.csv\n").unwrap();
    ok(d, &["sample", "--config", "run.cfg", "--steps", "7"]);
    let text = String::from_utf8(read(d, "from_file.csv")).unwrap();
    assert_eq!(text.lines().count(), 8);
    let m: serde_json::Value = serde_json::from_slice(&read(d, "from_file.csv.manifest.json")).unwrap();
    assert_eq!(m["args"]["seed"], 4);
    std::fs::write(d.join("bad.cfg"), "steps = 5\nwarp = 2\n").unwrap();
    assert_eq!(causalq(d, &["sample", "--config", "bad.cfg", "--out", "x.csv"]).status.code(), Some(1));
}

#[test]
fn output_root_variable_places_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_causalq"))
        .args(["sample", "--steps", "3", "--out", "nested/walk.csv"])
        .current_dir(dir.path())
        .env("CAUSALQ_OUTPUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("root/nested/walk.csv").is_file());
    assert!(!dir.path().join("nested").exists());
}

#[test]
fn graph_route_comparison_and_scaling_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["sample", "--env", "taxi5", "--steps", "100000", "--seed", "7", "--out", "grid.csv"]);
    ok(d, &["discover", "--data", "grid.csv", "--preset", "taxi", "--out", "dag.json"]);
    ok(d, &["sample", "--env", "graph16", "--env-seed", "2", "--steps", "50000", "--out", "graph.csv"]);
    ok(d, &["fit", "--dag", "dag.json", "--data", "graph.csv", "--transfer", "--out", "bn.json"]);
    let train = ["train", "--env", "graph16", "--env-seed", "2", "--learner-preset", "graph", "--episodes", "5000"];
    ok(d, &[&train[..], &["--bn", "bn.json", "--out", "q.csv"]].concat());
    ok(d, &[&train[..], &["--algorithm", "qlearning", "--out", "v.csv"]].concat());
    std::fs::write(d.join("trips.csv"), "pickup,dropoff\n0,15\n3,9\n4,99\n").unwrap();
    let compare = [
        "route-compare", "--env", "graph16", "--env-seed", "2", "--bn", "bn.json", "--qtable", "q.csv",
        "--vanilla-qtable", "v.csv", "--trips", "trips.csv", "--out", "cmp.csv",
    ];
    ok(d, &compare);
    let first = read(d, "cmp.csv");
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().last().unwrap().contains("invalid"));
    let summary = String::from_utf8(read(d, "cmp_summary.csv")).unwrap();
    assert!(summary.starts_with("algorithm,valid,invalid,equal,longer,shorter,failed\nqcogni,2,1,"));
    assert!(String::from_utf8(read(d, "cmp_routes.csv")).unwrap().starts_with("trip_id,algorithm,distance,steps,elapsed_us,path\n"));
    ok(d, &compare);
    assert_eq!(read(d, "cmp.csv"), first);

    let bench = [
        "bench-scaling", "--sizes", "4,6", "--algorithms", "dijkstra,astar,qlearning", "--repeats", "1",
        "--max-nodes", "20", "--dag", "dag.json", "--out", "scaling.csv",
    ];
    ok(d, &bench);
    let csv = String::from_utf8(read(d, "scaling.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "size,nodes,algorithm,repeat,elapsed_s,criterion_met");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("4x4,16,qlearning,0,"));
    assert!(rows[6].starts_with("6x6,36,astar,0,NA,skipped"));
}
