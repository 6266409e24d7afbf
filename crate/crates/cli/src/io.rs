//! Environment specs, input hashing, output placement and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use causalq::env::{GraphEnv, GridConfig, GridEnv, RoadGraph};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::EnvArgs;
use crate::UsageError;

/// Relative output paths are placed under this directory when it is set.
pub const OUTPUT_ROOT_VAR: &str = "CAUSALQ_OUTPUT_ROOT";

pub enum AnyEnv {
    Grid(GridEnv),
    Graph(GraphEnv),
}

/// Runs `$body` with `$e` bound to the concrete environment.
macro_rules! with_env {
    ($env:expr, $e:ident => $body:expr) => {
        match $env {
            $crate::io::AnyEnv::Grid($e) => $body,
            $crate::io::AnyEnv::Graph($e) => $body,
        }
    };
}
pub(crate) use with_env;

/// Builds the environment named by `--env`, recording any file it reads.
pub fn build_env(args: &EnvArgs, inputs: &mut Inputs) -> Result<AnyEnv> {
    let spec = args.env.trim();
    let mut env = if spec == "taxi5" {
        AnyEnv::Grid(GridEnv::taxi_v3())
    } else if let Some(path) = spec.strip_prefix("map:") {
        let text = inputs.read(Path::new(path))?;
        AnyEnv::Grid(GridEnv::new(GridConfig::parse_map(&text)?)?)
    } else if let Some(path) = spec.strip_prefix("graph:") {
        let text = inputs.read(Path::new(path))?;
        AnyEnv::Graph(GraphEnv::with_defaults(RoadGraph::parse(&text)?))
    } else if let Some(dims) = spec.strip_prefix("grid") {
        let (r, c) = dims
            .split_once('x')
            .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
            .ok_or_else(|| UsageError(format!("bad grid spec `{spec}` (expected gridRxC, e.g. grid8x8)")))?;
        AnyEnv::Grid(GridEnv::new(GridConfig::generated(r, c, args.env_seed)?)?)
    } else if let Some(n) = spec.strip_prefix("graph") {
        let n: usize = n.parse().map_err(|_| UsageError(format!("bad graph spec `{spec}` (expected graphN, e.g. graph64)")))?;
        AnyEnv::Graph(GraphEnv::with_defaults(RoadGraph::synthetic(n, args.env_seed)?))
    } else {
        return Err(UsageError(format!("unknown environment `{spec}` (taxi5, gridRxC, map:PATH, graphN, graph:PATH)")).into());
    };
    if let Some(max) = args.max_steps {
        env = match env {
            AnyEnv::Grid(g) => {
                let mut cfg = g.config().clone();
                cfg.max_steps_per_episode = max;
                AnyEnv::Grid(GridEnv::new(cfg)?)
            }
            AnyEnv::Graph(g) => {
                let mut cfg = *g.config();
                cfg.max_steps_per_episode = max;
                AnyEnv::Graph(GraphEnv::new(g.graph().clone(), cfg)?)
            }
        };
    }
    Ok(env)
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Files read by a run, with content hashes for the manifest.
#[derive(Debug, Default, Serialize)]
pub struct Inputs {
    pub files: Vec<InputFile>,
}

impl Inputs {
    /// Fails with a data error when the file is missing.
    pub fn require(&self, path: &Path) -> Result<()> {
        if !path.is_file() {
            bail!("input file {} does not exist", path.display());
        }
        Ok(())
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.files.push(InputFile { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8 text", path.display()))
    }
}

/// Resolves an output path against the output root.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// `path` with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// `path` with its extension replaced by `suffix`, e.g. `run.csv` to `run_routes.csv`.
pub fn stem_sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Collects outputs in memory and writes them, plus a manifest, only once
/// the whole command has succeeded.
pub struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    pub fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    pub fn add(&mut self, path: PathBuf, contents: String) {
        self.files.push((path, contents));
    }

    /// Writes every file and `<primary>.manifest.json`.
    pub fn commit<A: Serialize>(self, command: &str, args: &A, inputs: &Inputs) -> Result<()> {
        let primary = self.files.first().map(|(p, _)| p.clone()).context("command produced no output")?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            args,
            inputs: &inputs.files,
            outputs: self.files.iter().map(|(p, _)| p.display().to_string()).collect(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let manifest = serde_json::to_string_pretty(&manifest)? + "\n";
        for (path, contents) in self.files.iter().chain([&(sibling(&primary, ".manifest.json"), manifest)]) {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a A,
    inputs: &'a [InputFile],
    outputs: Vec<String>,
    created_unix_s: u64,
}
