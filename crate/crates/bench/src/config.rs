//! Run configuration in a flat `key = value` format.
//!
//! ```text
//! # comments run to the end of the line
//! cycle.lambda = 0.2
//! editors = sdedit, flowcycle
//! seeds = 0, 1
//! ```
//!
//! Keys absent from a file keep their defaults. [`RunConfig::canonical`]
//! writes every key in a fixed order and is what the config hash covers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flowcycle::editors::{CycleConfig, EditTask};
use flowcycle::flowmodel::{Condition, NetConfig, TrainConfig};
use flowcycle::sampler::make_time_grid;
use flowcycle::worlds::WorldSpec;
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditorKind {
    Sdedit,
    OdeInv,
    FlowEdit,
    FlowCycle,
}

impl EditorKind {
    pub const ALL: [EditorKind; 4] = [
        EditorKind::Sdedit,
        EditorKind::OdeInv,
        EditorKind::FlowEdit,
        EditorKind::FlowCycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EditorKind::Sdedit => "sdedit",
            EditorKind::OdeInv => "ode_inv",
            EditorKind::FlowEdit => "flowedit",
            EditorKind::FlowCycle => "flowcycle",
        }
    }

    /// Label mixed into per-cell random streams.
    pub fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for EditorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EditorKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        EditorKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| BenchError::config(format!("unknown editor {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub dim: usize,
    pub k_a: usize,
    pub k_b: usize,
    pub sigma: f64,
    pub mean_scale: f64,
    pub dataset_size: usize,
    pub dataset_seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        let w = WorldSpec::default();
        Self {
            dim: w.dim(),
            k_a: w.k_a(),
            k_b: w.k_b(),
            sigma: w.sigma(),
            mean_scale: w.mean_scale(),
            dataset_size: 20_000,
            dataset_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub world: WorldParams,
    pub net_seed: u64,
    /// Trained network to load; `None` trains one from `train`.
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
    /// Optimizer settings and the guidance scales shared by every editor.
    /// The per-cell seed is derived, so `cycle.seed` is ignored.
    pub cycle: CycleConfig,
    pub t_corrupt: f64,
    pub edit_steps: usize,
    pub task_count: usize,
    pub seeds: Vec<u64>,
    pub editors: Vec<EditorKind>,
    pub output_dir: PathBuf,
    /// Fill `runtime_ms`. Wall-clock times differ between runs, so this
    /// gives up byte-identical `metrics.csv`.
    pub record_runtime: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            net_seed: 2,
            checkpoint: None,
            train: TrainConfig::default(),
            cycle: CycleConfig::default(),
            t_corrupt: flowcycle::editors::T_CORRUPT,
            edit_steps: flowcycle::editors::EDIT_STEPS,
            task_count: 20,
            seeds: vec![0],
            editors: EditorKind::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            record_runtime: false,
        }
    }
}

/// Every key in canonical order.
pub const KEYS: &[&str] = &[
    "world.dim",
    "world.k_a",
    "world.k_b",
    "world.sigma",
    "world.mean_scale",
    "world.dataset_size",
    "world.dataset_seed",
    "net.seed",
    "net.checkpoint",
    "train.batch_size",
    "train.steps",
    "train.lr",
    "train.cond_dropout",
    "train.seed",
    "cycle.lambda",
    "cycle.opt_steps",
    "cycle.lr",
    "cycle.src_guidance",
    "cycle.tar_guidance",
    "edit.t_corrupt",
    "edit.steps",
    "task_count",
    "seeds",
    "editors",
    "output_dir",
    "report.runtime",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| BenchError::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(BenchError::config(format!("line {}: expected `key = value`", n + 1)));
            };
            let key = key.trim();
            if seen.contains(&key) {
                return Err(BenchError::config(format!("line {}: duplicate key {key}", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())
                .map_err(|e| BenchError::config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => BenchError::config(format!("config file {} not found", path.display())),
            _ => BenchError::io(path, e),
        })?;
        Self::from_str_config(&text)
    }

    /// Sets one key from its textual value without validating the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "world.dim" => self.world.dim = parse(key, value)?,
            "world.k_a" => self.world.k_a = parse(key, value)?,
            "world.k_b" => self.world.k_b = parse(key, value)?,
            "world.sigma" => self.world.sigma = parse(key, value)?,
            "world.mean_scale" => self.world.mean_scale = parse(key, value)?,
            "world.dataset_size" => self.world.dataset_size = parse(key, value)?,
            "world.dataset_seed" => self.world.dataset_seed = parse(key, value)?,
            "net.seed" => self.net_seed = parse(key, value)?,
            "net.checkpoint" => {
                self.checkpoint = match value {
                    "" | "fresh" => None,
                    p => Some(PathBuf::from(p)),
                }
            }
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.steps" => self.train.train_steps = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.cond_dropout" => self.train.cond_dropout_prob = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "cycle.lambda" => self.cycle.lambda = parse(key, value)?,
            "cycle.opt_steps" => self.cycle.opt_steps = parse(key, value)?,
            "cycle.lr" => self.cycle.lr = parse(key, value)?,
            "cycle.src_guidance" => self.cycle.src_guidance = parse(key, value)?,
            "cycle.tar_guidance" => self.cycle.tar_guidance = parse(key, value)?,
            "edit.t_corrupt" => self.t_corrupt = parse(key, value)?,
            "edit.steps" => self.edit_steps = parse(key, value)?,
            "task_count" => self.task_count = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "editors" => self.editors = parse_list(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "report.runtime" => self.record_runtime = parse(key, value)?,
            _ => return Err(BenchError::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "world.dim" => self.world.dim.to_string(),
            "world.k_a" => self.world.k_a.to_string(),
            "world.k_b" => self.world.k_b.to_string(),
            "world.sigma" => self.world.sigma.to_string(),
            "world.mean_scale" => self.world.mean_scale.to_string(),
            "world.dataset_size" => self.world.dataset_size.to_string(),
            "world.dataset_seed" => self.world.dataset_seed.to_string(),
            "net.seed" => self.net_seed.to_string(),
            "net.checkpoint" => match &self.checkpoint {
                Some(p) => p.display().to_string(),
                None => "fresh".into(),
            },
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.steps" => self.train.train_steps.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.cond_dropout" => self.train.cond_dropout_prob.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "cycle.lambda" => self.cycle.lambda.to_string(),
            "cycle.opt_steps" => self.cycle.opt_steps.to_string(),
            "cycle.lr" => self.cycle.lr.to_string(),
            "cycle.src_guidance" => self.cycle.src_guidance.to_string(),
            "cycle.tar_guidance" => self.cycle.tar_guidance.to_string(),
            "edit.t_corrupt" => self.t_corrupt.to_string(),
            "edit.steps" => self.edit_steps.to_string(),
            "task_count" => self.task_count.to_string(),
            "seeds" => join(&self.seeds),
            "editors" => join(&self.editors),
            "output_dir" => self.output_dir.display().to_string(),
            "report.runtime" => self.record_runtime.to_string(),
            _ => return None,
        })
    }

    /// Every key, one `key = value` line each, in [`KEYS`] order.
    pub fn canonical(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    /// `output_dir` is excluded so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| **k != "output_dir") {
            h.update(format!("{k} = {}\n", self.get(k).expect("known key")));
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Keys whose values differ.
    pub fn diff(&self, other: &RunConfig) -> Vec<&'static str> {
        KEYS.iter().copied().filter(|k| self.get(k) != other.get(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let core = |e: flowcycle::Error| BenchError::config(strip(e.into()));
        self.world_spec()?;
        if self.world.k_a < 2 {
            return Err(BenchError::config("world.k_a must be at least 2 to have an edit"));
        }
        if self.world.dataset_size < self.train.batch_size {
            return Err(BenchError::config(format!(
                "world.dataset_size {} is smaller than train.batch_size {}",
                self.world.dataset_size, self.train.batch_size
            )));
        }
        self.train.validate().map_err(core)?;
        self.cycle.validate().map_err(core)?;
        make_time_grid(self.edit_steps, self.t_corrupt).map_err(core)?;
        if self.task_count == 0 {
            return Err(BenchError::config("task_count must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::config("seeds must not be empty"));
        }
        if has_duplicates(&self.seeds) {
            return Err(BenchError::config("seeds must be distinct"));
        }
        if self.editors.is_empty() {
            return Err(BenchError::config("editors must not be empty"));
        }
        if has_duplicates(&self.editors) {
            return Err(BenchError::config("editors must be distinct"));
        }
        Ok(())
    }

    pub fn world_spec(&self) -> Result<WorldSpec> {
        let w = &self.world;
        WorldSpec::new(w.dim, w.k_a, w.k_b, w.sigma, w.mean_scale).map_err(|e| BenchError::config(strip(e.into())))
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig::new(self.world.dim, self.world.k_a, self.world.k_b)
    }

    /// An edit task at this config's corruption time, steps and guidance.
    pub fn task(&self, x0: Vec<f64>, c_src: Condition, c_tar: Condition) -> Result<EditTask> {
        let grid = make_time_grid(self.edit_steps, self.t_corrupt)?;
        Ok(EditTask::with_grid(x0, c_src, c_tar, grid)?
            .with_guidance(self.cycle.src_guidance, self.cycle.tar_guidance)?)
    }

    /// The cycle settings for one cell.
    pub fn cycle_for(&self, seed: u64) -> CycleConfig {
        CycleConfig {
            seed,
            ..self.cycle.clone()
        }
    }
}

fn has_duplicates<T: Ord + Clone>(xs: &[T]) -> bool {
    let mut v = xs.to_vec();
    v.sort();
    v.windows(2).any(|w| w[0] == w[1])
}

/// Message without the variant prefix, for nesting inside another error.
pub(crate) fn strip(e: BenchError) -> String {
    match e {
        BenchError::Config(m) => m,
        BenchError::Core(flowcycle::Error::InvalidArgument(m)) => m,
        other => other.to_string(),
    }
}
