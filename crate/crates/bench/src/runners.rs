//! Experiment runners. Each takes a validated [`RunConfig`] and a trained
//! network, and runs its (task, editor) cells in parallel with per-cell
//! random streams.

use std::path::Path;
use std::time::Instant;

use flowcycle::diffcore::{derive_seed, RngStream};
use flowcycle::editors::{
    flowcycle_edit, flowcycle_optimize, flowedit_edit, ode_inversion_edit, sdedit_edit, CycleLosses, EditTask,
};
use flowcycle::flowmodel::{load_checkpoint, train, Condition, VelocityNet};
use flowcycle::sampler::{euler_denoise, interpolate, GuidanceSpec};
use flowcycle::worlds::WorldSpec;
use rayon::prelude::*;

use crate::config::{EditorKind, RunConfig};
use crate::error::{BenchError, Result};
use crate::report::{ProbeReport, ProbeRow, ReportRow, RunReport};

// Stream labels. Editors use their own ids 0..4.
const TASK: u64 = 100;
const MATCH: u64 = 101;
const MISMATCH: u64 = 102;
const RANDOM: u64 = 103;

/// Trains a network on a freshly sampled dataset; returns it with the loss history.
pub fn train_net(cfg: &RunConfig) -> Result<(VelocityNet, Vec<f64>)> {
    let world = cfg.world_spec()?;
    let data = world.sample_dataset(cfg.world.dataset_size, &mut RngStream::new(cfg.world.dataset_seed))?;
    let mut net = VelocityNet::new(cfg.net_config(), &mut RngStream::new(cfg.net_seed))?;
    let history = train(&mut net, &data, &cfg.train)?;
    Ok((net, history))
}

/// Loads `net.checkpoint` if set, otherwise trains.
pub fn obtain_net(cfg: &RunConfig) -> Result<VelocityNet> {
    let Some(path) = &cfg.checkpoint else {
        return Ok(train_net(cfg)?.0);
    };
    if !path.exists() {
        return Err(BenchError::config(format!("checkpoint {} does not exist", path.display())));
    }
    let net = load_checkpoint(path)?;
    check_net(cfg, &net)?;
    Ok(net)
}

fn check_net(cfg: &RunConfig, net: &VelocityNet) -> Result<()> {
    let n = net.config();
    if (n.dim, n.k_a, n.k_b) != (cfg.world.dim, cfg.world.k_a, cfg.world.k_b) {
        return Err(BenchError::config(format!(
            "checkpoint is for D={} K_a={} K_b={}, config has D={} K_a={} K_b={}",
            n.dim, n.k_a, n.k_b, cfg.world.dim, cfg.world.k_a, cfg.world.k_b
        )));
    }
    Ok(())
}

/// Attribute indices of one edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pattern {
    pub a_src: usize,
    pub a_tar: usize,
    pub b: usize,
}

impl Pattern {
    pub fn src(self) -> Condition {
        Condition::pair(self.a_src, self.b)
    }

    pub fn tar(self) -> Condition {
        Condition::pair(self.a_tar, self.b)
    }
}

fn distinct_from(a: usize, k: usize, s: &mut RngStream) -> usize {
    (a + 1 + s.below(k - 1)) % k
}

fn task_for(cfg: &RunConfig, world: &WorldSpec, p: Pattern, s: &mut RngStream) -> Result<EditTask> {
    let x0 = world.sample_point(p.src(), s)?.x;
    cfg.task(x0, p.src(), p.tar())
}

/// Task `task_id` of seed `seed`: `a_src != a_tar` uniform, `b` uniform and
/// shared, source drawn from the source component.
pub fn make_task(cfg: &RunConfig, world: &WorldSpec, seed: u64, task_id: usize) -> Result<EditTask> {
    let mut s = RngStream::derive(seed, &[TASK, task_id as u64]);
    let a_src = s.below(world.k_a());
    let p = Pattern {
        a_src,
        a_tar: distinct_from(a_src, world.k_a(), &mut s),
        b: s.below(world.k_b()),
    };
    task_for(cfg, world, p, &mut s)
}

fn pattern_of(t: &EditTask) -> Pattern {
    match (t.c_src, t.c_tar) {
        (Condition::Pair { a: a_src, b }, Condition::Pair { a: a_tar, .. }) => Pattern { a_src, a_tar, b },
        _ => unreachable!("edit tasks hold attribute pairs"),
    }
}

/// A task with the same attribute change and a different source point, and
/// one with a different change.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub main: EditTask,
    pub matching: EditTask,
    pub mismatching: EditTask,
}

pub fn pattern_set(cfg: &RunConfig, world: &WorldSpec, seed: u64, task_id: usize) -> Result<PatternSet> {
    let main = make_task(cfg, world, seed, task_id)?;
    let p = pattern_of(&main);
    let matching = task_for(cfg, world, p, &mut RngStream::derive(seed, &[MATCH, task_id as u64]))?;
    let mut s = RngStream::derive(seed, &[MISMATCH, task_id as u64]);
    let a_src = distinct_from(p.a_src, world.k_a(), &mut s);
    let other = Pattern {
        a_src,
        a_tar: distinct_from(a_src, world.k_a(), &mut s),
        b: if world.k_b() > 1 {
            distinct_from(p.b, world.k_b(), &mut s)
        } else {
            p.b
        },
    };
    let mismatching = task_for(cfg, world, other, &mut s)?;
    Ok(PatternSet {
        main,
        matching,
        mismatching,
    })
}

/// Seed of the random stream owned by one (task, label) cell.
pub fn cell_seed(seed: u64, task_id: usize, label: u64) -> u64 {
    derive_seed(seed, &[task_id as u64, label])
}

struct Outcome {
    edit: Vec<f64>,
    losses: Option<CycleLosses>,
}

fn run_editor(cfg: &RunConfig, net: &VelocityNet, task: &EditTask, editor: EditorKind, seed: u64) -> flowcycle::Result<Outcome> {
    let plain = |edit| Outcome { edit, losses: None };
    let mut stream = RngStream::new(seed);
    Ok(match editor {
        EditorKind::Sdedit => plain(sdedit_edit(task, net, &mut stream)?),
        EditorKind::OdeInv => plain(ode_inversion_edit(task, net)?),
        EditorKind::FlowEdit => plain(flowedit_edit(task, net, &mut stream)?),
        EditorKind::FlowCycle => {
            let run = flowcycle_optimize(task, net, &cfg.cycle_for(seed))?;
            Outcome {
                edit: flowcycle_edit(task, net, &run.noises.eps_src)?,
                losses: Some(run.final_losses),
            }
        }
    })
}

fn base_row(cfg: &RunConfig, task_id: usize, editor: &str, seed: u64) -> ReportRow {
    ReportRow {
        task_id,
        editor: editor.to_string(),
        seed,
        lambda: cfg.cycle.lambda,
        opt_steps: cfg.cycle.opt_steps,
        src_cfg: cfg.cycle.src_guidance,
        tar_cfg: cfg.cycle.tar_guidance,
        consistency: None,
        alignment: None,
        l_rec: None,
        l_align: None,
        runtime_ms: None,
        error: None,
    }
}

fn score(
    cfg: &RunConfig,
    world: &WorldSpec,
    task: &EditTask,
    mut row: ReportRow,
    started: Instant,
    outcome: flowcycle::Result<Outcome>,
) -> Result<ReportRow> {
    if cfg.record_runtime {
        row.runtime_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    match outcome {
        Ok(o) => {
            row.consistency = Some(world.consistency_metric(&o.edit, &task.x0_src)?);
            row.alignment = Some(world.alignment_metric(&o.edit, task.c_tar)?);
            row.l_rec = o.losses.map(|l| l.l_rec);
            row.l_align = o.losses.map(|l| l.l_align);
        }
        Err(e @ flowcycle::Error::NumericFailure(_)) => row.error = Some(e.to_string()),
        Err(e) => return Err(e.into()),
    }
    Ok(row)
}

fn report(cfg: &RunConfig, rows: Vec<ReportRow>) -> RunReport {
    RunReport {
        rows,
        config_hash: cfg.hash(),
        config_text: cfg.canonical(),
    }
}

fn cells(cfg: &RunConfig) -> Vec<(u64, usize)> {
    cfg.seeds
        .iter()
        .flat_map(|&s| (0..cfg.task_count).map(move |t| (s, t)))
        .collect()
}

/// Every enabled editor on every task. A numeric failure is recorded on its
/// row and the run continues.
pub fn compare_editors(cfg: &RunConfig, net: &VelocityNet) -> Result<RunReport> {
    cfg.validate()?;
    check_net(cfg, net)?;
    let world = cfg.world_spec()?;
    let jobs: Vec<(u64, usize, EditorKind)> = cells(cfg)
        .into_iter()
        .flat_map(|(s, t)| cfg.editors.iter().map(move |&e| (s, t, e)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(seed, task_id, editor)| {
            let task = make_task(cfg, &world, seed, task_id)?;
            let started = Instant::now();
            let outcome = run_editor(cfg, net, &task, editor, cell_seed(seed, task_id, editor.id()));
            score(cfg, &world, &task, base_row(cfg, task_id, editor.name(), seed), started, outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(cfg, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationParam {
    Lambda,
    Steps,
    Cfg,
}

impl AblationParam {
    pub fn name(self) -> &'static str {
        match self {
            AblationParam::Lambda => "lambda",
            AblationParam::Steps => "steps",
            AblationParam::Cfg => "cfg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(AblationParam::Lambda),
            "steps" | "opt_steps" => Ok(AblationParam::Steps),
            "cfg" | "cfg_scales" => Ok(AblationParam::Cfg),
            _ => Err(BenchError::config(format!("unknown ablation parameter {s:?}"))),
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            AblationParam::Lambda => &["cycle.lambda"],
            AblationParam::Steps => &["cycle.opt_steps"],
            AblationParam::Cfg => &["cycle.src_guidance", "cycle.tar_guidance"],
        }
    }

    /// The config with this parameter set to `value`. Guidance values are
    /// `src:tar`, or one number for both.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            AblationParam::Cfg => {
                let (src, tar) = value.split_once(':').unwrap_or((value, value));
                cfg.set("cycle.src_guidance", src.trim())?;
                cfg.set("cycle.tar_guidance", tar.trim())?;
            }
            _ => cfg.set(self.keys()[0], value.trim())?,
        }
        cfg.validate()
            .map_err(|e| BenchError::config(format!("ablation value {value:?}: {}", crate::config::strip(e))))?;
        let changed = base.diff(&cfg);
        assert!(
            changed.iter().all(|k| self.keys().contains(k)),
            "ablation touched {changed:?}"
        );
        Ok(cfg)
    }
}

/// Runs [`compare_editors`] once per grid value. Every value is validated
/// before anything runs.
pub fn ablate(
    base: &RunConfig,
    net: &VelocityNet,
    param: AblationParam,
    grid: &[String],
) -> Result<Vec<(String, RunReport)>> {
    if grid.is_empty() {
        return Err(BenchError::config("ablation grid is empty"));
    }
    let configs = grid
        .iter()
        .map(|v| Ok((v.clone(), param.apply(base, v)?)))
        .collect::<Result<Vec<_>>>()?;
    configs
        .into_iter()
        .map(|(v, cfg)| Ok((v, compare_editors(&cfg, net)?)))
        .collect()
}

/// Condition labels of [`transfer_experiment`] rows.
pub const TRANSFER_CONDITIONS: [&str; 4] = ["optimized", "match", "mismatch", "random"];

/// Restores each main task from four noises: its own optimized noise, the
/// noise optimized on a matching and on a mismatching task, and a fresh draw.
///
/// The main task and its optimization seed are those of [`compare_editors`],
/// so the `optimized` rows reproduce its `flowcycle` rows.
pub fn transfer_experiment(cfg: &RunConfig, net: &VelocityNet) -> Result<RunReport> {
    cfg.validate()?;
    check_net(cfg, net)?;
    let world = cfg.world_spec()?;
    let jobs: Vec<(u64, usize, usize)> = cells(cfg)
        .into_iter()
        .flat_map(|(s, t)| (0..4).map(move |k| (s, t, k)))
        .collect();
    let fc = EditorKind::FlowCycle.id();
    let rows = jobs
        .par_iter()
        .map(|&(seed, task_id, k)| {
            let set = pattern_set(cfg, &world, seed, task_id)?;
            let started = Instant::now();
            let outcome = (|| {
                let (eps, losses) = match k {
                    3 => (RngStream::new(cell_seed(seed, task_id, RANDOM)).normal_vec(world.dim()), None),
                    _ => {
                        let (donor, label) = [(&set.main, fc), (&set.matching, MATCH), (&set.mismatching, MISMATCH)][k];
                        let run = flowcycle_optimize(donor, net, &cfg.cycle_for(cell_seed(seed, task_id, label)))?;
                        (run.noises.eps_src, Some(run.final_losses))
                    }
                };
                Ok(Outcome {
                    edit: flowcycle_edit(&set.main, net, &eps)?,
                    losses,
                })
            })();
            let row = base_row(cfg, task_id, TRANSFER_CONDITIONS[k], seed);
            score(cfg, &world, &set.main, row, started, outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(cfg, rows))
}

/// Mean squared deviation from the source on the (relevant, irrelevant)
/// blocks after restoring `interpolate(x0, eps, t)` under the null condition.
pub fn corruption_probe(world: &WorldSpec, task: &EditTask, net: &VelocityNet, eps: &[f64]) -> Result<(f64, f64)> {
    let x_t = interpolate(&task.x0_src, eps, task.t_corrupt())?;
    let restored = euler_denoise(net, &x_t, &task.grid, &GuidanceSpec::null())?;
    Ok((
        world.relevant_deviation(&restored, &task.x0_src)?,
        world.consistency_metric(&restored, &task.x0_src)?,
    ))
}

/// [`corruption_probe`] on each task with its optimized noise and a fresh draw.
pub fn probe_experiment(cfg: &RunConfig, net: &VelocityNet) -> Result<ProbeReport> {
    cfg.validate()?;
    check_net(cfg, net)?;
    let world = cfg.world_spec()?;
    let rows = cells(cfg)
        .par_iter()
        .map(|&(seed, task_id)| {
            let task = make_task(cfg, &world, seed, task_id)?;
            let cycle = cfg.cycle_for(cell_seed(seed, task_id, EditorKind::FlowCycle.id()));
            let optimized = flowcycle_optimize(&task, net, &cycle).map_err(flowcycle::Error::from)?.noises.eps_src;
            let random = RngStream::new(cell_seed(seed, task_id, RANDOM)).normal_vec(world.dim());
            let (or, oi) = corruption_probe(&world, &task, net, &optimized)?;
            let (rr, ri) = corruption_probe(&world, &task, net, &random)?;
            Ok(ProbeRow {
                task_id,
                seed,
                optimized_relevant: or,
                optimized_irrelevant: oi,
                random_relevant: rr,
                random_irrelevant: ri,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeReport {
        rows,
        config_hash: cfg.hash(),
        config_text: cfg.canonical(),
    })
}

/// Writes one report directory per value and `ablation_summary.csv`.
pub fn emit_ablation(param: AblationParam, reports: &[(String, RunReport)], dir: &Path) -> Result<()> {
    use crate::report::{emit_report, num, write_atomic};
    let mut summary = String::from("param,value,editor,rows,failed,median_consistency,median_alignment\n");
    for (value, report) in reports {
        let sub = dir.join(format!("{}={}", param.name(), value.replace([':', '/'], "_")));
        emit_report(report, &sub)?;
        for s in report.summary() {
            summary.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                param.name(),
                value,
                s.editor,
                s.rows,
                s.failed,
                s.median_consistency.map(num).unwrap_or_default(),
                s.median_alignment.map(num).unwrap_or_default()
            ));
        }
    }
    crate::report::ensure_dir(dir)?;
    write_atomic(&dir.join("ablation_summary.csv"), summary.as_bytes())
}
