//! Cycle-consistent noise optimization.
//!
//! Two learnable noises close a loop through the target and back:
//!
//! ```text
//! x_t_src = (1 - t) x0 + t eps_src          --denoise under c_tar-->  x0_tar
//! z_t_tar = (1 - t) x0_tar + t eps_tar      --denoise under c_src-->  z0_src
//! ```
//!
//! `l_rec = mse(z0_src, x0)` asks the loop to return to the source and
//! `l_align = mse(x_t_src, z_t_tar)` ties the two noisy states together.

use std::fmt;

use super::{check_task_dim, CycleConfig, EditTask};
use crate::diffcore::{adam_step, AdamState, Graph, RngStream, Var};
use crate::error::{Error, Result};
use crate::flowmodel::VelocityField;
use crate::sampler::{euler_denoise, euler_denoise_tracked, interpolate, interpolate_tracked, GuidanceSpec};

/// The two learnable noises, each of the task's dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePair {
    pub eps_src: Vec<f64>,
    pub eps_tar: Vec<f64>,
}

impl NoisePair {
    /// `eps_src` then `eps_tar`, each a fresh standard normal draw.
    pub fn sample(dim: usize, stream: &mut RngStream) -> Self {
        let eps_src = stream.normal_vec(dim);
        let eps_tar = stream.normal_vec(dim);
        Self { eps_src, eps_tar }
    }

    fn concat(&self) -> Vec<f64> {
        let mut v = self.eps_src.clone();
        v.extend_from_slice(&self.eps_tar);
        v
    }

    fn split(v: &[f64]) -> Self {
        let (a, b) = v.split_at(v.len() / 2);
        Self {
            eps_src: a.to_vec(),
            eps_tar: b.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleLosses {
    pub l_rec: f64,
    pub l_align: f64,
    pub l_total: f64,
}

/// Every intermediate of one pass around the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    pub x_t_src: Vec<f64>,
    pub x0_tar: Vec<f64>,
    pub z_t_tar: Vec<f64>,
    pub z0_src: Vec<f64>,
    pub losses: CycleLosses,
}

/// Result of [`flowcycle_optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRun {
    pub noises: NoisePair,
    /// Losses before each update, one entry per optimization step.
    pub history: Vec<CycleLosses>,
    /// Losses at the returned noises.
    pub final_losses: CycleLosses,
}

/// An aborted optimization with the losses recorded before the failure.
#[derive(Debug)]
pub struct OptimizeFailure {
    pub error: Error,
    pub history: Vec<CycleLosses>,
}

impl fmt::Display for OptimizeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.history.len())
    }
}

impl std::error::Error for OptimizeFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<OptimizeFailure> for Error {
    fn from(f: OptimizeFailure) -> Self {
        f.error
    }
}

struct CycleNodes {
    l_rec: Var,
    l_align: Var,
    l_total: Var,
}

fn leg(e: Error, name: &str) -> Error {
    match e {
        Error::NumericFailure(m) => Error::numeric(format!("{name} leg: {m}")),
        other => other,
    }
}

fn specs(task: &EditTask, cfg: &CycleConfig) -> Result<(GuidanceSpec, GuidanceSpec)> {
    Ok((
        GuidanceSpec::new(cfg.src_guidance, task.c_src)?,
        GuidanceSpec::new(cfg.tar_guidance, task.c_tar)?,
    ))
}

fn check_inputs<F: VelocityField + ?Sized>(task: &EditTask, net: &F, cfg: &CycleConfig) -> Result<()> {
    task.validate()?;
    cfg.validate()?;
    check_task_dim(task, net.dim())
}

fn build_cycle<F: VelocityField + ?Sized>(
    g: &mut Graph,
    task: &EditTask,
    net: &F,
    cfg: &CycleConfig,
    eps_src: Var,
    eps_tar: Var,
) -> Result<CycleNodes> {
    let (src, tar) = specs(task, cfg)?;
    let t = task.t_corrupt();
    let x0 = g.constant(vec![task.dim()], task.x0_src.clone())?;

    let x_t_src = interpolate_tracked(g, x0, eps_src, t)?;
    let x0_tar = euler_denoise_tracked(net, g, x_t_src, &task.grid, &tar).map_err(|e| leg(e, "source-to-target"))?;
    let z_t_tar = interpolate_tracked(g, x0_tar, eps_tar, t)?;
    let z0_src = euler_denoise_tracked(net, g, z_t_tar, &task.grid, &src).map_err(|e| leg(e, "target-to-source"))?;

    let l_rec = g.mse(z0_src, x0)?;
    let l_align = g.mse(x_t_src, z_t_tar)?;
    let weighted = g.scale(l_align, cfg.lambda)?;
    let l_total = g.add(l_rec, weighted)?;
    Ok(CycleNodes {
        l_rec,
        l_align,
        l_total,
    })
}

fn losses_of(g: &Graph, n: &CycleNodes) -> CycleLosses {
    CycleLosses {
        l_rec: g.value(n.l_rec)[0],
        l_align: g.value(n.l_align)[0],
        l_total: g.value(n.l_total)[0],
    }
}

fn check_noises(task: &EditTask, noises: &NoisePair) -> Result<()> {
    if noises.eps_src.len() != task.dim() || noises.eps_tar.len() != task.dim() {
        return Err(Error::invalid(format!(
            "noises of lengths {} and {}, task dimension {}",
            noises.eps_src.len(),
            noises.eps_tar.len(),
            task.dim()
        )));
    }
    Ok(())
}

/// One untracked pass around the cycle.
pub fn cycle_forward<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    noises: &NoisePair,
    cfg: &CycleConfig,
) -> Result<CycleTrace> {
    check_inputs(task, net, cfg)?;
    check_noises(task, noises)?;
    let (src, tar) = specs(task, cfg)?;
    let t = task.t_corrupt();
    let x_t_src = interpolate(&task.x0_src, &noises.eps_src, t)?;
    let x0_tar = euler_denoise(net, &x_t_src, &task.grid, &tar).map_err(|e| leg(e, "source-to-target"))?;
    let z_t_tar = interpolate(&x0_tar, &noises.eps_tar, t)?;
    let z0_src = euler_denoise(net, &z_t_tar, &task.grid, &src).map_err(|e| leg(e, "target-to-source"))?;
    let mut trace = CycleTrace {
        x_t_src,
        x0_tar,
        z_t_tar,
        z0_src,
        losses: CycleLosses {
            l_rec: 0.0,
            l_align: 0.0,
            l_total: 0.0,
        },
    };
    trace.losses = cycle_losses(task, &trace, cfg.lambda)?;
    Ok(trace)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Losses of a recorded pass, `l_total = l_rec + lambda * l_align`.
pub fn cycle_losses(task: &EditTask, trace: &CycleTrace, lambda: f64) -> Result<CycleLosses> {
    let n = task.dim();
    if [&trace.x_t_src, &trace.x0_tar, &trace.z_t_tar, &trace.z0_src]
        .iter()
        .any(|v| v.len() != n)
    {
        return Err(Error::invalid("trace does not match the task dimension"));
    }
    let l_rec = mse(&trace.z0_src, &task.x0_src);
    let l_align = mse(&trace.x_t_src, &trace.z_t_tar);
    let l_total = l_rec + lambda * l_align;
    if !l_total.is_finite() {
        return Err(Error::numeric("cycle loss is not finite"));
    }
    Ok(CycleLosses {
        l_rec,
        l_align,
        l_total,
    })
}

/// Tracked pass: losses and `d l_total / d (eps_src, eps_tar)`.
pub fn cycle_gradients<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    noises: &NoisePair,
    cfg: &CycleConfig,
) -> Result<(CycleLosses, NoisePair)> {
    check_inputs(task, net, cfg)?;
    check_noises(task, noises)?;
    let mut g = Graph::new();
    let d = task.dim();
    let eps_src = g.param(vec![d], noises.eps_src.clone())?;
    let eps_tar = g.param(vec![d], noises.eps_tar.clone())?;
    let nodes = build_cycle(&mut g, task, net, cfg, eps_src, eps_tar)?;
    let grads = g.backward(nodes.l_total)?;
    let out = NoisePair {
        eps_src: grads.wrt(eps_src),
        eps_tar: grads.wrt(eps_tar),
    };
    if out.concat().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("cycle gradient is not finite"));
    }
    Ok((losses_of(&g, &nodes), out))
}

/// Recorded scalar loss of the cycle as a function of `eps_src` alone, for
/// gradient checks. `eps_tar` is held fixed.
#[doc(hidden)]
pub fn cycle_loss_wrt_src<F: VelocityField + ?Sized>(
    g: &mut Graph,
    task: &EditTask,
    net: &F,
    cfg: &CycleConfig,
    eps_src: Var,
    eps_tar: &[f64],
) -> Result<Var> {
    let eps_tar = g.constant(vec![eps_tar.len()], eps_tar.to_vec())?;
    Ok(build_cycle(g, task, net, cfg, eps_src, eps_tar)?.l_total)
}

/// Jointly optimizes both noises with a single Adam state.
///
/// Initial noises are drawn from `RngStream::new(cfg.seed)`.
pub fn flowcycle_optimize<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    cfg: &CycleConfig,
) -> Result<CycleRun, OptimizeFailure> {
    let init = NoisePair::sample(task.dim(), &mut RngStream::new(cfg.seed));
    flowcycle_optimize_from(task, net, cfg, init)
}

/// [`flowcycle_optimize`] from given initial noises.
pub fn flowcycle_optimize_from<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    cfg: &CycleConfig,
    init: NoisePair,
) -> Result<CycleRun, OptimizeFailure> {
    let mut history = Vec::with_capacity(cfg.opt_steps);
    let fail = |error: Error, history: Vec<CycleLosses>| OptimizeFailure { error, history };
    if let Err(e) = check_inputs(task, net, cfg).and_then(|_| check_noises(task, &init)) {
        return Err(fail(e, history));
    }
    let mut params = init.concat();
    let mut state = AdamState::new(params.len());
    for step in 0..cfg.opt_steps {
        let noises = NoisePair::split(&params);
        let (losses, grads) = match cycle_gradients(task, net, &noises, cfg) {
            Ok(v) => v,
            Err(e) => return Err(fail(at_step(e, step), history)),
        };
        history.push(losses);
        if let Err(e) = adam_step(&mut params, &grads.concat(), &mut state, cfg.lr) {
            return Err(fail(at_step(e, step), history));
        }
    }
    let noises = NoisePair::split(&params);
    let final_losses = match cycle_forward(task, net, &noises, cfg) {
        Ok(trace) => trace.losses,
        Err(e) => return Err(fail(at_step(e, cfg.opt_steps), history)),
    };
    Ok(CycleRun {
        noises,
        history,
        final_losses,
    })
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NumericFailure(m) => Error::numeric(format!("optimization step {step}: {m}")),
        other => other,
    }
}

/// Corrupts the source with the optimized `eps_src` and denoises under the
/// target at the task's target guidance. `eps_tar` plays no part here.
pub fn flowcycle_edit<F: VelocityField + ?Sized>(task: &EditTask, net: &F, eps_src: &[f64]) -> Result<Vec<f64>> {
    task.validate()?;
    check_task_dim(task, net.dim())?;
    let x_t = interpolate(&task.x0_src, eps_src, task.t_corrupt())?;
    euler_denoise(net, &x_t, &task.grid, &task.tar_spec())
}
