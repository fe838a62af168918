//! Corruption-then-restoration editors.
//!
//! Every editor maps a source point to an intermediate state at
//! `t_corrupt`, then restores it under the target condition:
//!
//! | editor | corruption | restoration |
//! |---|---|---|
//! | [`sdedit_edit`] | random noise | guided denoising |
//! | [`ode_inversion_edit`] | Euler inversion under the source | guided denoising |
//! | [`flowedit_edit`] | none (inversion-free) | denoising plus a source drift |
//! | [`flowcycle_edit`] | optimized noise | guided denoising |

mod baselines;
mod cycle;
mod flowedit;

pub use baselines::{ode_inversion_edit, sdedit_edit};
pub use cycle::{
    cycle_forward, cycle_gradients, cycle_loss_wrt_src, cycle_losses, flowcycle_edit, flowcycle_optimize,
    flowcycle_optimize_from, CycleLosses, CycleRun,
    CycleTrace, NoisePair, OptimizeFailure,
};
pub use flowedit::{flowedit_drift_form, flowedit_edit};

use crate::error::{Error, Result};
use crate::flowmodel::Condition;
use crate::sampler::{make_time_grid, GuidanceSpec, TimeGrid};

/// Default guidance for the source side of an edit.
pub const SRC_GUIDANCE: f64 = 3.5;
/// Default guidance for the target side of an edit.
pub const TAR_GUIDANCE: f64 = 5.5;
/// Default corruption time: step 33 of a 50-step schedule.
pub const T_CORRUPT: f64 = 0.66;
/// Default number of Euler steps from `T_CORRUPT` to 0.
pub const EDIT_STEPS: usize = 33;

/// One source point and the edit requested on it.
#[derive(Debug, Clone, PartialEq)]
pub struct EditTask {
    pub x0_src: Vec<f64>,
    pub c_src: Condition,
    pub c_tar: Condition,
    pub grid: TimeGrid,
    /// Guidance used by the editors when restoring; the cycle optimizer
    /// has its own scales in [`CycleConfig`].
    pub src_guidance: f64,
    pub tar_guidance: f64,
}

impl EditTask {
    /// Task on the default 33-step grid from `t = 0.66` with default guidance.
    pub fn new(x0_src: Vec<f64>, c_src: Condition, c_tar: Condition) -> Result<Self> {
        Self::with_grid(x0_src, c_src, c_tar, make_time_grid(EDIT_STEPS, T_CORRUPT)?)
    }

    pub fn with_grid(x0_src: Vec<f64>, c_src: Condition, c_tar: Condition, grid: TimeGrid) -> Result<Self> {
        let task = Self {
            x0_src,
            c_src,
            c_tar,
            grid,
            src_guidance: SRC_GUIDANCE,
            tar_guidance: TAR_GUIDANCE,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_guidance(mut self, src: f64, tar: f64) -> Result<Self> {
        self.src_guidance = src;
        self.tar_guidance = tar;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_src == self.c_tar {
            return Err(Error::invalid("source and target conditions must differ"));
        }
        if self.c_src.is_null() || self.c_tar.is_null() {
            return Err(Error::invalid("edit conditions must be attribute pairs"));
        }
        if self.x0_src.is_empty() || self.x0_src.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("source point must be nonempty and finite"));
        }
        GuidanceSpec::new(self.src_guidance, self.c_src)?;
        GuidanceSpec::new(self.tar_guidance, self.c_tar)?;
        Ok(())
    }

    pub fn t_corrupt(&self) -> f64 {
        self.grid.t_start()
    }

    pub fn dim(&self) -> usize {
        self.x0_src.len()
    }

    pub fn src_spec(&self) -> GuidanceSpec {
        GuidanceSpec {
            scale: self.src_guidance,
            condition: self.c_src,
        }
    }

    pub fn tar_spec(&self) -> GuidanceSpec {
        GuidanceSpec {
            scale: self.tar_guidance,
            condition: self.c_tar,
        }
    }
}

/// Hyperparameters of the cycle-consistent noise optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub lambda: f64,
    pub opt_steps: usize,
    pub lr: f64,
    pub src_guidance: f64,
    pub tar_guidance: f64,
    pub seed: u64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            opt_steps: 100,
            lr: 0.1,
            src_guidance: SRC_GUIDANCE,
            tar_guidance: TAR_GUIDANCE,
            seed: 0,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        for s in [self.src_guidance, self.tar_guidance] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("guidance scale {s} must be >= 0")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_task_dim(task: &EditTask, dim: usize) -> Result<()> {
    if task.dim() != dim {
        return Err(Error::invalid(format!(
            "task of dimension {}, field expects {dim}",
            task.dim()
        )));
    }
    Ok(())
}
