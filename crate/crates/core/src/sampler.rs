//! Time grids, classifier-free guidance and Euler integration of the
//! probability-flow ODE in both directions.
//!
//! Time runs from noise (`t = 1`) to data (`t = 0`). Denoising walks a grid
//! `t_0 > t_1 > ... > t_N = 0` with `x <- x - v(x, t_i) * (t_i - t_{i+1})`;
//! inversion walks it backwards with `x <- x + v(x, t_{i+1}) * (t_i - t_{i+1})`.
//! Every routine has an untracked form and a `_tracked` form that records the
//! whole chain on a [`Graph`].

use crate::diffcore::{Graph, Var};
use crate::error::{Error, Result};
use crate::flowmodel::{Condition, VelocityField};

/// Strictly decreasing times ending at exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `Δ_i = t_i - t_{i+1}` for each step.
    pub fn step_sizes(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Builds a grid from explicit times, checking the invariants.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("a time grid needs at least one step"));
        }
        if times.last() != Some(&0.0) {
            return Err(Error::invalid("time grid must end at 0"));
        }
        if !(times[0] > 0.0 && times[0] <= 1.0) {
            return Err(Error::invalid(format!("grid start {} outside (0, 1]", times[0])));
        }
        if times.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("time grid must be strictly decreasing"));
        }
        Ok(Self { times })
    }
}

/// Uniform grid from `t_start` down to 0 in `n_steps` steps.
pub fn make_time_grid(n_steps: usize, t_start: f64) -> Result<TimeGrid> {
    if n_steps == 0 {
        return Err(Error::invalid("time grid needs at least one step"));
    }
    if !(t_start > 0.0 && t_start <= 1.0) {
        return Err(Error::invalid(format!("grid start {t_start} outside (0, 1]")));
    }
    let n = n_steps as f64;
    let times = (0..=n_steps)
        .map(|i| t_start * (n_steps - i) as f64 / n)
        .collect();
    TimeGrid::from_times(times)
}

/// Condition and strength for classifier-free guidance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceSpec {
    pub scale: f64,
    pub condition: Condition,
}

impl GuidanceSpec {
    pub fn new(scale: f64, condition: Condition) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("guidance scale {scale} must be finite and >= 0")));
        }
        Ok(Self { scale, condition })
    }

    /// Plain unconditional prediction.
    pub fn null() -> Self {
        Self {
            scale: 1.0,
            condition: Condition::Null,
        }
    }

    /// Which branches a scale needs: `Some(true)` only conditional,
    /// `Some(false)` only null, `None` both.
    fn single_branch(&self) -> Option<bool> {
        if self.condition.is_null() || self.scale == 1.0 {
            Some(true)
        } else if self.scale == 0.0 {
            Some(false)
        } else {
            None
        }
    }
}

/// `(1 - t) a + t b` on plain slices, the same arithmetic as [`Graph::lerp`].
fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| (1.0 - t) * a + t * b).collect()
}

/// `(1 - t) x0 + t eps`.
pub fn interpolate(x0: &[f64], eps: &[f64], t: f64) -> Result<Vec<f64>> {
    check_interp(x0.len(), eps.len(), t)?;
    Ok(lerp(x0, eps, t))
}

pub fn interpolate_tracked(g: &mut Graph, x0: Var, eps: Var, t: f64) -> Result<Var> {
    check_interp(g.value(x0).len(), g.value(eps).len(), t)?;
    g.lerp(x0, eps, t)
}

fn check_interp(a: usize, b: usize, t: f64) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("interpolate: lengths {a} and {b}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("interpolate: t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// `v_null + s (v_cond - v_null)`, evaluated as `(1 - s) v_null + s v_cond`
/// so that `s = 1` returns the conditional branch bit for bit.
pub fn guided_velocity<F: VelocityField + ?Sized>(
    net: &F,
    x: &[f64],
    t: f64,
    g: &GuidanceSpec,
) -> Result<Vec<f64>> {
    match g.single_branch() {
        Some(true) => net.velocity(x, t, g.condition),
        Some(false) => net.velocity(x, t, Condition::Null),
        None => {
            let v_cond = net.velocity(x, t, g.condition)?;
            let v_null = net.velocity(x, t, Condition::Null)?;
            Ok(lerp(&v_null, &v_cond, g.scale))
        }
    }
}

pub fn guided_velocity_tracked<F: VelocityField + ?Sized>(
    net: &F,
    graph: &mut Graph,
    x: Var,
    t: f64,
    g: &GuidanceSpec,
) -> Result<Var> {
    match g.single_branch() {
        Some(true) => net.velocity_tracked(graph, x, t, g.condition),
        Some(false) => net.velocity_tracked(graph, x, t, Condition::Null),
        None => {
            let v_cond = net.velocity_tracked(graph, x, t, g.condition)?;
            let v_null = net.velocity_tracked(graph, x, t, Condition::Null)?;
            graph.lerp(v_null, v_cond, g.scale)
        }
    }
}

fn at_step(e: Error, what: &str, step: usize) -> Error {
    match e {
        Error::NumericFailure(m) => Error::numeric(format!("{what} step {step}: {m}")),
        other => other,
    }
}

fn check_dim<F: VelocityField + ?Sized>(net: &F, len: usize) -> Result<()> {
    if len != net.dim() {
        return Err(Error::invalid(format!(
            "state of dimension {len}, field expects {}",
            net.dim()
        )));
    }
    Ok(())
}

/// Integrates from `grid.t_start()` down to 0.
pub fn euler_denoise<F: VelocityField + ?Sized>(
    net: &F,
    x_t: &[f64],
    grid: &TimeGrid,
    g: &GuidanceSpec,
) -> Result<Vec<f64>> {
    check_dim(net, x_t.len())?;
    let mut x = x_t.to_vec();
    for (i, w) in grid.times.windows(2).enumerate() {
        let dt = w[0] - w[1];
        let v = guided_velocity(net, &x, w[0], g).map_err(|e| at_step(e, "denoise", i))?;
        for (x, v) in x.iter_mut().zip(&v) {
            *x += -dt * v;
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("denoise step {i}: element {j} not finite")));
        }
    }
    Ok(x)
}

/// Tracked [`euler_denoise`]; gradients reach `x_t` and anything upstream of it.
pub fn euler_denoise_tracked<F: VelocityField + ?Sized>(
    net: &F,
    graph: &mut Graph,
    x_t: Var,
    grid: &TimeGrid,
    g: &GuidanceSpec,
) -> Result<Var> {
    check_dim(net, graph.value(x_t).len())?;
    let mut x = x_t;
    for (i, w) in grid.times.windows(2).enumerate() {
        let dt = w[0] - w[1];
        let step = (|| {
            let v = guided_velocity_tracked(net, graph, x, w[0], g)?;
            let dx = graph.scale(v, -dt)?;
            graph.add(x, dx)
        })();
        x = step.map_err(|e| at_step(e, "denoise", i))?;
    }
    Ok(x)
}

/// Integrates from 0 up to `grid.t_start()` with the sign-flipped Euler map.
pub fn euler_invert<F: VelocityField + ?Sized>(
    net: &F,
    x0: &[f64],
    grid: &TimeGrid,
    g: &GuidanceSpec,
) -> Result<Vec<f64>> {
    check_dim(net, x0.len())?;
    let mut x = x0.to_vec();
    for (i, w) in grid.times.windows(2).enumerate().rev() {
        let dt = w[0] - w[1];
        let v = guided_velocity(net, &x, w[1], g).map_err(|e| at_step(e, "invert", i))?;
        for (x, v) in x.iter_mut().zip(&v) {
            *x += dt * v;
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("invert step {i}: element {j} not finite")));
        }
    }
    Ok(x)
}
