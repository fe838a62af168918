use super::{check_task_dim, EditTask};
use crate::diffcore::RngStream;
use crate::error::{Error, Result};
use crate::flowmodel::VelocityField;
use crate::sampler::{guided_velocity, interpolate};

/// One step's noisy source and shifted target states.
fn coupled_states(task: &EditTask, z: &[f64], t: f64, stream: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    let noise = stream.normal_vec(task.dim());
    let z_src = interpolate(&task.x0_src, &noise, t)?;
    let z_tar = z_src
        .iter()
        .zip(z.iter().zip(&task.x0_src))
        .map(|(s, (z, x0))| s + (z - x0))
        .collect();
    Ok((z_src, z_tar))
}

fn velocities<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    z_src: &[f64],
    z_tar: &[f64],
    t: f64,
    step: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tag = |e: Error| match e {
        Error::NumericFailure(m) => Error::numeric(format!("flowedit step {step}: {m}")),
        other => other,
    };
    let v_src = guided_velocity(net, z_src, t, &task.src_spec()).map_err(tag)?;
    let v_tar = guided_velocity(net, z_tar, t, &task.tar_spec()).map_err(tag)?;
    Ok((v_src, v_tar))
}

fn check_finite(z: &[f64], step: usize) -> Result<()> {
    match z.iter().position(|v| !v.is_finite()) {
        Some(j) => Err(Error::numeric(format!("flowedit step {step}: element {j} not finite"))),
        None => Ok(()),
    }
}

/// Inversion-free editing: starting at the source, integrate the difference
/// between target and source velocities evaluated on coupled noisy states.
///
/// Draws one `D`-vector of noise per step from `stream`.
pub fn flowedit_edit<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    task.validate()?;
    check_task_dim(task, net.dim())?;
    let mut z = task.x0_src.clone();
    for (i, w) in task.grid.times().windows(2).enumerate() {
        let (z_src, z_tar) = coupled_states(task, &z, w[0], stream)?;
        let (v_src, v_tar) = velocities(task, net, &z_src, &z_tar, w[0], i)?;
        let h = w[1] - w[0];
        for ((z, a), b) in z.iter_mut().zip(&v_tar).zip(&v_src) {
            *z += h * (a - b);
        }
        check_finite(&z, i)?;
    }
    Ok(z)
}

/// [`flowedit_edit`] written as a target denoising step plus a drift
/// `-h v_src` that cancels the source component. Given the same noise stream
/// the two agree to rounding.
pub fn flowedit_drift_form<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    task.validate()?;
    check_task_dim(task, net.dim())?;
    let mut z = task.x0_src.clone();
    for (i, w) in task.grid.times().windows(2).enumerate() {
        let (z_src, z_tar) = coupled_states(task, &z, w[0], stream)?;
        let (v_src, v_tar) = velocities(task, net, &z_src, &z_tar, w[0], i)?;
        let h = w[1] - w[0];
        for ((z, a), b) in z.iter_mut().zip(&v_tar).zip(&v_src) {
            let drift = -h * b;
            *z += h * a + drift;
        }
        check_finite(&z, i)?;
    }
    Ok(z)
}
