use super::{check_task_dim, EditTask};
use crate::diffcore::RngStream;
use crate::error::Result;
use crate::flowmodel::VelocityField;
use crate::sampler::{euler_denoise, euler_invert, interpolate};

/// Random corruption to `t_corrupt`, then guided denoising under the target.
pub fn sdedit_edit<F: VelocityField + ?Sized>(
    task: &EditTask,
    net: &F,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    task.validate()?;
    check_task_dim(task, net.dim())?;
    let eps = stream.normal_vec(task.dim());
    let x_t = interpolate(&task.x0_src, &eps, task.t_corrupt())?;
    euler_denoise(net, &x_t, &task.grid, &task.tar_spec())
}

/// Euler inversion under the source condition, then guided denoising under
/// the target on the same grid.
pub fn ode_inversion_edit<F: VelocityField + ?Sized>(task: &EditTask, net: &F) -> Result<Vec<f64>> {
    task.validate()?;
    check_task_dim(task, net.dim())?;
    let x_t = euler_invert(net, &task.x0_src, &task.grid, &task.src_spec())?;
    euler_denoise(net, &x_t, &task.grid, &task.tar_spec())
}
