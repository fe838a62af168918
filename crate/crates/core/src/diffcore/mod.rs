//! Dense tensors, tape-based reverse-mode autodiff, seeded randomness and Adam.

mod adam;
mod graph;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use rng::{derive_seed, rng_normal, RngStream};
pub use tensor::Tensor;

pub(crate) use graph::gemm_acc;

use crate::error::{Error, Result};

/// Mean over all elements of `(a - b)^2`, recorded on `g`.
pub fn mse(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    g.mse(a, b)
}

/// Largest relative disagreement between autodiff and central differences.
///
/// `f` receives a fresh graph and the leaf for `x`, and must return a scalar.
/// Each coordinate is compared as `|ad - fd| / (|fd| + 1e-8)`.
pub fn grad_check<F>(mut f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: FnMut(&mut Graph, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("grad_check: step {h} must be positive")));
    }
    let leaf = x.clone().requiring_grad();
    let mut g = Graph::new();
    let xv = g.input(&leaf);
    let loss = f(&mut g, xv)?;
    let analytic = g.backward(loss)?.wrt(xv);

    let mut eval = |values: Vec<f64>| -> Result<f64> {
        let t = Tensor::new(x.shape().to_vec(), values)?;
        let mut g = Graph::new();
        let v = g.input(&t);
        let out = f(&mut g, v)?;
        let y = g.value(out)[0];
        if !y.is_finite() {
            return Err(Error::numeric("grad_check: non-finite loss"));
        }
        Ok(y)
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.values().to_vec();
        plus[i] += h;
        let mut minus = x.values().to_vec();
        minus[i] -= h;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / (fd.abs() + 1e-8);
        if !err.is_finite() {
            return Err(Error::numeric(format!("grad_check: non-finite error at {i}")));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
