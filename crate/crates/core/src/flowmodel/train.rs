use super::net::{Condition, VelocityNet};
use crate::diffcore::{adam_step, AdamState, Graph, RngStream};
use crate::error::{Error, Result};
use crate::worlds::LabeledPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub train_steps: usize,
    pub lr: f64,
    pub cond_dropout_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            train_steps: 5000,
            lr: 1e-3,
            cond_dropout_prob: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout_prob) {
            return Err(Error::invalid(format!(
                "condition dropout {} outside [0, 1]",
                self.cond_dropout_prob
            )));
        }
        Ok(())
    }
}

/// One sampled flow-matching minibatch.
///
/// For every source point: `t ~ U(0, 1)`, `x_1 ~ N(0, I)`,
/// `x_t = (1 - t) x_0 + t x_1`, regression target `x_1 - x_0`, and the
/// condition replaced by null with probability `cond_dropout`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfmBatch {
    pub x_t: Vec<f64>,
    pub t: Vec<f64>,
    pub conds: Vec<Condition>,
    pub target: Vec<f64>,
}

impl CfmBatch {
    pub fn sample<'a, I>(points: I, cond_dropout: f64, stream: &mut RngStream) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LabeledPoint>,
    {
        let mut batch = CfmBatch {
            x_t: Vec::new(),
            t: Vec::new(),
            conds: Vec::new(),
            target: Vec::new(),
        };
        let mut dim = None;
        for p in points {
            let d = *dim.get_or_insert(p.x.len());
            if p.x.len() != d {
                return Err(Error::invalid("batch points have different dimensions"));
            }
            let t = stream.uniform();
            let x1 = stream.normal_vec(d);
            let drop = stream.uniform() < cond_dropout;
            for (x0, x1) in p.x.iter().zip(&x1) {
                batch.x_t.push((1.0 - t) * x0 + t * x1);
                batch.target.push(x1 - x0);
            }
            batch.t.push(t);
            batch.conds.push(if drop { Condition::Null } else { p.c });
        }
        if batch.t.is_empty() {
            return Err(Error::invalid("empty flow-matching batch"));
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x_t.len() / self.t.len()
    }

    /// Mean squared error of `prediction` against the regression target.
    pub fn loss_of(&self, prediction: &[f64]) -> Result<f64> {
        if prediction.len() != self.target.len() {
            return Err(Error::invalid("prediction does not match batch size"));
        }
        let n = self.target.len() as f64;
        Ok(prediction
            .iter()
            .zip(&self.target)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / n)
    }
}

/// Flow-matching loss of `net` on freshly sampled pairs for `batch`.
pub fn cfm_loss(
    net: &VelocityNet,
    batch: &[LabeledPoint],
    cond_dropout: f64,
    stream: &mut RngStream,
) -> Result<f64> {
    let b = CfmBatch::sample(batch, cond_dropout, stream)?;
    let pred = net.forward_batch(&b.x_t, &b.t, &b.conds)?;
    b.loss_of(&pred)
}

/// Loss and parameter gradients, in the order weights/biases per layer then
/// the embedding table.
pub fn cfm_gradients(net: &VelocityNet, batch: &CfmBatch) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars = net.bind(&mut g)?;
    let rows = batch.len();
    let xs = g.constant(vec![rows, batch.dim()], batch.x_t.clone())?;
    let target = g.constant(vec![rows, batch.dim()], batch.target.clone())?;
    let pred = net.forward_bound(&mut g, &vars, xs, &batch.t, &batch.conds)?;
    let loss = g.mse(pred, target)?;
    let grads = g.backward(loss)?;
    let mut out = Vec::with_capacity(2 * vars.layers.len() + 1);
    for &(w, b) in &vars.layers {
        out.push(grads.wrt(w));
        out.push(grads.wrt(b));
    }
    out.push(grads.wrt(vars.table));
    Ok((g.value(loss)[0], out))
}

/// Adam on the flow-matching loss; returns the per-step loss history.
///
/// Parameters are rounded to `f32` afterwards so that a checkpoint of the
/// trained net reloads bit-exactly.
pub fn train(net: &mut VelocityNet, dataset: &[LabeledPoint], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.train_steps == 0 {
        return Ok(Vec::new());
    }
    if dataset.len() < cfg.batch_size {
        return Err(Error::invalid(format!(
            "dataset of {} points is smaller than the batch size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    if let Some(p) = dataset.iter().find(|p| p.x.len() != net.dim()) {
        return Err(Error::invalid(format!(
            "dataset point of dimension {} for a net of dimension {}",
            p.x.len(),
            net.dim()
        )));
    }

    let mut stream = RngStream::new(cfg.seed);
    let mut states: Vec<AdamState> = net.params_mut().iter().map(|p| AdamState::new(p.len())).collect();
    let mut history = Vec::with_capacity(cfg.train_steps);
    for step in 0..cfg.train_steps {
        let picks: Vec<&LabeledPoint> = (0..cfg.batch_size)
            .map(|_| &dataset[stream.below(dataset.len())])
            .collect();
        let batch = CfmBatch::sample(picks, cfg.cond_dropout_prob, &mut stream)?;
        let (loss, grads) = cfm_gradients(net, &batch).map_err(|e| at_step(e, step))?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("training diverged at step {step}")));
        }
        for ((p, g), s) in net.params_mut().into_iter().zip(&grads).zip(&mut states) {
            adam_step(p, g, s, cfg.lr).map_err(|e| at_step(e, step))?;
        }
        history.push(loss);
    }
    net.round_to_f32();
    if !net.all_finite() {
        return Err(Error::numeric("trained parameters overflow f32"));
    }
    Ok(history)
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NumericFailure(msg) => Error::numeric(format!("training step {step}: {msg}")),
        other => other,
    }
}
