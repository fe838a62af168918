use std::f64::consts::PI;
use std::sync::Arc;

use crate::diffcore::{gemm_acc, Graph, RngStream, Tensor, Var};
use crate::error::{Error, Result};

/// Number of time features: `t` plus a sine/cosine pair per frequency.
pub const TIME_FEATURES: usize = 7;
const FREQUENCIES: [f64; 3] = [1.0, 2.0, 4.0];

/// Discrete prompt analog: an attribute pair, or the null token used for
/// unconditional prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Pair { a: usize, b: usize },
    Null,
}

impl Condition {
    pub fn pair(a: usize, b: usize) -> Self {
        Condition::Pair { a, b }
    }

    pub fn is_null(self) -> bool {
        matches!(self, Condition::Null)
    }
}

/// `[t, sin 2πt, cos 2πt, sin 4πt, cos 4πt, sin 8πt, cos 8πt]`
pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    let mut f = [0.0; TIME_FEATURES];
    f[0] = t;
    for (i, k) in FREQUENCIES.iter().enumerate() {
        let w = 2.0 * PI * k * t;
        f[1 + 2 * i] = w.sin();
        f[2 + 2 * i] = w.cos();
    }
    f
}

/// Architecture of a [`VelocityNet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub dim: usize,
    pub k_a: usize,
    pub k_b: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl NetConfig {
    pub fn new(dim: usize, k_a: usize, k_b: usize) -> Self {
        Self {
            dim,
            k_a,
            k_b,
            embed_dim: 16,
            hidden: vec![128, 128],
        }
    }

    pub fn input_width(&self) -> usize {
        self.dim + TIME_FEATURES + self.embed_dim
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.k_a == 0 || self.k_b == 0 || self.embed_dim == 0 {
            return Err(Error::invalid(format!("degenerate net config {self:?}")));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Fully connected layer, `y = x W + b` with `W` stored `[n_in, n_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) weight: Arc<Vec<f64>>,
    pub(crate) bias: Vec<f64>,
    pub(crate) n_in: usize,
    pub(crate) n_out: usize,
}

impl Dense {
    pub(crate) fn from_parts(n_in: usize, n_out: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != n_in * n_out || bias.len() != n_out {
            return Err(Error::invalid(format!(
                "dense {n_in}x{n_out}: weight {} / bias {}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            weight: Arc::new(weight),
            bias,
            n_in,
            n_out,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_in, self.n_out)
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// Conditional velocity predictor `v(x, t, c)`: an MLP over
/// `[x, time features, condition embedding]` with tanh hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    pub(crate) cfg: NetConfig,
    pub(crate) layers: Vec<Dense>,
    /// `(k_a * k_b + 1) x embed_dim`, last row is the null token.
    pub(crate) table: Vec<f64>,
}

/// Graph handles for every trainable parameter of a net.
#[derive(Debug, Clone)]
pub struct NetVars {
    pub layers: Vec<(Var, Var)>,
    pub table: Var,
}

impl VelocityNet {
    /// Normal(0, 1/fan_in) weights, zero biases, standard-normal embeddings,
    /// all rounded to `f32` so checkpoints reproduce them exactly.
    pub fn new(cfg: NetConfig, stream: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut widths = vec![cfg.input_width()];
        widths.extend(&cfg.hidden);
        widths.push(cfg.dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let scale = (n_in as f64).sqrt().recip();
            let weight = stream
                .normal_vec(n_in * n_out)
                .into_iter()
                .map(|v| round_f32(v * scale))
                .collect();
            layers.push(Dense::from_parts(n_in, n_out, weight, vec![0.0; n_out])?);
        }
        let rows = cfg.k_a * cfg.k_b + 1;
        let table = stream
            .normal_vec(rows * cfg.embed_dim)
            .into_iter()
            .map(round_f32)
            .collect();
        Ok(Self { cfg, layers, table })
    }

    pub(crate) fn from_parts(cfg: NetConfig, layers: Vec<Dense>, table: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let mut expected_in = cfg.input_width();
        for l in &layers {
            if l.n_in != expected_in {
                return Err(Error::invalid(format!(
                    "layer input {} does not follow previous width {expected_in}",
                    l.n_in
                )));
            }
            expected_in = l.n_out;
        }
        if layers.is_empty() || expected_in != cfg.dim {
            return Err(Error::invalid("last layer must output the data dimension"));
        }
        if table.len() != (cfg.k_a * cfg.k_b + 1) * cfg.embed_dim {
            return Err(Error::invalid("embedding table has the wrong size"));
        }
        let hidden = layers[..layers.len() - 1].iter().map(|l| l.n_out).collect();
        let cfg = NetConfig { hidden, ..cfg };
        Ok(Self { cfg, layers, table })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>() + self.table.len()
    }

    /// Row of the embedding table used for `c`.
    pub fn cond_index(&self, c: Condition) -> Result<usize> {
        match c {
            Condition::Null => Ok(self.cfg.k_a * self.cfg.k_b),
            Condition::Pair { a, b } if a < self.cfg.k_a && b < self.cfg.k_b => Ok(a * self.cfg.k_b + b),
            Condition::Pair { a, b } => Err(Error::invalid(format!(
                "condition ({a}, {b}) outside {}x{} attributes",
                self.cfg.k_a, self.cfg.k_b
            ))),
        }
    }

    pub fn embed_condition(&self, c: Condition) -> Result<Tensor> {
        let e = self.cfg.embed_dim;
        let i = self.cond_index(c)?;
        Ok(Tensor::vector(self.table[i * e..(i + 1) * e].to_vec()))
    }

    pub fn all_finite(&self) -> bool {
        self.table.iter().all(|v| v.is_finite())
            && self
                .layers
                .iter()
                .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn input_matrix(&self, xs: &[f64], ts: &[f64], conds: &[Condition]) -> Result<Vec<f64>> {
        let d = self.cfg.dim;
        let e = self.cfg.embed_dim;
        let rows = ts.len();
        if xs.len() != rows * d || conds.len() != rows {
            return Err(Error::invalid(format!(
                "batch of {rows} needs {} state values and {rows} conditions, got {} and {}",
                rows * d,
                xs.len(),
                conds.len()
            )));
        }
        let mut input = Vec::with_capacity(rows * self.cfg.input_width());
        for r in 0..rows {
            let ci = self.cond_index(conds[r])?;
            input.extend_from_slice(&xs[r * d..(r + 1) * d]);
            input.extend_from_slice(&time_features(ts[r]));
            input.extend_from_slice(&self.table[ci * e..(ci + 1) * e]);
        }
        Ok(input)
    }

    /// Untracked forward over a row-major batch of states.
    pub fn forward_batch(&self, xs: &[f64], ts: &[f64], conds: &[Condition]) -> Result<Vec<f64>> {
        let rows = ts.len();
        let mut h = self.input_matrix(xs, ts, conds)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out: Vec<f64> = (0..rows).flat_map(|_| l.bias.iter().copied()).collect();
            gemm_acc(rows, l.n_in, l.n_out, &h, &l.weight, &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = out;
        }
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("velocity output {i} is not finite")));
        }
        Ok(h)
    }

    /// `v(x, t, c)` for a single state.
    pub fn velocity(&self, x: &Tensor, t: f64, c: Condition) -> Result<Tensor> {
        self.check_state(x.len(), t)?;
        let v = self.forward_batch(x.values(), &[t], &[c])?;
        Tensor::new(x.shape().to_vec(), v)
    }

    pub(crate) fn check_state(&self, len: usize, t: f64) -> Result<()> {
        if len != self.cfg.dim {
            return Err(Error::invalid(format!(
                "state of dimension {len}, net expects {}",
                self.cfg.dim
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("time {t} outside [0, 1]")));
        }
        Ok(())
    }

    /// Forward for a single state with frozen weights; gradients reach `x` only.
    pub fn velocity_tracked(&self, g: &mut Graph, x: Var, t: f64, c: Condition) -> Result<Var> {
        self.check_state(g.value(x).len(), t)?;
        let emb = self.embed_condition(c)?;
        let feats = g.constant(vec![1, TIME_FEATURES], time_features(t).to_vec())?;
        let emb = g.constant(vec![1, self.cfg.embed_dim], emb.into_values())?;
        let mut h = g.concat_cols(&[x, feats, emb])?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = g.const_affine(h, &l.weight, &l.bias)?;
            if i < last {
                h = g.tanh(h)?;
            }
        }
        let shape = g.shape(x).to_vec();
        g.reshape(h, shape)
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Result<NetVars> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let w = g.param(vec![l.n_in, l.n_out], l.weight.to_vec())?;
            let b = g.param(vec![l.n_out], l.bias.clone())?;
            layers.push((w, b));
        }
        let rows = self.cfg.k_a * self.cfg.k_b + 1;
        let table = g.param(vec![rows, self.cfg.embed_dim], self.table.clone())?;
        Ok(NetVars { layers, table })
    }

    /// Batched forward through bound parameters; `xs` is an `[n, dim]` node.
    pub fn forward_bound(
        &self,
        g: &mut Graph,
        vars: &NetVars,
        xs: Var,
        ts: &[f64],
        conds: &[Condition],
    ) -> Result<Var> {
        let rows = ts.len();
        if g.shape(xs) != [rows, self.cfg.dim] || conds.len() != rows {
            return Err(Error::invalid(format!(
                "bound forward: states {:?}, {} times, {} conditions",
                g.shape(xs),
                rows,
                conds.len()
            )));
        }
        let idx = conds
            .iter()
            .map(|&c| self.cond_index(c))
            .collect::<Result<Vec<_>>>()?;
        let feats: Vec<f64> = ts.iter().flat_map(|&t| time_features(t)).collect();
        let feats = g.constant(vec![rows, TIME_FEATURES], feats)?;
        let emb = g.gather_rows(vars.table, &idx)?;
        let mut h = g.concat_cols(&[xs, feats, emb])?;
        let last = vars.layers.len() - 1;
        for (i, &(w, b)) in vars.layers.iter().enumerate() {
            h = g.matmul(h, w)?;
            h = g.add_bias(h, b)?;
            if i < last {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }

    /// Mutable parameter slices in binding order (weights, biases, ..., table).
    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(Arc::make_mut(&mut l.weight).as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.table.as_mut_slice());
        out
    }

    pub(crate) fn round_to_f32(&mut self) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = round_f32(*v));
        }
    }
}

pub(crate) fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// A velocity field the samplers and editors can integrate.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    fn velocity(&self, x: &[f64], t: f64, c: Condition) -> Result<Vec<f64>>;

    fn velocity_tracked(&self, g: &mut Graph, x: Var, t: f64, c: Condition) -> Result<Var>;
}

impl VelocityField for VelocityNet {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn velocity(&self, x: &[f64], t: f64, c: Condition) -> Result<Vec<f64>> {
        self.check_state(x.len(), t)?;
        self.forward_batch(x, &[t], &[c])
    }

    fn velocity_tracked(&self, g: &mut Graph, x: Var, t: f64, c: Condition) -> Result<Var> {
        VelocityNet::velocity_tracked(self, g, x, t, c)
    }
}
