//! Append-only tape for reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and records its inputs, so node ids are
//! already a topological order and `backward` is a single reverse sweep.

use std::sync::Arc;

use matrixmultiply::dgemm;

use super::tensor::{check_shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `(1 - t) * a + t * b`
    Lerp(Var, Var, f64),
    /// `[m, k] x [k, n]`
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Row-broadcast bias over an `[m, n]` input.
    AddBias { x: Var, bias: Var, n: usize },
    /// `x W + b` against frozen weights shared with the owner.
    ConstAffine {
        x: Var,
        weight: Arc<Vec<f64>>,
        m: usize,
        k: usize,
        n: usize,
    },
    Tanh(Var),
    ConcatCols { parts: Vec<(Var, usize)>, rows: usize },
    GatherRows { table: Var, rows: Vec<usize>, width: usize },
    Reshape(Var),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Computation record rooted, after `backward`, at a scalar loss.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`]: one gradient slot per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient w.r.t. `v`; zeros if `v` did not reach the loss.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; self.lens[v.0]])
    }

    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Snapshot of a node as a detached tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is valid")
    }

    /// Records `t` as a leaf, differentiable iff `t.requires_grad()`.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.leaf(t.shape().to_vec(), t.values().to_vec(), t.requires_grad())
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        self.checked_leaf(shape, values, false)
    }

    pub fn param(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        self.checked_leaf(shape, values, true)
    }

    fn checked_leaf(&mut self, shape: Vec<usize>, values: Vec<f64>, grad: bool) -> Result<Var> {
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::invalid(format!(
                "leaf shape {shape:?} does not match {} values",
                values.len()
            )));
        }
        Ok(self.leaf(shape, values, grad))
    }

    fn leaf(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, inputs: &[Var]) -> Result<Var> {
        if let Some(i) = value.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite value at element {i} of {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            [c] => Ok((1, c)),
            ref s => Err(Error::invalid(format!("{what}: expected a matrix, got {s:?}"))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), self.shape(a).to_vec(), value, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), self.shape(a).to_vec(), value, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), self.shape(a).to_vec(), value, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).iter().map(|x| s * x).collect();
        self.push(Op::Scale(a, s), self.shape(a).to_vec(), value, &[a])
    }

    /// `(1 - t) * a + t * b`.
    pub fn lerp(&mut self, a: Var, b: Var, t: f64) -> Result<Var> {
        self.same_shape(a, b, "lerp")?;
        let value = zip_map(self.value(a), self.value(b), |x, y| (1.0 - t) * x + t * y);
        self.push(Op::Lerp(a, b, t), self.shape(a).to_vec(), value, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, n) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::invalid(format!(
                "matmul: inner dims differ ({m}x{k} by {k2}x{n})"
            )));
        }
        let mut value = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), self.value(b), &mut value);
        self.push(Op::MatMul { a, b, m, k, n }, vec![m, n], value, &[a, b])
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.matrix_dims(x, "add_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::invalid(format!(
                "add_bias: bias of length {} for {n} columns",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias);
        let value = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(x, b)| x + b))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::AddBias { x, bias, n }, shape, value, &[x, bias])
    }

    /// `x W + b` with frozen `W: [k, n]` and `b: [n]`; gradients flow to `x` only.
    pub fn const_affine(&mut self, x: Var, weight: &Arc<Vec<f64>>, bias: &[f64]) -> Result<Var> {
        let (m, k) = self.matrix_dims(x, "const_affine")?;
        let n = bias.len();
        if weight.len() != k * n {
            return Err(Error::invalid(format!(
                "const_affine: weight of length {} is not {k}x{n}",
                weight.len()
            )));
        }
        let mut value: Vec<f64> = (0..m).flat_map(|_| bias.iter().copied()).collect();
        gemm_acc(m, k, n, self.value(x), weight, &mut value);
        let op = Op::ConstAffine {
            x,
            weight: Arc::clone(weight),
            m,
            k,
            n,
        };
        self.push(op, vec![m, n], value, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh(x), self.shape(x).to_vec(), value, &[x])
    }

    /// Column-wise concatenation of matrices sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols: no inputs"));
        }
        let rows = self.matrix_dims(parts[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != rows {
                return Err(Error::invalid(format!(
                    "concat_cols: row counts differ ({rows} vs {r})"
                )));
            }
            widths.push((p, c));
        }
        let total: usize = widths.iter().map(|(_, c)| c).sum();
        let mut value = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, c) in &widths {
                value.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        self.push(
            Op::ConcatCols { parts: widths, rows },
            vec![rows, total],
            value,
            parts,
        )
    }

    /// Selects rows of a `[r, width]` table, e.g. an embedding lookup.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let (r, width) = self.matrix_dims(table, "gather_rows")?;
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows: no rows requested"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::invalid(format!(
                "gather_rows: row {bad} out of range for {r} rows"
            )));
        }
        let t = self.value(table);
        let value = rows
            .iter()
            .flat_map(|&i| t[i * width..(i + 1) * width].iter().copied())
            .collect();
        let op = Op::GatherRows {
            table,
            rows: rows.to_vec(),
            width,
        };
        self.push(op, vec![rows.len(), width], value, &[table])
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::invalid(format!(
                "reshape: {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        if shape == self.shape(x) {
            return Ok(x);
        }
        let value = self.value(x).to_vec();
        self.push(Op::Reshape(x), shape, value, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), vec![1], vec![s], &[x])
    }

    /// Mean over all elements of `(a - b)^2`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mse")?;
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::Mse(a, b), vec![1], vec![s / n], &[a, b])
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_node = &self.nodes[root.0];
        if root_node.value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                root_node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(node, &upstream, &mut grads);
            }
            grads[id] = Some(upstream);
        }

        grads.resize(self.nodes.len(), None);
        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, lens })
    }

    fn propagate(&self, node: &Node, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, a, |g| axpy(g, 1.0, up));
                self.accumulate(grads, b, |g| axpy(g, 1.0, up));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |g| axpy(g, 1.0, up));
                self.accumulate(grads, b, |g| axpy(g, -1.0, up));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                self.accumulate(grads, a, |g| {
                    g.iter_mut().zip(up).zip(vb).for_each(|((g, u), y)| *g += u * y)
                });
                self.accumulate(grads, b, |g| {
                    g.iter_mut().zip(up).zip(va).for_each(|((g, u), x)| *g += u * x)
                });
            }
            Op::Scale(a, s) => self.accumulate(grads, a, |g| axpy(g, s, up)),
            Op::Lerp(a, b, t) => {
                self.accumulate(grads, a, |g| axpy(g, 1.0 - t, up));
                self.accumulate(grads, b, |g| axpy(g, t, up));
            }
            Op::MatMul { a, b, m, k, n } => {
                let (va, vb) = (self.value(a), self.value(b));
                // dA = dC B^T, dB = A^T dC
                self.accumulate(grads, a, |g| unsafe {
                    dgemm(
                        m, n, k, 1.0,
                        up.as_ptr(), n as isize, 1,
                        vb.as_ptr(), 1, n as isize,
                        1.0, g.as_mut_ptr(), k as isize, 1,
                    )
                });
                self.accumulate(grads, b, |g| unsafe {
                    dgemm(
                        k, m, n, 1.0,
                        va.as_ptr(), 1, k as isize,
                        up.as_ptr(), n as isize, 1,
                        1.0, g.as_mut_ptr(), n as isize, 1,
                    )
                });
            }
            Op::AddBias { x, bias, n, .. } => {
                self.accumulate(grads, x, |g| axpy(g, 1.0, up));
                self.accumulate(grads, bias, |g| {
                    for row in up.chunks(n) {
                        axpy(g, 1.0, row);
                    }
                });
            }
            Op::ConstAffine {
                x,
                ref weight,
                m,
                k,
                n,
            } => self.accumulate(grads, x, |g| unsafe {
                dgemm(
                    m, n, k, 1.0,
                    up.as_ptr(), n as isize, 1,
                    weight.as_ptr(), 1, n as isize,
                    1.0, g.as_mut_ptr(), k as isize, 1,
                )
            }),
            Op::Tanh(x) => {
                let y = &node.value;
                self.accumulate(grads, x, |g| {
                    g.iter_mut()
                        .zip(up)
                        .zip(y)
                        .for_each(|((g, u), y)| *g += u * (1.0 - y * y))
                });
            }
            Op::ConcatCols { ref parts, rows } => {
                let total: usize = parts.iter().map(|(_, c)| c).sum();
                let mut offset = 0;
                for &(p, c) in parts {
                    self.accumulate(grads, p, |g| {
                        for r in 0..rows {
                            let src = &up[r * total + offset..r * total + offset + c];
                            axpy(&mut g[r * c..(r + 1) * c], 1.0, src);
                        }
                    });
                    offset += c;
                }
            }
            Op::GatherRows {
                table,
                ref rows,
                width,
            } => self.accumulate(grads, table, |g| {
                for (slot, &i) in rows.iter().enumerate() {
                    axpy(
                        &mut g[i * width..(i + 1) * width],
                        1.0,
                        &up[slot * width..(slot + 1) * width],
                    );
                }
            }),
            Op::Reshape(x) => self.accumulate(grads, x, |g| axpy(g, 1.0, up)),
            Op::Sum(x) => {
                let u = up[0];
                self.accumulate(grads, x, |g| g.iter_mut().for_each(|g| *g += u));
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let c = 2.0 * up[0] / va.len() as f64;
                self.accumulate(grads, a, |g| {
                    for ((g, x), y) in g.iter_mut().zip(va).zip(vb) {
                        *g += c * (x - y);
                    }
                });
                self.accumulate(grads, b, |g| {
                    for ((g, x), y) in g.iter_mut().zip(va).zip(vb) {
                        *g -= c * (x - y);
                    }
                });
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let g = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(g);
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Lerp(..) => "lerp",
        Op::MatMul { .. } => "matmul",
        Op::AddBias { .. } => "add_bias",
        Op::ConstAffine { .. } => "const_affine",
        Op::Tanh(..) => "tanh",
        Op::ConcatCols { .. } => "concat_cols",
        Op::GatherRows { .. } => "gather_rows",
        Op::Reshape(..) => "reshape",
        Op::Sum(..) => "sum",
        Op::Mse(..) => "mse",
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Row-major `c = a b` for `a: [m, k]`, `b: [k, n]`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    c.iter_mut().for_each(|v| *v = 0.0);
    gemm_acc(m, k, n, a, b, c);
}

/// Row-major `c += a b`.
pub(crate) fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds asserted above; all three buffers are dense row-major.
    unsafe {
        dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            1.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_leaf(g: &mut Graph, v: &[f64]) -> Var {
        g.param(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let mut g = Graph::new();
        let a = vec_leaf(&mut g, &[1.0, 1.0]);
        let b = vec_leaf(&mut g, &[0.0, 0.0]);
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l), &[1.0]);

        let a = vec_leaf(&mut g, &[2.0, 0.0]);
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l), &[2.0]);

        let l = g.mse(a, a).unwrap();
        assert_eq!(g.value(l), &[0.0]);
    }

    #[test]
    fn mse_shape_mismatch() {
        let mut g = Graph::new();
        let a = vec_leaf(&mut g, &[1.0, 1.0]);
        let b = vec_leaf(&mut g, &[1.0]);
        assert!(matches!(g.mse(a, b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[3.0]);
        let zero = g.constant(vec![1], vec![0.0]).unwrap();
        let l = g.mse(x, zero).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(x), vec![6.0]);
        assert!(grads.get(zero).is_none());
    }

    #[test]
    fn unused_leaf_has_zero_gradient() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 2.0]);
        let w = vec_leaf(&mut g, &[5.0, 5.0]);
        let l = g.sum(x).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(w), vec![0.0, 0.0]);
        assert_eq!(grads.wrt(x), vec![1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[1.0, 2.0]);
        let y = g.tanh(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lerp_gradient_is_exactly_t() {
        let t = 0.66;
        let mut g = Graph::new();
        let x0 = vec_leaf(&mut g, &[0.3, -1.2, 2.0]);
        let eps = vec_leaf(&mut g, &[1.1, 0.4, -0.7]);
        let xt = g.lerp(x0, eps, t).unwrap();
        for j in 0..3 {
            let mut onehot = vec![0.0; 3];
            onehot[j] = 1.0;
            let mut g2 = g.clone();
            let w = g2.constant(vec![3], onehot.clone()).unwrap();
            let picked = g2.mul(xt, w).unwrap();
            let l = g2.sum(picked).unwrap();
            let grads = g2.backward(l).unwrap();
            let expected: Vec<f64> = onehot.iter().map(|v| v * t).collect();
            assert_eq!(grads.wrt(eps), expected);
        }
    }

    #[test]
    fn matmul_values_and_errors() {
        let mut g = Graph::new();
        let a = g.param(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = g.param(vec![3, 2], vec![1., 0., 0., 1., 1., 1.]).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[4., 5., 10., 11.]);
        assert!(g.matmul(a, a).is_err());
    }

    #[test]
    fn gather_and_concat() {
        let mut g = Graph::new();
        let table = g.param(vec![3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let rows = g.gather_rows(table, &[2, 0]).unwrap();
        assert_eq!(g.value(rows), &[4., 5., 0., 1.]);
        assert!(g.gather_rows(table, &[3]).is_err());

        let x = g.param(vec![2, 1], vec![9., 8.]).unwrap();
        let cat = g.concat_cols(&[x, rows]).unwrap();
        assert_eq!(g.shape(cat), &[2, 3]);
        assert_eq!(g.value(cat), &[9., 4., 5., 8., 0., 1.]);

        let l = g.sum(cat).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(table), vec![1., 1., 0., 0., 1., 1.]);
    }

    #[test]
    fn overflow_is_a_numeric_failure() {
        let mut g = Graph::new();
        let x = vec_leaf(&mut g, &[f64::MAX]);
        assert!(matches!(g.scale(x, 10.0), Err(Error::NumericFailure(_))));
    }
}
