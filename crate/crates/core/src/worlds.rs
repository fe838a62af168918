//! Synthetic factored-attribute Gaussian worlds.
//!
//! A point with condition `(a, b)` is drawn from
//! `N(concat(mu_a[a], mu_b[b]), sigma^2 I)`. The first half of the
//! coordinates (the *relevant* block) carries attribute `a`, the second half
//! (the *irrelevant* block) carries `b`. Edits change `a` and keep `b`, so
//! how much an editor disturbs the irrelevant block is a ground-truth
//! measure of source consistency.
//!
//! Because every conditional is an isotropic Gaussian, the flow-matching
//! velocity under the straight-line path `x_t = (1 - t) x_0 + t x_1` has a
//! closed form. Per coordinate, with `s_t^2 = (1 - t)^2 sigma^2 + t^2`:
//!
//! ```text
//! E[x_1 - x_0 | x_t = x] = -mu + (t - (1 - t) sigma^2) / s_t^2 * (x - (1 - t) mu)
//! ```
//!
//! and the probability-flow ODE transports `x_t` to
//! `mu + (sigma / s_t) (x_t - (1 - t) mu)` at time 0.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::diffcore::{Graph, RngStream, Var};
use crate::error::{Error, Result};
use crate::flowmodel::{Condition, VelocityField};

/// Definition of a factored world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    dim: usize,
    k_a: usize,
    k_b: usize,
    sigma: f64,
    mean_scale: f64,
    mu_a: Vec<Vec<f64>>,
    mu_b: Vec<Vec<f64>>,
}

/// A data point together with the condition it was drawn under.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub c: Condition,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self::new(8, 4, 4, 0.3, 2.0).expect("default world is valid")
    }
}

impl WorldSpec {
    /// Attribute means sit on a `±mean_scale` sign grid: coordinate `j` of
    /// attribute `k` is positive iff bit `j mod bits` of `k` is set, where
    /// `bits` is the number of bits needed to tell the attributes apart.
    pub fn new(dim: usize, k_a: usize, k_b: usize, sigma: f64, mean_scale: f64) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::invalid(format!("world dimension {dim} must be even and >= 2")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma {sigma} must be positive")));
        }
        if !(mean_scale > 0.0 && mean_scale.is_finite()) {
            return Err(Error::invalid(format!("mean scale {mean_scale} must be positive")));
        }
        let half = dim / 2;
        let capacity = if half >= usize::BITS as usize { usize::MAX } else { 1usize << half };
        for (name, k) in [("k_a", k_a), ("k_b", k_b)] {
            if k == 0 || k > capacity {
                return Err(Error::invalid(format!(
                    "{name} = {k} cannot be placed on a {half}-dimensional sign grid"
                )));
            }
        }
        let means = |k: usize| -> Vec<Vec<f64>> {
            let bits = (usize::BITS - (k.max(2) - 1).leading_zeros()) as usize;
            (0..k)
                .map(|id| {
                    (0..half)
                        .map(|j| if (id >> (j % bits)) & 1 == 1 { mean_scale } else { -mean_scale })
                        .collect()
                })
                .collect()
        };
        let spec = Self {
            dim,
            k_a,
            k_b,
            sigma,
            mean_scale,
            mu_a: means(k_a),
            mu_b: means(k_b),
        };
        // With fewer grid bits than the half-dimension the repeating pattern
        // still separates every id, but check rather than trust it.
        for mus in [&spec.mu_a, &spec.mu_b] {
            for i in 0..mus.len() {
                for j in 0..i {
                    if mus[i] == mus[j] {
                        return Err(Error::invalid("attribute means collide"));
                    }
                }
            }
        }
        Ok(spec)
    }

    /// One condition, one Gaussian.
    pub fn single_gaussian(dim: usize, sigma: f64, mean_scale: f64) -> Result<Self> {
        Self::new(dim, 1, 1, sigma, mean_scale)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_a(&self) -> usize {
        self.k_a
    }

    pub fn k_b(&self) -> usize {
        self.k_b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean_scale(&self) -> f64 {
        self.mean_scale
    }

    pub fn relevant(&self) -> Range<usize> {
        0..self.dim / 2
    }

    pub fn irrelevant(&self) -> Range<usize> {
        self.dim / 2..self.dim
    }

    pub fn mu_a(&self, a: usize) -> &[f64] {
        &self.mu_a[a]
    }

    pub fn mu_b(&self, b: usize) -> &[f64] {
        &self.mu_b[b]
    }

    fn pair(&self, c: Condition) -> Result<(usize, usize)> {
        match c {
            Condition::Pair { a, b } if a < self.k_a && b < self.k_b => Ok((a, b)),
            Condition::Pair { a, b } => Err(Error::invalid(format!(
                "condition ({a}, {b}) outside {}x{} attributes",
                self.k_a, self.k_b
            ))),
            Condition::Null => Err(Error::invalid("null condition has no world mean")),
        }
    }

    /// Mean of the component selected by `c`.
    pub fn mean(&self, c: Condition) -> Result<Vec<f64>> {
        let (a, b) = self.pair(c)?;
        Ok(self.mu_a[a].iter().chain(&self.mu_b[b]).copied().collect())
    }

    pub fn sample_point(&self, c: Condition, stream: &mut RngStream) -> Result<LabeledPoint> {
        let mu = self.mean(c)?;
        let noise = stream.normal_vec(self.dim);
        let x = mu.iter().zip(noise).map(|(m, n)| m + self.sigma * n).collect();
        Ok(LabeledPoint { x, c })
    }

    /// `n` points with attribute pairs drawn uniformly.
    pub fn sample_dataset(&self, n: usize, stream: &mut RngStream) -> Result<Vec<LabeledPoint>> {
        if n == 0 {
            return Err(Error::invalid("dataset size must be at least 1"));
        }
        (0..n)
            .map(|_| {
                let a = stream.below(self.k_a);
                let b = stream.below(self.k_b);
                self.sample_point(Condition::pair(a, b), stream)
            })
            .collect()
    }

    /// Per-coordinate slope `(t - (1 - t) sigma^2) / ((1 - t)^2 sigma^2 + t^2)`.
    pub fn oracle_gain(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (t - (1.0 - t) * s2) / ((1.0 - t).powi(2) * s2 + t * t)
    }

    fn check_oracle_args(&self, len: usize, t: f64) -> Result<()> {
        if len != self.dim {
            return Err(Error::invalid(format!("state of dimension {len}, world is {}", self.dim)));
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::invalid(format!("oracle velocity needs t in (0, 1], got {t}")));
        }
        Ok(())
    }

    /// Closed-form `E[x_1 - x_0 | x_t = x]` under condition `c`.
    pub fn oracle_velocity(&self, x: &[f64], t: f64, c: Condition) -> Result<Vec<f64>> {
        self.check_oracle_args(x.len(), t)?;
        let (k, offset) = self.oracle_affine(t, c)?;
        Ok(x.iter().zip(&offset).map(|(x, o)| k * x + o).collect())
    }

    /// The oracle velocity as `k * x + offset`.
    fn oracle_affine(&self, t: f64, c: Condition) -> Result<(f64, Vec<f64>)> {
        let mu = self.mean(c)?;
        let k = self.oracle_gain(t);
        Ok((k, mu.iter().map(|m| -m - k * (1.0 - t) * m).collect()))
    }

    /// Exact probability-flow endpoint at time 0 starting from `x_t`.
    pub fn oracle_flow_endpoint(&self, x_t: &[f64], t: f64, c: Condition) -> Result<Vec<f64>> {
        self.check_oracle_args(x_t.len(), t)?;
        let mu = self.mean(c)?;
        let s = ((1.0 - t).powi(2) * self.sigma * self.sigma + t * t).sqrt();
        let r = self.sigma / s;
        Ok(x_t.iter()
            .zip(&mu)
            .map(|(x, m)| m + r * (x - (1.0 - t) * m))
            .collect())
    }

    /// Mean squared deviation over the irrelevant block. Lower is better.
    pub fn consistency_metric(&self, x_edit: &[f64], x0_src: &[f64]) -> Result<f64> {
        if x_edit.len() != self.dim || x0_src.len() != self.dim {
            return Err(Error::invalid(format!(
                "consistency metric on dimensions {} and {}, world is {}",
                x_edit.len(),
                x0_src.len(),
                self.dim
            )));
        }
        let block = self.irrelevant();
        let n = block.len() as f64;
        Ok(block.map(|i| (x_edit[i] - x0_src[i]).powi(2)).sum::<f64>() / n)
    }

    /// Distance from the relevant block to the target attribute mean. Lower is better.
    pub fn alignment_metric(&self, x_edit: &[f64], c_tar: Condition) -> Result<f64> {
        if x_edit.len() != self.dim {
            return Err(Error::invalid(format!(
                "alignment metric on dimension {}, world is {}",
                x_edit.len(),
                self.dim
            )));
        }
        let (a, _) = self.pair(c_tar)?;
        Ok(self
            .relevant()
            .zip(&self.mu_a[a])
            .map(|(i, m)| (x_edit[i] - m).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Mean squared deviation over the relevant block, the mirror of
    /// [`consistency_metric`](Self::consistency_metric).
    pub fn relevant_deviation(&self, x: &[f64], x0_src: &[f64]) -> Result<f64> {
        if x.len() != self.dim || x0_src.len() != self.dim {
            return Err(Error::invalid("relevant deviation: dimension mismatch"));
        }
        let block = self.relevant();
        let n = block.len() as f64;
        Ok(block.map(|i| (x[i] - x0_src[i]).powi(2)).sum::<f64>() / n)
    }
}

/// The world's closed-form velocity as an integrable field.
#[derive(Debug, Clone, Copy)]
pub struct OracleField<'w> {
    pub world: &'w WorldSpec,
}

impl VelocityField for OracleField<'_> {
    fn dim(&self) -> usize {
        self.world.dim
    }

    fn velocity(&self, x: &[f64], t: f64, c: Condition) -> Result<Vec<f64>> {
        self.world.oracle_velocity(x, t, c)
    }

    fn velocity_tracked(&self, g: &mut Graph, x: Var, t: f64, c: Condition) -> Result<Var> {
        self.world.check_oracle_args(g.value(x).len(), t)?;
        let (k, offset) = self.world.oracle_affine(t, c)?;
        let offset = g.constant(g.shape(x).to_vec(), offset)?;
        let scaled = g.scale(x, k)?;
        g.add(scaled, offset)
    }
}

/// Writes `dim_0..dim_{D-1},attr_a,attr_b` rows.
pub fn write_dataset_csv(points: &[LabeledPoint], path: &Path) -> Result<()> {
    let dim = points.first().map_or(0, |p| p.x.len());
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|i| format!("dim_{i}")).collect();
    writeln!(out, "{},attr_a,attr_b", header.join(",")).unwrap();
    for p in points {
        let Condition::Pair { a, b } = p.c else {
            return Err(Error::invalid("dataset points must carry attribute pairs"));
        };
        if p.x.len() != dim {
            return Err(Error::invalid("ragged dataset"));
        }
        for v in &p.x {
            write!(out, "{v:.16e},").unwrap();
        }
        writeln!(out, "{a},{b}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_means_are_separated() {
        let w = WorldSpec::default();
        assert_eq!(w.relevant(), 0..4);
        assert_eq!(w.irrelevant(), 4..8);
        for i in 0..4 {
            for j in 0..i {
                let d: f64 = w.mu_a(i).iter().zip(w.mu_a(j)).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(d.sqrt() >= 6.0 * w.sigma());
            }
        }
    }

    #[test]
    fn rejects_bad_worlds() {
        assert!(WorldSpec::new(7, 2, 2, 0.3, 2.0).is_err());
        assert!(WorldSpec::new(4, 5, 2, 0.3, 2.0).is_err());
        assert!(WorldSpec::new(8, 4, 4, 0.0, 2.0).is_err());
    }

    #[test]
    fn oracle_standard_gaussian_cases() {
        let w = WorldSpec::new(2, 1, 1, 1.0, 1.0).unwrap();
        assert_eq!(w.oracle_gain(0.5), 0.0);
        assert_eq!(w.oracle_gain(1.0), 1.0);
        assert!(w.oracle_velocity(&[0.0, 0.0], 0.0, Condition::pair(0, 0)).is_err());
        assert!(w.oracle_velocity(&[0.0, 0.0], 0.5, Condition::Null).is_err());
    }

    #[test]
    fn oracle_with_zero_mean_and_unit_sigma() {
        // A one-attribute world whose mean is forced to zero via a custom spec.
        let mut w = WorldSpec::new(2, 1, 1, 1.0, 1.0).unwrap();
        w.mu_a = vec![vec![0.0]];
        w.mu_b = vec![vec![0.0]];
        let c = Condition::pair(0, 0);
        for x in [[0.3, -2.0], [5.0, 1.0]] {
            assert_eq!(w.oracle_velocity(&x, 0.5, c).unwrap(), vec![0.0, 0.0]);
            assert_eq!(w.oracle_velocity(&x, 1.0, c).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn metric_hand_values() {
        let w = WorldSpec::default();
        let x0 = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert_eq!(w.consistency_metric(&x0, &x0).unwrap(), 0.0);

        let mut rel = x0.clone();
        rel[0] += 3.0;
        rel[3] -= 1.0;
        assert_eq!(w.consistency_metric(&rel, &x0).unwrap(), 0.0);

        let shifted: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, v)| if i >= 4 { v + 1.0 } else { *v })
            .collect();
        let c = w.consistency_metric(&shifted, &x0).unwrap();
        assert!((c - 1.0).abs() < 1e-12, "{c}");

        assert!(w.consistency_metric(&x0[..4], &x0).is_err());
    }

    #[test]
    fn alignment_hand_values() {
        let w = WorldSpec::default();
        let c = Condition::pair(2, 1);
        let mut x = w.mean(c).unwrap();
        assert_eq!(w.alignment_metric(&x, c).unwrap(), 0.0);
        x[5] += 10.0;
        assert_eq!(w.alignment_metric(&x, c).unwrap(), 0.0);
        x[0] += 3.0;
        x[1] += 4.0;
        assert_eq!(w.alignment_metric(&x, c).unwrap(), 5.0);
        assert!(w.alignment_metric(&x, Condition::Null).is_err());
    }

    #[test]
    fn dataset_contract() {
        let w = WorldSpec::default();
        assert!(w.sample_dataset(0, &mut RngStream::new(0)).is_err());
        let one = w.sample_dataset(1, &mut RngStream::new(0)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].x.len(), 8);
        let a = w.sample_dataset(50, &mut RngStream::new(9)).unwrap();
        let b = w.sample_dataset(50, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
