//! Closed-form velocity fields for exercising samplers and editors without a
//! trained network.

use std::collections::HashMap;

use crate::diffcore::{Graph, Var};
use crate::error::{Error, Result};
use crate::flowmodel::{Condition, VelocityField};

/// Per-condition affine field `v(x, t, c) = (gain + time_gain * t) * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    dim: usize,
    default: Affine,
    per_condition: HashMap<Condition, Affine>,
}

#[derive(Debug, Clone, PartialEq)]
struct Affine {
    gain: f64,
    time_gain: f64,
    offset: Vec<f64>,
}

impl AffineField {
    /// `v ≡ 0` everywhere.
    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    /// `v ≡ c` everywhere.
    pub fn constant(c: Vec<f64>) -> Self {
        Self {
            dim: c.len(),
            default: Affine {
                gain: 0.0,
                time_gain: 0.0,
                offset: c,
            },
            per_condition: HashMap::new(),
        }
    }

    /// Same affine map under every condition.
    pub fn affine(gain: f64, time_gain: f64, offset: Vec<f64>) -> Self {
        Self {
            dim: offset.len(),
            default: Affine {
                gain,
                time_gain,
                offset,
            },
            per_condition: HashMap::new(),
        }
    }

    /// Overrides the field under condition `c`.
    pub fn with_condition(mut self, c: Condition, gain: f64, time_gain: f64, offset: Vec<f64>) -> Self {
        assert_eq!(offset.len(), self.dim, "offset dimension");
        self.per_condition.insert(
            c,
            Affine {
                gain,
                time_gain,
                offset,
            },
        );
        self
    }

    fn pick(&self, c: Condition) -> &Affine {
        self.per_condition.get(&c).unwrap_or(&self.default)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::invalid(format!(
                "state of dimension {len}, field expects {}",
                self.dim
            )));
        }
        Ok(())
    }
}

impl VelocityField for AffineField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &[f64], t: f64, c: Condition) -> Result<Vec<f64>> {
        self.check(x.len())?;
        let a = self.pick(c);
        let k = a.gain + a.time_gain * t;
        Ok(x.iter().zip(&a.offset).map(|(x, o)| k * x + o).collect())
    }

    fn velocity_tracked(&self, g: &mut Graph, x: Var, t: f64, c: Condition) -> Result<Var> {
        self.check(g.value(x).len())?;
        let a = self.pick(c);
        let k = a.gain + a.time_gain * t;
        let scaled = g.scale(x, k)?;
        let offset = g.constant(g.shape(x).to_vec(), a.offset.clone())?;
        g.add(scaled, offset)
    }
}
