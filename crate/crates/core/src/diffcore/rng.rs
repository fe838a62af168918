use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tensor::{check_shape, Tensor};
use crate::error::Result;

/// Addressable random stream keyed by `(seed, counter)`.
///
/// The counter is the ChaCha word position, so any stream can be replayed
/// from a recorded `(seed, counter)` pair with [`RngStream::at`].
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Reopens the stream at a previously observed counter.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut s = Self::new(seed);
        s.rng.set_word_pos(counter as u128);
        s
    }

    /// Independent stream for a labelled sub-experiment, e.g. `(task, editor)`.
    pub fn derive(seed: u64, labels: &[u64]) -> Self {
        Self::new(derive_seed(seed, labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    pub fn normal(&mut self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape)?;
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), self.normal_vec(n))
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Standard-normal tensor of the given shape; advances the stream.
pub fn rng_normal(stream: &mut RngStream, shape: &[usize]) -> Result<Tensor> {
    stream.normal(shape)
}

/// SplitMix64 finaliser folded over the labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut h = mix(seed ^ 0x6a09_e667_f3bc_c909);
    for &l in labels {
        h = mix(h ^ mix(l.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
