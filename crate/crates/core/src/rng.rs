//! Seeded randomness.
//!
//! All stochastic choices in a run (initialisation, data generation, shuffling,
//! Poisson encoding) draw from [`Rng`], which wraps ChaCha8 from `rand_chacha`.
//! ChaCha8's output stream is fixed by its seed and does not depend on the
//! platform word size or endianness.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SlampError};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-stream of this run's seed.
    pub fn derive(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_f32(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n as u64) as usize
    }

    pub fn normal(&mut self, mean: f32, std: f32) -> f32 {
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std)
            .expect("std must be finite and non-negative")
            .sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Samples uniformly from `[lo, hi)`.
    pub fn uniform(&mut self, shape: &[usize], lo: f32, hi: f32) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| lo + (hi - lo) * self.next_f32()).collect();
        Tensor::new(shape.to_vec(), data).expect("uniform samples are finite")
    }

    /// Samples uniformly from `[0, 1)`.
    pub fn uniform01(&mut self, shape: &[usize]) -> Tensor {
        self.uniform(shape, 0.0, 1.0)
    }

    pub fn bernoulli(&mut self, p: f64, shape: &[usize]) -> Result<Tensor> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SlampError::OutOfRange {
                name: "probability",
                value: p,
            });
        }
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if self.next_f64() < p { 1.0 } else { 0.0 })
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}
