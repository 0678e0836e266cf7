use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Seeded weight initializer.
#[derive(Clone, Debug)]
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-limit..limit)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape product")
    }

    /// Glorot init for a `[kh, kw, cin, cout]` convolution kernel.
    pub fn conv_kernel(&mut self, kh: usize, kw: usize, cin: usize, cout: usize) -> Tensor {
        self.glorot(&[kh, kw, cin, cout], kh * kw * cin, kh * kw * cout)
    }

    pub fn dense(&mut self, din: usize, dout: usize) -> Tensor {
        self.glorot(&[din, dout], din, dout)
    }
}
