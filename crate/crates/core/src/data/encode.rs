//! Turning static images into per-timestep network input.

use crate::error::{Result, SlampError};
use crate::rng::Rng;
use crate::tensor::Tensor;

fn check_unit_range(image: &Tensor) -> Result<()> {
    match image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&v) => Err(SlampError::OutOfRange {
            name: "pixel value",
            value: v as f64,
        }),
        None => Ok(()),
    }
}

/// Direct-current encoding: the pixel intensities are injected unchanged at
/// every one of `timesteps` steps. Returns `[T, n]`.
pub fn encode_direct(image: &Tensor, timesteps: usize) -> Result<Tensor> {
    check_unit_range(image)?;
    let n = image.len();
    let mut data = Vec::with_capacity(timesteps * n);
    for _ in 0..timesteps {
        data.extend_from_slice(image.data());
    }
    Tensor::new(vec![timesteps, n], data)
}

/// Rate encoding: each pixel spikes independently at each step with
/// probability equal to its intensity. Returns binary `[T, n]`.
pub fn encode_poisson(image: &Tensor, timesteps: usize, rng: &mut Rng) -> Result<Tensor> {
    check_unit_range(image)?;
    let n = image.len();
    let mut data = Vec::with_capacity(timesteps * n);
    for _ in 0..timesteps {
        for &p in image.data() {
            data.push(if rng.next_f32() < p { 1.0 } else { 0.0 });
        }
    }
    Tensor::new(vec![timesteps, n], data)
}
