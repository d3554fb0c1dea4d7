//! Inverted dropout. Masks hold the survivor scale 1/(1-rate), so applying a
//! mask is a plain elementwise product in both directions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Draw a scaled dropout mask: each element is 0 with probability `rate`,
/// otherwise 1/(1-rate). Elements are drawn in row-major order.
pub fn draw_mask(shape: &[usize], rate: f64, rng: &mut Prng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate must be in [0,1), got {rate}")));
    }
    let n: usize = shape.iter().product();
    if rate == 0.0 {
        return Tensor::from_vec(shape, vec![1.0; n]);
    }
    let scale = 1.0 / (1.0 - rate);
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    Tensor::from_vec(shape, data)
}

/// Elementwise product of input and mask.
pub fn apply_mask(input: &Tensor, mask: &Tensor) -> Tensor {
    assert_eq!(input.shape(), mask.shape(), "dropout mask shape mismatch");
    let mut out = input.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    out
}

/// Draw a fresh mask and apply it. Returns (output, mask); the mask feeds the
/// backward pass, where the gradient is `grad_output` times the same mask.
pub fn dropout(input: &Tensor, rate: f64, rng: &mut Prng) -> Result<(Tensor, Tensor)> {
    let mask = draw_mask(input.shape(), rate, rng)?;
    Ok((apply_mask(input, &mask), mask))
}
