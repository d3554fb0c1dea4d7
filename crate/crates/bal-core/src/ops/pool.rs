//! Non-overlapping max pooling with recorded argmax indices.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Max over pool x pool windows. Returns the pooled tensor and, per output
/// element, the flat index into `input` of the window maximum. Ties break to
/// the lowest flat index so the backward pass is deterministic.
pub fn maxpool2d_forward(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = *input.shape() else {
        return Err(Error::config(format!(
            "maxpool input must be 4-D [N,C,H,W], got {:?}",
            input.shape()
        )));
    };
    if pool == 0 || h % pool != 0 || w % pool != 0 {
        return Err(Error::config(format!(
            "maxpool size {pool} does not divide spatial dims {h}x{w}"
        )));
    }
    let (ho, wo) = (h / pool, w / pool);
    let mut out = vec![0.0; n * c * ho * wo];
    let mut argmax = vec![0usize; out.len()];
    let data = input.data();
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best_idx = base + (oh * pool) * w + ow * pool;
                    let mut best = data[best_idx];
                    for ph in 0..pool {
                        for pw in 0..pool {
                            let idx = base + (oh * pool + ph) * w + (ow * pool + pw);
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((ni * c + ci) * ho + oh) * wo + ow;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::from_vec(&[n, c, ho, wo], out)?, argmax))
}

/// Scatter the output gradient back to the recorded argmax positions.
pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_output: &Tensor) -> Tensor {
    assert_eq!(argmax.len(), grad_output.len(), "argmax/grad length mismatch");
    let mut grad = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(grad_output.data()) {
        grad.data_mut()[idx] += g;
    }
    grad
}
