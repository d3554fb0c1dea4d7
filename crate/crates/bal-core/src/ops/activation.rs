//! relu and the stabilized softmax.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gate the upstream gradient by the forward input's sign. The subgradient at
/// exactly 0 is taken as 0.
pub fn relu_backward(forward_input: &Tensor, grad_output: &Tensor) -> Tensor {
    assert_eq!(forward_input.shape(), grad_output.shape(), "relu shape mismatch");
    let mut grad = grad_output.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(forward_input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// Row-wise softmax with per-row max subtraction. Rows sum to 1 within 1e-12.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [n, c] = *logits.shape() else {
        return Err(Error::config(format!(
            "softmax input must be 2-D [N,C], got {:?}",
            logits.shape()
        )));
    };
    let mut out = vec![0.0; n * c];
    for (row_in, row_out) in logits.data().chunks(c).zip(out.chunks_mut(c)) {
        let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &x) in row_out.iter_mut().zip(row_in) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in row_out {
            *o /= sum;
        }
    }
    Tensor::from_vec(&[n, c], out)
}
