//! Fully connected layers: y = x W^T + b.

use super::conv::{gemm_a_bt, gemm_at_b, gemm_rowmajor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_dims(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let [n, d_in] = *input.shape() else {
        return Err(Error::config(format!(
            "dense input must be 2-D [N,In], got {:?}",
            input.shape()
        )));
    };
    let [d_out, w_in] = *weight.shape() else {
        return Err(Error::config(format!(
            "dense weight must be 2-D [Out,In], got {:?}",
            weight.shape()
        )));
    };
    if w_in != d_in {
        return Err(Error::config(format!(
            "dense weight expects {w_in} inputs, batch provides {d_in}"
        )));
    }
    if bias.shape() != [d_out] {
        return Err(Error::config(format!(
            "dense bias must have shape [{d_out}], got {:?}",
            bias.shape()
        )));
    }
    Ok((n, d_in, d_out))
}

/// output[n,o] = bias[o] + sum_i input[n,i] * weight[o,i].
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d_in, d_out) = check_dims(input, weight, bias)?;
    let mut out = vec![0.0; n * d_out];
    for row in out.chunks_mut(d_out) {
        row.copy_from_slice(bias.data());
    }
    gemm_a_bt(n, d_in, d_out, 1.0, input.data(), weight.data(), 1.0, &mut out);
    Tensor::from_vec(&[n, d_out], out)
}

/// Returns (grad_input, grad_weight, grad_bias) for the dense layer.
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_output: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let bias_dummy = Tensor::zeros(&[weight.shape()[0]]);
    let (n, d_in, d_out) = check_dims(input, weight, &bias_dummy)?;
    if grad_output.shape() != [n, d_out] {
        return Err(Error::config(format!(
            "dense grad_output must have shape [{n},{d_out}], got {:?}",
            grad_output.shape()
        )));
    }
    // grad_input[n,i] = sum_o grad_output[n,o] * weight[o,i]
    let mut gi = vec![0.0; n * d_in];
    gemm_rowmajor(n, d_out, d_in, 1.0, grad_output.data(), weight.data(), 0.0, &mut gi);
    // grad_weight[o,i] = sum_n grad_output[n,o] * input[n,i]
    let mut gw = vec![0.0; d_out * d_in];
    gemm_at_b(d_out, n, d_in, 1.0, grad_output.data(), input.data(), 0.0, &mut gw);
    let mut gb = vec![0.0; d_out];
    for row in grad_output.data().chunks(d_out) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((
        Tensor::from_vec(&[n, d_in], gi)?,
        Tensor::from_vec(&[d_out, d_in], gw)?,
        Tensor::from_vec(&[d_out], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Prng};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_tensor(shape: &[usize], rng: &mut Prng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn matches_naive_matmul() {
        let mut rng = derive(5, &[1]);
        let input = random_tensor(&[3, 7], &mut rng);
        let weight = random_tensor(&[4, 7], &mut rng);
        let bias = random_tensor(&[4], &mut rng);
        let out = dense_forward(&input, &weight, &bias).unwrap();
        for n in 0..3 {
            for o in 0..4 {
                let mut acc = bias.data()[o];
                for i in 0..7 {
                    acc += input.data()[n * 7 + i] * weight.data()[o * 7 + i];
                }
                assert_abs_diff_eq!(out.data()[n * 4 + o], acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_is_input_transpose_times_upstream() {
        // Single dense layer, identity activation: grad_w = upstream^T x input.
        let mut rng = derive(5, &[2]);
        let input = random_tensor(&[2, 3], &mut rng);
        let weight = random_tensor(&[4, 3], &mut rng);
        let upstream = random_tensor(&[2, 4], &mut rng);
        let (_, gw, gb) = dense_backward(&input, &weight, &upstream).unwrap();
        for o in 0..4 {
            for i in 0..3 {
                let want: f64 = (0..2).map(|n| upstream.data()[n * 4 + o] * input.data()[n * 3 + i]).sum();
                assert_abs_diff_eq!(gw.data()[o * 3 + i], want, epsilon = 1e-12);
            }
            let want: f64 = (0..2).map(|n| upstream.data()[n * 4 + o]).sum();
            assert_abs_diff_eq!(gb.data()[o], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = derive(5, &[3]);
        let input = random_tensor(&[2, 5], &mut rng);
        let weight = random_tensor(&[3, 5], &mut rng);
        let bias = random_tensor(&[3], &mut rng);
        let upstream = random_tensor(&[2, 3], &mut rng);
        let loss = |inp: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let out = dense_forward(inp, w, b).unwrap();
            out.data().iter().zip(upstream.data()).map(|(o, u)| o * u).sum()
        };
        let (gi, gw, _) = dense_backward(&input, &weight, &upstream).unwrap();
        let h = 1e-5;
        for idx in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[idx] += h;
            let mut minus = input.clone();
            minus.data_mut()[idx] -= h;
            let fd = (loss(&plus, &weight, &bias) - loss(&minus, &weight, &bias)) / (2.0 * h);
            assert_abs_diff_eq!(gi.data()[idx], fd, epsilon = 1e-8);
        }
        for idx in 0..weight.len() {
            let mut plus = weight.clone();
            plus.data_mut()[idx] += h;
            let mut minus = weight.clone();
            minus.data_mut()[idx] -= h;
            let fd = (loss(&input, &plus, &bias) - loss(&input, &minus, &bias)) / (2.0 * h);
            assert_abs_diff_eq!(gw.data()[idx], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let input = Tensor::zeros(&[2, 5]);
        let weight = Tensor::zeros(&[3, 6]);
        let bias = Tensor::zeros(&[3]);
        assert!(dense_forward(&input, &weight, &bias).is_err());
    }
}
