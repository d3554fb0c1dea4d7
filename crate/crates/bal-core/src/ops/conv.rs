//! Valid (no-padding) stride-1 2-D convolution via im2col and GEMM.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// C[m,n] = alpha * A[m,k] * B[k,n] + beta * C, all row-major contiguous.
pub(crate) fn gemm_rowmajor(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Like [`gemm_rowmajor`] but with A transposed: C[m,n] = alpha * A'[k,m]^T * B[k,n] + beta * C.
pub(crate) fn gemm_at_b(m: usize, k: usize, n: usize, alpha: f64, a_t: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a_t.len(), k * m);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a_t.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Like [`gemm_rowmajor`] but with B transposed: C[m,n] = alpha * A[m,k] * B'[n,k]^T + beta * C.
pub(crate) fn gemm_a_bt(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], b_t: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(b_t.len(), n * k);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b_t.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn check_dims(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<ConvDims> {
    let (n, cin, h, w) = match *input.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(Error::config(format!(
                "conv input must be 4-D [N,Cin,H,W], got {:?}",
                input.shape()
            )))
        }
    };
    let (cout, kcin, kh, kw) = match *kernel.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::config(format!(
                "conv kernel must be 4-D [Cout,Cin,K,K], got {:?}",
                kernel.shape()
            )))
        }
    };
    if kh != kw {
        return Err(Error::config(format!("conv kernel must be square, got {kh}x{kw}")));
    }
    if kcin != cin {
        return Err(Error::config(format!(
            "conv kernel expects {kcin} input channels, input has {cin}"
        )));
    }
    if kh > h || kw > w {
        return Err(Error::config(format!(
            "conv kernel {kh}x{kw} does not fit input {h}x{w}"
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::config(format!(
            "conv bias must have shape [{cout}], got {:?}",
            bias.shape()
        )));
    }
    Ok(ConvDims {
        n,
        cin,
        h,
        w,
        cout,
        k: kh,
        ho: h - kh + 1,
        wo: w - kw + 1,
    })
}

/// Unfold input windows into a [Cin*K*K, N*Ho*Wo] matrix whose row order
/// matches the kernel's row-major [Cin][K][K] layout.
fn im2col(input: &[f64], d: &ConvDims) -> Vec<f64> {
    let cols = d.n * d.ho * d.wo;
    let mut m = vec![0.0; d.cin * d.k * d.k * cols];
    for ci in 0..d.cin {
        for kh in 0..d.k {
            for kw in 0..d.k {
                let row = (ci * d.k + kh) * d.k + kw;
                let out_row = &mut m[row * cols..(row + 1) * cols];
                for n in 0..d.n {
                    let img = &input[(n * d.cin + ci) * d.h * d.w..];
                    for oh in 0..d.ho {
                        let src = &img[(oh + kh) * d.w + kw..][..d.wo];
                        out_row[(n * d.ho + oh) * d.wo..][..d.wo].copy_from_slice(src);
                    }
                }
            }
        }
    }
    m
}

/// Scatter-accumulate a column-space gradient back to input layout.
fn col2im_acc(col: &[f64], d: &ConvDims, grad_input: &mut [f64]) {
    let cols = d.n * d.ho * d.wo;
    for ci in 0..d.cin {
        for kh in 0..d.k {
            for kw in 0..d.k {
                let row = (ci * d.k + kh) * d.k + kw;
                let src_row = &col[row * cols..(row + 1) * cols];
                for n in 0..d.n {
                    let img = &mut grad_input[(n * d.cin + ci) * d.h * d.w..][..d.h * d.w];
                    for oh in 0..d.ho {
                        let src = &src_row[(n * d.ho + oh) * d.wo..][..d.wo];
                        let dst = &mut img[(oh + kh) * d.w + kw..][..d.wo];
                        for (a, b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
            }
        }
    }
}

/// Valid convolution, stride 1: output[n,co,oh,ow] = bias[co] +
/// sum over (ci,kh,kw) of kernel[co,ci,kh,kw] * input[n,ci,oh+kh,ow+kw].
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = check_dims(input, kernel, bias)?;
    let col = im2col(input.data(), &d);
    let cols = d.n * d.ho * d.wo;
    let kdim = d.cin * d.k * d.k;
    // out_mat[co, n*Ho*Wo] = kernel_mat[co, kdim] x col[kdim, cols]
    let mut out_mat = vec![0.0; d.cout * cols];
    gemm_rowmajor(d.cout, kdim, cols, 1.0, kernel.data(), &col, 0.0, &mut out_mat);
    // Transpose channel-major GEMM output to [N,Cout,Ho,Wo] and add bias.
    let mut out = vec![0.0; d.n * d.cout * d.ho * d.wo];
    let plane = d.ho * d.wo;
    for co in 0..d.cout {
        let b = bias.data()[co];
        for n in 0..d.n {
            let src = &out_mat[co * cols + n * plane..][..plane];
            let dst = &mut out[(n * d.cout + co) * plane..][..plane];
            for (o, s) in dst.iter_mut().zip(src) {
                *o = s + b;
            }
        }
    }
    Tensor::from_vec(&[d.n, d.cout, d.ho, d.wo], out)
}

/// Gradients of the valid convolution. `grad_output` has the forward output's
/// shape; returns (grad_input, grad_kernel, grad_bias).
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_output: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let bias_dummy = Tensor::zeros(&[kernel.shape()[0]]);
    let d = check_dims(input, kernel, &bias_dummy)?;
    if grad_output.shape() != [d.n, d.cout, d.ho, d.wo] {
        return Err(Error::config(format!(
            "conv grad_output must have shape [{},{},{},{}], got {:?}",
            d.n,
            d.cout,
            d.ho,
            d.wo,
            grad_output.shape()
        )));
    }
    let cols = d.n * d.ho * d.wo;
    let kdim = d.cin * d.k * d.k;
    let plane = d.ho * d.wo;

    // Regroup grad_output to channel-major [Cout, N*Ho*Wo]; bias gradient on the way.
    let mut go_mat = vec![0.0; d.cout * cols];
    let mut grad_bias = vec![0.0; d.cout];
    for n in 0..d.n {
        for co in 0..d.cout {
            let src = &grad_output.data()[(n * d.cout + co) * plane..][..plane];
            go_mat[co * cols + n * plane..][..plane].copy_from_slice(src);
            grad_bias[co] += src.iter().sum::<f64>();
        }
    }

    let col = im2col(input.data(), &d);
    // grad_kernel[co, kdim] = go_mat[co, cols] x col[kdim, cols]^T
    let mut gk = vec![0.0; d.cout * kdim];
    gemm_a_bt(d.cout, cols, kdim, 1.0, &go_mat, &col, 0.0, &mut gk);

    // col_grad[kdim, cols] = kernel_mat[cout, kdim]^T x go_mat[cout, cols]
    let mut col_grad = vec![0.0; kdim * cols];
    gemm_at_b(kdim, d.cout, cols, 1.0, kernel.data(), &go_mat, 0.0, &mut col_grad);
    let mut grad_input = vec![0.0; d.n * d.cin * d.h * d.w];
    col2im_acc(&col_grad, &d, &mut grad_input);

    Ok((
        Tensor::from_vec(&[d.n, d.cin, d.h, d.w], grad_input)?,
        Tensor::from_vec(&[d.cout, d.cin, d.k, d.k], gk)?,
        Tensor::from_vec(&[d.cout], grad_bias)?,
    ))
}
