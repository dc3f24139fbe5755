//! Stride-1, same-padded 2D cross-correlation lowered to a matrix product.
//!
//! For input `(Cin, H, W)` the column matrix has one row per
//! `(ci, ky, kx)` triple and one column per output pixel; the forward pass is
//! `W (Cout x Cin*k*k) * cols + b`. The backward pass rebuilds the column
//! matrix from the cached input instead of storing it.

use super::gemm::{gemm, Mat};
use super::params::Conv2d;
use super::tape::{Node, Tape};
use crate::error::{shape_err, Result};
use crate::tensor::RealTensor;

fn dims3(x: &RealTensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => shape_err(format!("expected (channels, H, W), got {:?}", x.shape())),
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let hw = h * w;
    let mut cols = vec![0.0; c * k * k * hw];
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                // output x range whose source column x + kx - pad is in bounds
                let x_lo = pad.saturating_sub(kx);
                let x_hi = (w + pad).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let src = &plane[sy * w + x_lo + kx - pad..sy * w + x_hi + kx - pad];
                    row[y * w + x_lo..y * w + x_hi].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = k / 2;
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let x_lo = pad.saturating_sub(kx);
                let x_hi = (w + pad).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let dst = &mut plane[sy * w + x_lo + kx - pad..sy * w + x_hi + kx - pad];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + x_lo..y * w + x_hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

/// Same-padded convolution of a `(Cin, H, W)` tensor; output `(Cout, H, W)`.
pub fn conv2d_forward(x: &RealTensor, p: &Conv2d, tape: Option<&mut Tape>) -> Result<RealTensor> {
    p.check()?;
    let (c, h, w) = dims3(x)?;
    if c != p.in_channels() {
        return shape_err(format!(
            "conv expects {} input channels, got {c}",
            p.in_channels()
        ));
    }
    let k = p.kernel();
    let cout = p.out_channels();
    let hw = h * w;
    let cols = im2col(x.data(), c, h, w, k);
    let mut out = vec![0.0; cout * hw];
    for (o, &b) in out.chunks_exact_mut(hw).zip(p.bias.data()) {
        o.fill(b);
    }
    gemm(
        Mat::new(p.weight.data(), cout, c * k * k),
        Mat::new(&cols, c * k * k, hw),
        1.0,
        &mut out,
    );
    if let Some(t) = tape {
        t.push(Node::Conv2d { input: x.clone() });
    }
    RealTensor::from_vec(&[cout, h, w], out)
}

/// Returns `(grad_x, grad_params)` for the most recent conv node on the tape.
pub fn conv2d_backward(
    grad_out: &RealTensor,
    p: &Conv2d,
    tape: &mut Tape,
) -> Result<(RealTensor, Conv2d)> {
    let Node::Conv2d { input } = tape.pop("conv2d")? else {
        unreachable!()
    };
    let (c, h, w) = dims3(&input)?;
    let k = p.kernel();
    let cout = p.out_channels();
    if grad_out.shape() != [cout, h, w] {
        return shape_err(format!(
            "conv gradient {:?} does not match output ({cout}, {h}, {w})",
            grad_out.shape()
        ));
    }
    let hw = h * w;
    let g = grad_out.data();
    let cols = im2col(input.data(), c, h, w, k);

    let mut grads = Conv2d::zeros(c, cout, k);
    for (b, row) in grads.bias.data_mut().iter_mut().zip(g.chunks_exact(hw)) {
        *b = row.iter().sum();
    }
    gemm(
        Mat::new(g, cout, hw),
        Mat::new(&cols, c * k * k, hw).t(),
        0.0,
        grads.weight.data_mut(),
    );

    let mut grad_cols = vec![0.0; c * k * k * hw];
    gemm(
        Mat::new(p.weight.data(), cout, c * k * k).t(),
        Mat::new(g, cout, hw),
        0.0,
        &mut grad_cols,
    );
    let grad_x = RealTensor::from_vec(&[c, h, w], col2im(&grad_cols, c, h, w, k))?;
    Ok((grad_x, grads))
}
