//! Squeeze-and-excitation channel gating.
//!
//! `s = mean_hw(x)`, `g = sigmoid(W2 relu(W1 s + b1) + b2)`, `y_c = g_c x_c`.

use super::activation::{global_avg_pool, sigmoid};
use super::params::{join, Linear, ParamSet};
use super::tape::{Node, Tape};
use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::tensor::RealTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SqueezeExcitation {
    /// `(C / r) x C`
    pub squeeze: Linear,
    /// `C x (C / r)`
    pub excite: Linear,
}

impl SqueezeExcitation {
    pub fn zeros(channels: usize, reduction: usize) -> Self {
        let mid = channels / reduction;
        Self {
            squeeze: Linear::zeros(channels, mid),
            excite: Linear::zeros(mid, channels),
        }
    }

    pub fn he_uniform(channels: usize, reduction: usize, rng: &mut Rng) -> Self {
        let mid = channels / reduction;
        Self {
            squeeze: Linear::he_uniform(channels, mid, rng),
            excite: Linear::he_uniform(mid, channels, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.squeeze.inputs()
    }
}

impl ParamSet for SqueezeExcitation {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        self.squeeze.visit(&join(prefix, "squeeze"), f);
        self.excite.visit(&join(prefix, "excite"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        self.squeeze.visit_mut(&join(prefix, "squeeze"), f);
        self.excite.visit_mut(&join(prefix, "excite"), f);
    }
}

/// Check `channels % reduction == 0` and `reduction >= 1`.
pub fn check_reduction(channels: usize, reduction: usize) -> Result<()> {
    if reduction == 0 || channels % reduction != 0 || channels / reduction == 0 {
        return shape_err(format!(
            "{channels} channels are not divisible by reduction {reduction}"
        ));
    }
    Ok(())
}

pub fn se_block_forward(
    x: &RealTensor,
    p: &SqueezeExcitation,
    tape: Option<&mut Tape>,
) -> Result<RealTensor> {
    let &[c, h, w] = x.shape() else {
        return shape_err(format!("expected (channels, H, W), got {:?}", x.shape()));
    };
    let mid = p.squeeze.outputs();
    if p.channels() != c || p.excite.inputs() != mid || p.excite.outputs() != c || mid == 0 {
        return shape_err(format!(
            "squeeze-excitation for {} channels applied to {c}",
            p.channels()
        ));
    }
    let pooled = global_avg_pool(x)?;
    let hidden_pre = p.squeeze.apply(&pooled);
    let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
    let gate: Vec<f64> = p.excite.apply(&hidden).into_iter().map(sigmoid).collect();

    let mut y = x.clone();
    for (plane, g) in y.data_mut().chunks_exact_mut(h * w).zip(&gate) {
        plane.iter_mut().for_each(|v| *v *= g);
    }
    if let Some(t) = tape {
        t.push(Node::SqueezeExcitation {
            input: x.clone(),
            pooled,
            hidden_pre,
            gate,
        });
    }
    Ok(y)
}

pub fn se_block_backward(
    grad_out: &RealTensor,
    p: &SqueezeExcitation,
    tape: &mut Tape,
) -> Result<(RealTensor, SqueezeExcitation)> {
    let Node::SqueezeExcitation {
        input,
        pooled,
        hidden_pre,
        gate,
    } = tape.pop("squeeze-excitation")?
    else {
        unreachable!()
    };
    if !grad_out.same_shape(&input) {
        return shape_err(format!(
            "squeeze-excitation gradient {:?} vs input {:?}",
            grad_out.shape(),
            input.shape()
        ));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let hw = h * w;
    let mid = hidden_pre.len();

    // direct path y = g * x, and dL/dg_c = sum_hw dy * x
    let mut grad_x = grad_out.clone();
    let mut d_gate = vec![0.0; c];
    for ch in 0..c {
        let gy = &grad_out.data()[ch * hw..(ch + 1) * hw];
        let xv = &input.data()[ch * hw..(ch + 1) * hw];
        d_gate[ch] = gy.iter().zip(xv).map(|(a, b)| a * b).sum();
        grad_x.data_mut()[ch * hw..(ch + 1) * hw]
            .iter_mut()
            .for_each(|v| *v *= gate[ch]);
    }

    let d_z: Vec<f64> = d_gate
        .iter()
        .zip(&gate)
        .map(|(d, g)| d * g * (1.0 - g))
        .collect();
    let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();

    let mut grads = SqueezeExcitation::zeros(c, c / mid);
    // excite: z = W2 h + b2
    for o in 0..c {
        for i in 0..mid {
            grads.excite.weight.data_mut()[o * mid + i] = d_z[o] * hidden[i];
        }
    }
    grads.excite.bias.data_mut().copy_from_slice(&d_z);
    let mut d_hidden_pre = vec![0.0; mid];
    for i in 0..mid {
        if hidden_pre[i] > 0.0 {
            d_hidden_pre[i] = (0..c)
                .map(|o| p.excite.weight.data()[o * mid + i] * d_z[o])
                .sum();
        }
    }
    // squeeze: a = W1 s + b1
    for o in 0..mid {
        for i in 0..c {
            grads.squeeze.weight.data_mut()[o * c + i] = d_hidden_pre[o] * pooled[i];
        }
    }
    grads.squeeze.bias.data_mut().copy_from_slice(&d_hidden_pre);
    for ch in 0..c {
        let d_s: f64 = (0..mid)
            .map(|o| p.squeeze.weight.data()[o * c + ch] * d_hidden_pre[o])
            .sum();
        let d_pool = d_s / hw as f64;
        grad_x.data_mut()[ch * hw..(ch + 1) * hw]
            .iter_mut()
            .for_each(|v| *v += d_pool);
    }
    Ok((grad_x, grads))
}
