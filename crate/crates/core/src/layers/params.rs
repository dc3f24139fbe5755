use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::RealTensor;

/// A collection of named learnable tensors in a fixed traversal order.
///
/// Gradient containers use the same types as the parameters they belong to,
/// so optimizers and checkpoints can walk parameters, gradients and moments
/// in lockstep.
pub trait ParamSet {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor));

    fn named_tensors(&self) -> Vec<(String, &RealTensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut RealTensor> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |_, t| out.push(t));
        out
    }

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl ParamSet for Vec<RealTensor> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        for (i, t) in self.iter().enumerate() {
            f(join(prefix, &i.to_string()), t);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        for (i, t) in self.iter_mut().enumerate() {
            f(join(prefix, &i.to_string()), t);
        }
    }
}

/// 2D convolution weights `(out, in, k, k)` and bias `(out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: RealTensor,
    pub bias: RealTensor,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            weight: RealTensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: RealTensor::zeros(&[out_channels]),
        }
    }

    /// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`), zero bias.
    pub fn he_uniform(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(in_channels, out_channels, kernel);
        he_fill(&mut p.weight, in_channels * kernel * kernel, rng);
        p
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub(crate) fn check(&self) -> Result<()> {
        let s = self.weight.shape();
        if s.len() != 4 || s[2] != s[3] || s[2] % 2 == 0 || self.bias.shape() != [s[0]] {
            return Err(Error::Shape(format!(
                "conv weight {:?} / bias {:?} inconsistent (kernel must be square and odd)",
                s,
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

impl ParamSet for Conv2d {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Fully connected weights `(out, in)` and bias `(out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: RealTensor,
    pub bias: RealTensor,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: RealTensor::zeros(&[outputs, inputs]),
            bias: RealTensor::zeros(&[outputs]),
        }
    }

    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(inputs, outputs);
        he_fill(&mut p.weight, inputs, rng);
        p
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `W x + b`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.inputs();
        self.weight
            .data()
            .chunks_exact(n_in)
            .zip(self.bias.data())
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

impl ParamSet for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

fn he_fill(t: &mut RealTensor, fan_in: usize, rng: &mut Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
}
