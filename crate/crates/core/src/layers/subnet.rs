//! The SE-residual subnetwork used for every image- and k-space-domain stage.
//!
//! ```text
//! x -> lift conv (in -> hidden)
//!   -> blocks x [ h + SE(conv(relu(conv(h)))) ]
//!   -> project conv (hidden -> in) -> + x
//! ```
//!
//! With every weight and bias at zero each convolution outputs zero, every
//! block passes its input through, and the global skip makes the whole
//! subnetwork the identity.

use super::activation::{relu_backward, relu_forward};
use super::conv::{conv2d_backward, conv2d_forward};
use super::params::{join, Conv2d, ParamSet};
use super::se::{check_reduction, se_block_backward, se_block_forward, SqueezeExcitation};
use super::tape::Tape;
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::RealTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubnetConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub se_reduction: usize,
    pub blocks: usize,
}

impl SubnetConfig {
    /// Defaults for `coils` complex input channels.
    pub fn for_coils(coils: usize) -> Self {
        Self {
            in_channels: 2 * coils,
            hidden_channels: 32,
            kernel: 3,
            se_reduction: 8,
            blocks: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::Parameter("channel counts must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Parameter(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        check_reduction(self.hidden_channels, self.se_reduction)
            .map_err(|_| Error::Parameter(format!(
                "hidden channels {} not divisible by SE reduction {}",
                self.hidden_channels, self.se_reduction
            )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub se: SqueezeExcitation,
}

impl ParamSet for ResidualBlock {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.se.visit(&join(prefix, "se"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.se.visit_mut(&join(prefix, "se"), f);
    }
}

/// Learnable weights of one subnetwork.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnetParams {
    pub lift: Conv2d,
    pub blocks: Vec<ResidualBlock>,
    pub project: Conv2d,
}

impl SubnetParams {
    pub fn zeros(cfg: &SubnetConfig) -> Self {
        let (c, h, k) = (cfg.in_channels, cfg.hidden_channels, cfg.kernel);
        Self {
            lift: Conv2d::zeros(c, h, k),
            blocks: (0..cfg.blocks)
                .map(|_| ResidualBlock {
                    conv1: Conv2d::zeros(h, h, k),
                    conv2: Conv2d::zeros(h, h, k),
                    se: SqueezeExcitation::zeros(h, cfg.se_reduction),
                })
                .collect(),
            project: Conv2d::zeros(h, c, k),
        }
    }

    /// Whether every tensor has the shape `cfg` implies.
    pub fn matches(&self, cfg: &SubnetConfig) -> bool {
        let reference = Self::zeros(cfg);
        let a = self.named_tensors();
        let b = reference.named_tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }
}

impl ParamSet for SubnetParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        self.lift.visit(&join(prefix, "lift"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.project.visit(&join(prefix, "project"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        self.lift.visit_mut(&join(prefix, "lift"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
        self.project.visit_mut(&join(prefix, "project"), f);
    }
}

/// He-uniform weights for the lift conv and every block, zero biases, and a
/// zero projection conv so a freshly initialized subnet is the identity.
pub fn init_params(cfg: &SubnetConfig, rng: &mut Rng) -> Result<SubnetParams> {
    cfg.validate()?;
    let (c, h, k) = (cfg.in_channels, cfg.hidden_channels, cfg.kernel);
    let lift = Conv2d::he_uniform(c, h, k, rng);
    let blocks = (0..cfg.blocks)
        .map(|_| ResidualBlock {
            conv1: Conv2d::he_uniform(h, h, k, rng),
            conv2: Conv2d::he_uniform(h, h, k, rng),
            se: SqueezeExcitation::he_uniform(h, cfg.se_reduction, rng),
        })
        .collect();
    let project = Conv2d::zeros(h, c, k);
    Ok(SubnetParams {
        lift,
        blocks,
        project,
    })
}

pub fn subnet_forward(
    x: &RealTensor,
    p: &SubnetParams,
    cfg: &SubnetConfig,
    mut tape: Option<&mut Tape>,
) -> Result<RealTensor> {
    if x.shape().len() != 3 || x.shape()[0] != cfg.in_channels {
        return shape_err(format!(
            "subnet expects ({}, H, W) input, got {:?}",
            cfg.in_channels,
            x.shape()
        ));
    }
    if !p.matches(cfg) {
        return shape_err("subnet parameters do not match the configuration");
    }
    let mut h = conv2d_forward(x, &p.lift, tape.as_deref_mut())?;
    for b in &p.blocks {
        let t = conv2d_forward(&h, &b.conv1, tape.as_deref_mut())?;
        let t = relu_forward(&t, tape.as_deref_mut());
        let t = conv2d_forward(&t, &b.conv2, tape.as_deref_mut())?;
        let t = se_block_forward(&t, &b.se, tape.as_deref_mut())?;
        h.add_assign(&t)?;
    }
    let mut out = conv2d_forward(&h, &p.project, tape)?;
    out.add_assign(x)?;
    Ok(out)
}

/// Reverse of [`subnet_forward`]; returns `(grad_x, grad_params)`.
pub fn subnet_backward(
    grad_out: &RealTensor,
    p: &SubnetParams,
    tape: &mut Tape,
) -> Result<(RealTensor, SubnetParams)> {
    let (mut grad_h, project) = conv2d_backward(grad_out, &p.project, tape)?;
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in p.blocks.iter().rev() {
        // h_out = h_in + branch(h_in): the skip passes grad_h unchanged
        let (g, se) = se_block_backward(&grad_h, &b.se, tape)?;
        let (g, conv2) = conv2d_backward(&g, &b.conv2, tape)?;
        let g = relu_backward(&g, tape)?;
        let (g, conv1) = conv2d_backward(&g, &b.conv1, tape)?;
        grad_h.add_assign(&g)?;
        blocks.push(ResidualBlock { conv1, conv2, se });
    }
    blocks.reverse();
    let (mut grad_x, lift) = conv2d_backward(&grad_h, &p.lift, tape)?;
    grad_x.add_assign(grad_out)?;
    Ok((
        grad_x,
        SubnetParams {
            lift,
            blocks,
            project,
        },
    ))
}
