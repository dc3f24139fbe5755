//! Differentiable layers with hand-written backward passes.
//!
//! Every forward function optionally records what its backward needs on a
//! [`Tape`]; backward functions pop their node, so a tape must be unwound in
//! the exact reverse order it was filled.

mod activation;
mod conv;
mod gemm;
mod params;
mod se;
mod subnet;
mod tape;

pub use activation::{global_avg_pool, relu_backward, relu_forward, sigmoid};
pub use conv::{conv2d_backward, conv2d_forward};
pub use params::{Conv2d, Linear, ParamSet};
pub use se::{se_block_backward, se_block_forward, SqueezeExcitation};
pub use subnet::{
    init_params, subnet_backward, subnet_forward, ResidualBlock, SubnetConfig, SubnetParams,
};
pub use tape::Tape;
