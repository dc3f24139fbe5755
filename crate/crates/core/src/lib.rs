//! Dual-domain cascaded reconstruction of undersampled multi-coil MRI.
//!
//! Alternating image-domain and k-space-domain SE-residual subnetworks are
//! chained over `N` iterations, with hard data consistency after every
//! k-space stage and optional cross-iteration residual (CIR) connections
//! that feed the previous iteration's image and k-space into the next
//! stage's input. Everything, including the reverse-mode gradients, is
//! implemented here on plain `f64` buffers.
//!
//! Module map:
//!
//! * [`tensor`], [`rng`]: dense arrays and the deterministic generator
//! * [`fourier`]: centered orthonormal 2D FFT
//! * [`sampling`], [`dc`]: Cartesian masks and data consistency
//! * [`phantom`]: synthetic multi-coil ground truth
//! * [`layers`]: convolution, SE blocks and the residual subnetwork
//! * [`cascade`]: the full graph, loss and backward pass
//! * [`training`]: Adam and the training loop
//! * [`metrics`]: NMSE%, SSIM, paired t-test and reports
//! * [`storage`]: tensor files, checkpoints and PGM export

pub mod cascade;
pub mod dc;
pub mod error;
pub mod fourier;
pub mod layers;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod storage;
pub mod tensor;
pub mod training;

pub use cascade::{CascadeConfig, CascadeTrace, LossReport, ModelParams};
pub use error::{Error, Result};
pub use layers::{ParamSet, SubnetConfig, SubnetParams, Tape};
pub use metrics::MetricsReport;
pub use rng::Rng;
pub use sampling::{MaskPattern, SamplingMask, UndersampledSample};
pub use tensor::{ComplexImage, Norm, RealTensor};
pub use training::{OptimState, TrainConfig};
