//! Adam and the epoch loop.
//!
//! Each epoch visits the training cases in the order of a permutation drawn
//! from `derive_seed(derive_seed(seed, SHUFFLE_STREAM), epoch)`, and initial
//! weights come from `derive_seed(seed, INIT_STREAM)`. Because every stream
//! is addressed by `(seed, epoch)` rather than carried as state, a run resumed
//! from a checkpoint at step `s` continues exactly where the uninterrupted run
//! would be.

use std::path::PathBuf;

use crate::cascade::{loss_and_gradients, CascadeConfig, ModelParams};
use crate::error::{shape_err, Error, Result};
use crate::layers::ParamSet;
use crate::metrics::nmse_percent;
use crate::phantom::rss_combine;
use crate::rng::{derive_seed, Rng};
use crate::sampling::UndersampledSample;
use crate::storage::{save_checkpoint, Checkpoint};
use crate::tensor::RealTensor;

pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;

/// Bias-corrected Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Vec<RealTensor>,
    pub second_moment: Vec<RealTensor>,
}

impl OptimState {
    /// Zero moments shaped like `params`, with `beta1 = 0.9`,
    /// `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new<P: ParamSet + ?Sized>(params: &P, lr: f64) -> Self {
        let zeros: Vec<RealTensor> = params
            .named_tensors()
            .into_iter()
            .map(|(_, t)| t.zeros_like())
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

pub fn adam_step<P: ParamSet + ?Sized>(params: &mut P, grads: &P, state: &mut OptimState) -> Result<()> {
    let g = grads.named_tensors();
    let n = g.len();
    if state.first_moment.len() != n || state.second_moment.len() != n {
        return shape_err(format!(
            "optimizer tracks {} tensors, gradients have {n}",
            state.first_moment.len()
        ));
    }
    let mut p = params.tensors_mut();
    if p.len() != n {
        return shape_err(format!("{} parameters vs {n} gradients", p.len()));
    }
    for i in 0..n {
        let shape = g[i].1.shape();
        if p[i].shape() != shape
            || state.first_moment[i].shape() != shape
            || state.second_moment[i].shape() != shape
        {
            return shape_err(format!("shape mismatch at {}", g[i].0));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..n {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((w, &gv), mv), vv) in p[i]
            .data_mut()
            .iter_mut()
            .zip(g[i].1.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<u64>,
    /// Evaluate validation image NMSE% every this many steps.
    pub validate_every: Option<u64>,
    /// Write a checkpoint every this many steps and at the end.
    pub checkpoint_every: Option<u64>,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 1,
            seed: 17,
            lr: 1e-3,
            max_steps: None,
            validate_every: None,
            checkpoint_every: None,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.validate_every == Some(0) || self.checkpoint_every == Some(0) {
            return Err(Error::Parameter("cadences must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based optimizer step.
    pub step: u64,
    /// Mean total loss over the batch.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub optim: OptimState,
    pub history: Vec<StepRecord>,
    /// `(step, mean validation image NMSE%)`
    pub validation: Vec<(u64, f64)>,
}

/// Initial weights for a run seeded with `seed`.
pub fn initial_params(ccfg: &CascadeConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::init(ccfg, &mut Rng::new(derive_seed(seed, INIT_STREAM)))
}

/// Visiting order of epoch `epoch`.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    Rng::new(derive_seed(derive_seed(seed, SHUFFLE_STREAM), epoch)).permutation(n)
}

/// Mean RSS-image NMSE% of the model over `cases`.
pub fn validation_nmse(
    cases: &[UndersampledSample],
    params: &ModelParams,
    ccfg: &CascadeConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, s) in cases.iter().enumerate() {
        let case = |e: Error| Error::Case { index: i, source: Box::new(e) };
        let k_full = s.k_full.as_ref().ok_or(Error::MissingGroundTruth("k_full")).map_err(case)?;
        let truth = rss_combine(&crate::fourier::ifft2c(k_full));
        let pred = crate::cascade::reconstruct(s, params, ccfg).map_err(case)?;
        total += nmse_percent(&pred, &truth).map_err(case)?;
    }
    Ok(total / cases.len() as f64)
}

/// Train from the seeded initialization.
pub fn train(
    dataset: &[UndersampledSample],
    cfg: &TrainConfig,
    ccfg: &CascadeConfig,
) -> Result<TrainOutcome> {
    train_with(dataset, &[], cfg, ccfg, None, &mut |_| {})
}

/// Full training entry point. `resume` continues from saved parameters and
/// optimizer state (the step counter decides where in the epoch schedule
/// to pick up); `on_step` sees every step record as it is produced.
pub fn train_with(
    dataset: &[UndersampledSample],
    validation: &[UndersampledSample],
    cfg: &TrainConfig,
    ccfg: &CascadeConfig,
    resume: Option<(ModelParams, OptimState)>,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ccfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some((i, _)) = dataset.iter().enumerate().find(|(_, s)| s.k_full.is_none()) {
        return Err(Error::Case {
            index: i,
            source: Box::new(Error::MissingGroundTruth("k_full")),
        });
    }
    let (mut params, mut optim) = match resume {
        Some((p, o)) => {
            if !p.matches(ccfg) {
                return Err(Error::ConfigMismatch("resumed parameters do not match config".into()));
            }
            (p, o)
        }
        None => {
            let p = initial_params(ccfg, cfg.seed)?;
            let o = OptimState::new(&p, cfg.lr);
            (p, o)
        }
    };

    let n = dataset.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let mut total_steps = cfg.epochs * steps_per_epoch;
    if let Some(max) = cfg.max_steps {
        total_steps = total_steps.min(max);
    }
    let mut history = Vec::new();
    let mut val_log = Vec::new();

    while optim.step < total_steps {
        let epoch = optim.step / steps_per_epoch;
        let order = epoch_order(cfg.seed, epoch, n);
        let first_batch = (optim.step % steps_per_epoch) as usize;
        for batch in order.chunks(cfg.batch_size).skip(first_batch) {
            if optim.step >= total_steps {
                break;
            }
            let mut grad_sum: Option<ModelParams> = None;
            let mut loss_sum = 0.0;
            for &idx in batch {
                let (report, grads) = loss_and_gradients(&dataset[idx], &params, ccfg)
                    .map_err(|e| Error::Case { index: idx, source: Box::new(e) })?;
                if !report.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step: optim.step + 1,
                        loss: report.total,
                    });
                }
                loss_sum += report.total;
                match grad_sum.as_mut() {
                    None => grad_sum = Some(grads),
                    Some(acc) => {
                        for (a, (_, g)) in acc.tensors_mut().into_iter().zip(grads.named_tensors()) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            let mut grads = grad_sum.expect("batch is non-empty");
            if batch.len() > 1 {
                let inv = 1.0 / batch.len() as f64;
                grads.tensors_mut().into_iter().for_each(|t| t.scale(inv));
            }
            adam_step(&mut params, &grads, &mut optim)?;
            let rec = StepRecord {
                step: optim.step,
                loss: loss_sum / batch.len() as f64,
            };
            history.push(rec);
            on_step(&rec);

            if let (Some(every), false) = (cfg.validate_every, validation.is_empty()) {
                if optim.step % every == 0 {
                    val_log.push((optim.step, validation_nmse(validation, &params, ccfg)?));
                }
            }
            if let (Some(every), Some(path)) = (cfg.checkpoint_every, &cfg.checkpoint_path) {
                if optim.step % every == 0 {
                    save_checkpoint(
                        path,
                        &Checkpoint {
                            config: *ccfg,
                            params: params.clone(),
                            optim: optim.clone(),
                        },
                    )?;
                }
            }
        }
    }

    if let Some(path) = &cfg.checkpoint_path {
        save_checkpoint(
            path,
            &Checkpoint {
                config: *ccfg,
                params: params.clone(),
                optim: optim.clone(),
            },
        )?;
    }
    Ok(TrainOutcome {
        params,
        optim,
        history,
        validation: val_log,
    })
}
