//! The dual-domain cascade.
//!
//! For iteration `i` (1-based), with `K_S` the measured k-space, `F` the
//! centered FFT, `D` hard data consistency and `H` a subnetwork:
//!
//! ```text
//! I_1 = H_I1(F^-1(K_S))
//! I_i = H_Ii(F^-1(K_{i-1}) + I_{i-1})                 i >= 2
//! K_1 = D(H_K1(D(F(I_1), K_S)), K_S)
//! K_i = D(H_Ki(D(F(I_i) + K_{i-1}, K_S)), K_S)        i >= 2
//! R_out = rss(F^-1(K_N))
//! ```
//!
//! The `+ I_{i-1}` and `+ K_{i-1}` terms are the cross-iteration residual
//! (CIR) edges; with `cir_enabled = false` they are dropped and nothing else
//! changes. Complex data enters the subnetworks as `2C` real channels.
//!
//! The loss is `sum_i lambda_I * l_I,i + lambda_K * l_K,i` with mean squared
//! complex errors against `F^-1(k_full)` and `k_full`.
//!
//! Gradients of complex quantities are stored as `dL/dRe + i dL/dIm`. With
//! that convention a unitary transform's backward is its adjoint, so `F`
//! backpropagates through `F^-1` and vice versa.

use std::collections::BTreeMap;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::dc::{data_consistency, data_consistency_backward};
use crate::error::{shape_err, Error, Result};
use crate::fourier::{fft2c, ifft2c};
use crate::layers::{
    init_params, subnet_backward, subnet_forward, ParamSet, SubnetConfig, SubnetParams, Tape,
};
use crate::phantom::rss_combine;
use crate::rng::Rng;
use crate::sampling::UndersampledSample;
use crate::tensor::{channels_to_complex, complex_to_channels, ComplexImage, Norm, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeConfig {
    pub iterations: usize,
    pub cir_enabled: bool,
    pub subnet: SubnetConfig,
    pub lambda_image: f64,
    pub lambda_kspace: f64,
}

impl CascadeConfig {
    /// Two iterations with CIR, default subnetworks, both loss weights 0.5.
    pub fn for_coils(coils: usize) -> Self {
        Self {
            iterations: 2,
            cir_enabled: true,
            subnet: SubnetConfig::for_coils(coils),
            lambda_image: 0.5,
            lambda_kspace: 0.5,
        }
    }

    pub fn coils(&self) -> usize {
        self.subnet.in_channels / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("at least one iteration is required".into()));
        }
        if !(self.lambda_image >= 0.0 && self.lambda_kspace >= 0.0) {
            return Err(Error::Parameter("loss weights must be non-negative".into()));
        }
        if self.subnet.in_channels % 2 != 0 {
            return Err(Error::Parameter(
                "subnet input channels must be even (real and imaginary per coil)".into(),
            ));
        }
        self.subnet.validate()
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("blocks", self.subnet.blocks.to_string()),
            ("cir", self.cir_enabled.to_string()),
            ("hidden", self.subnet.hidden_channels.to_string()),
            ("in_channels", self.subnet.in_channels.to_string()),
            ("iterations", self.iterations.to_string()),
            ("kernel", self.subnet.kernel.to_string()),
            ("lambda_image", format!("{:?}", self.lambda_image)),
            ("lambda_kspace", format!("{:?}", self.lambda_kspace)),
            ("se_reduction", self.subnet.se_reduction.to_string()),
        ])
    }

    /// Sorted `key=value` lines, one per field.
    pub fn canonical_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_canonical_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line without '=': {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        fn get<T: std::str::FromStr>(m: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
            m.get(key)
                .ok_or_else(|| Error::Format(format!("config key {key} missing")))?
                .parse()
                .map_err(|_| Error::Format(format!("config key {key} is malformed")))
        }
        let cfg = Self {
            iterations: get(&map, "iterations")?,
            cir_enabled: get(&map, "cir")?,
            subnet: SubnetConfig {
                in_channels: get(&map, "in_channels")?,
                hidden_channels: get(&map, "hidden")?,
                kernel: get(&map, "kernel")?,
                se_reduction: get(&map, "se_reduction")?,
                blocks: get(&map, "blocks")?,
            },
            lambda_image: get(&map, "lambda_image")?,
            lambda_kspace: get(&map, "lambda_kspace")?,
        };
        if map.len() != cfg.entries().len() {
            return Err(Error::Format("config has unknown keys".into()));
        }
        cfg.validate()
            .map_err(|e| Error::Format(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn digest(&self) -> [u8; 32] {
        let d = Sha256::digest(self.canonical_text().as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(d.as_slice());
        out
    }
}

/// Independent subnetworks for every iteration of both domains.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub image_nets: Vec<SubnetParams>,
    pub kspace_nets: Vec<SubnetParams>,
}

impl ModelParams {
    /// All-zero weights: every subnetwork is the identity.
    pub fn zeros(cfg: &CascadeConfig) -> Self {
        Self {
            image_nets: (0..cfg.iterations)
                .map(|_| SubnetParams::zeros(&cfg.subnet))
                .collect(),
            kspace_nets: (0..cfg.iterations)
                .map(|_| SubnetParams::zeros(&cfg.subnet))
                .collect(),
        }
    }

    /// He-uniform initialization, drawn in the order I-Net 1, K-Net 1,
    /// I-Net 2, K-Net 2, ...
    pub fn init(cfg: &CascadeConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut image_nets = Vec::with_capacity(cfg.iterations);
        let mut kspace_nets = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            image_nets.push(init_params(&cfg.subnet, rng)?);
            kspace_nets.push(init_params(&cfg.subnet, rng)?);
        }
        Ok(Self {
            image_nets,
            kspace_nets,
        })
    }

    pub fn matches(&self, cfg: &CascadeConfig) -> bool {
        self.image_nets.len() == cfg.iterations
            && self.kspace_nets.len() == cfg.iterations
            && self
                .image_nets
                .iter()
                .chain(&self.kspace_nets)
                .all(|p| p.matches(&cfg.subnet))
    }
}

impl ParamSet for ModelParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a RealTensor)) {
        for (i, p) in self.image_nets.iter().enumerate() {
            p.visit(&format!("{prefix}inet{}", i + 1), f);
        }
        for (i, p) in self.kspace_nets.iter().enumerate() {
            p.visit(&format!("{prefix}knet{}", i + 1), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut RealTensor)) {
        for (i, p) in self.image_nets.iter_mut().enumerate() {
            p.visit_mut(&format!("{prefix}inet{}", i + 1), f);
        }
        for (i, p) in self.kspace_nets.iter_mut().enumerate() {
            p.visit_mut(&format!("{prefix}knet{}", i + 1), f);
        }
    }
}

/// Outputs of one iteration plus the tapes of its two subnetworks.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    /// `I_i`
    pub image: ComplexImage,
    /// `K_i`
    pub kspace: ComplexImage,
    image_tape: Option<Tape>,
    kspace_tape: Option<Tape>,
}

#[derive(Clone, Debug)]
pub struct CascadeTrace {
    pub iterations: Vec<IterationRecord>,
    /// `rss(F^-1(K_N))`
    pub r_out: RealTensor,
}

impl CascadeTrace {
    /// `K_N`
    pub fn final_kspace(&self) -> &ComplexImage {
        &self.iterations.last().expect("trace has at least one iteration").kspace
    }

    /// Whether a backward pass can still consume this trace.
    pub fn has_tapes(&self) -> bool {
        self.iterations
            .iter()
            .all(|r| r.image_tape.is_some() && r.kspace_tape.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub image_terms: Vec<f64>,
    pub kspace_terms: Vec<f64>,
    /// `lambda_I * l_I,i + lambda_K * l_K,i`
    pub iteration_totals: Vec<f64>,
    pub total: f64,
}

fn apply_subnet(
    z: &ComplexImage,
    p: &SubnetParams,
    cfg: &SubnetConfig,
    tape: Option<&mut Tape>,
) -> Result<ComplexImage> {
    channels_to_complex(&subnet_forward(&complex_to_channels(z), p, cfg, tape)?)
}

fn check_inputs(sample: &UndersampledSample, params: &ModelParams, cfg: &CascadeConfig) -> Result<()> {
    cfg.validate()?;
    if !params.matches(cfg) {
        return Err(Error::ConfigMismatch(
            "model parameters do not match the cascade configuration".into(),
        ));
    }
    if 2 * sample.k_sparse.coils() != cfg.subnet.in_channels {
        return Err(Error::ConfigMismatch(format!(
            "model expects {} coils, sample has {}",
            cfg.coils(),
            sample.k_sparse.coils()
        )));
    }
    if sample.mask.width() != sample.k_sparse.width() {
        return shape_err(format!(
            "mask width {} vs k-space width {}",
            sample.mask.width(),
            sample.k_sparse.width()
        ));
    }
    Ok(())
}

fn run(
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
    record: bool,
) -> Result<CascadeTrace> {
    check_inputs(sample, params, cfg)?;
    let ks = &sample.k_sparse;
    let mask = &sample.mask;
    let mut iterations: Vec<IterationRecord> = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let image_in = match iterations.last() {
            None => ifft2c(ks),
            Some(prev) => {
                let mut a = ifft2c(&prev.kspace);
                if cfg.cir_enabled {
                    a.add_assign(&prev.image)?;
                }
                a
            }
        };
        let mut image_tape = record.then(Tape::new);
        let image = apply_subnet(&image_in, &params.image_nets[i], &cfg.subnet, image_tape.as_mut())?;

        let mut k_in = fft2c(&image);
        if let (true, Some(prev)) = (cfg.cir_enabled, iterations.last()) {
            k_in.add_assign(&prev.kspace)?;
        }
        let k_a = data_consistency(&k_in, ks, mask)?;
        let mut kspace_tape = record.then(Tape::new);
        let k_b = apply_subnet(&k_a, &params.kspace_nets[i], &cfg.subnet, kspace_tape.as_mut())?;
        let kspace = data_consistency(&k_b, ks, mask)?;

        iterations.push(IterationRecord {
            image,
            kspace,
            image_tape,
            kspace_tape,
        });
    }
    let r_out = rss_combine(&ifft2c(&iterations.last().expect("iterations >= 1").kspace));
    Ok(CascadeTrace { iterations, r_out })
}

/// Forward pass recording everything the backward pass needs.
pub fn forward(
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
) -> Result<CascadeTrace> {
    run(sample, params, cfg, true)
}

/// Forward pass without tapes; returns the RSS magnitude of `F^-1(K_N)`.
pub fn reconstruct(
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
) -> Result<RealTensor> {
    Ok(run(sample, params, cfg, false)?.r_out)
}

/// Forward pass without tapes, keeping `K_N` as well as `R_out`.
pub fn predict(
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
) -> Result<(ComplexImage, RealTensor)> {
    let mut trace = run(sample, params, cfg, false)?;
    let k = trace.iterations.pop().expect("iterations >= 1").kspace;
    Ok((k, trace.r_out))
}

struct Targets {
    image: ComplexImage,
    kspace: ComplexImage,
}

fn targets(sample: &UndersampledSample) -> Result<Targets> {
    let k_full = sample
        .k_full
        .as_ref()
        .ok_or(Error::MissingGroundTruth("k_full"))?;
    if !k_full.same_dims(&sample.k_sparse) {
        return shape_err("ground-truth k-space does not match the measurement");
    }
    Ok(Targets {
        image: ifft2c(k_full),
        kspace: k_full.clone(),
    })
}

fn mse(pred: &ComplexImage, truth: &ComplexImage) -> Result<f64> {
    Ok(pred.squared_distance(truth)? / pred.data().len() as f64)
}

pub fn loss(trace: &CascadeTrace, sample: &UndersampledSample, cfg: &CascadeConfig) -> Result<LossReport> {
    let t = targets(sample)?;
    let mut report = LossReport {
        image_terms: Vec::with_capacity(trace.iterations.len()),
        kspace_terms: Vec::with_capacity(trace.iterations.len()),
        iteration_totals: Vec::with_capacity(trace.iterations.len()),
        total: 0.0,
    };
    for rec in &trace.iterations {
        let li = mse(&rec.image, &t.image)?;
        let lk = mse(&rec.kspace, &t.kspace)?;
        let li_total = cfg.lambda_image * li + cfg.lambda_kspace * lk;
        report.image_terms.push(li);
        report.kspace_terms.push(lk);
        report.iteration_totals.push(li_total);
        report.total += li_total;
    }
    Ok(report)
}

/// `scale * (pred - truth)`
fn residual(pred: &ComplexImage, truth: &ComplexImage, scale: f64) -> Result<ComplexImage> {
    Ok(pred.sub(truth)?.scaled(Complex64::new(scale, 0.0)))
}

fn subnet_backward_complex(
    grad: &ComplexImage,
    p: &SubnetParams,
    tape: &mut Tape,
) -> Result<(ComplexImage, SubnetParams)> {
    let (g, grads) = subnet_backward(&complex_to_channels(grad), p, tape)?;
    if !tape.is_empty() {
        return Err(Error::Tape(format!("{} nodes left after subnet backward", tape.len())));
    }
    Ok((channels_to_complex(&g)?, grads))
}

/// Exact gradient of the total loss with respect to every parameter.
/// Consumes the tapes in `trace`; a second call on the same trace fails.
pub fn backward(
    trace: &mut CascadeTrace,
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
) -> Result<ModelParams> {
    check_inputs(sample, params, cfg)?;
    if trace.iterations.len() != cfg.iterations {
        return Err(Error::Trace(format!(
            "trace has {} iterations, config {}",
            trace.iterations.len(),
            cfg.iterations
        )));
    }
    if !trace.has_tapes() {
        return Err(Error::Trace("tapes are missing or already consumed".into()));
    }
    let t = targets(sample)?;
    let mask = &sample.mask;
    let m = t.kspace.data().len() as f64;

    let mut image_grads: Vec<Option<SubnetParams>> = vec![None; cfg.iterations];
    let mut kspace_grads: Vec<Option<SubnetParams>> = vec![None; cfg.iterations];
    // gradients flowing back from iteration i + 1 into its two inputs
    let mut grad_image_in_next: Option<ComplexImage> = None;
    let mut grad_k_in_next: Option<ComplexImage> = None;

    for i in (0..cfg.iterations).rev() {
        let rec = &mut trace.iterations[i];
        let mut image_tape = rec.image_tape.take().expect("checked above");
        let mut kspace_tape = rec.kspace_tape.take().expect("checked above");

        let mut g_k = residual(&rec.kspace, &t.kspace, 2.0 * cfg.lambda_kspace / m)?;
        if let Some(g) = &grad_image_in_next {
            g_k.add_assign(&fft2c(g))?;
        }
        if let (true, Some(g)) = (cfg.cir_enabled, &grad_k_in_next) {
            g_k.add_assign(g)?;
        }
        let g_b = data_consistency_backward(&g_k, mask)?;
        let (g_a, k_grads) = subnet_backward_complex(&g_b, &params.kspace_nets[i], &mut kspace_tape)?;
        let g_k_in = data_consistency_backward(&g_a, mask)?;

        let mut g_img = ifft2c(&g_k_in);
        g_img.add_assign(&residual(&rec.image, &t.image, 2.0 * cfg.lambda_image / m)?)?;
        if let (true, Some(g)) = (cfg.cir_enabled, &grad_image_in_next) {
            g_img.add_assign(g)?;
        }
        let (g_img_in, i_grads) =
            subnet_backward_complex(&g_img, &params.image_nets[i], &mut image_tape)?;

        image_grads[i] = Some(i_grads);
        kspace_grads[i] = Some(k_grads);
        grad_image_in_next = Some(g_img_in);
        grad_k_in_next = Some(g_k_in);
    }

    Ok(ModelParams {
        image_nets: image_grads.into_iter().map(|g| g.expect("filled")).collect(),
        kspace_nets: kspace_grads.into_iter().map(|g| g.expect("filled")).collect(),
    })
}

/// Forward, loss and backward for one sample.
pub fn loss_and_gradients(
    sample: &UndersampledSample,
    params: &ModelParams,
    cfg: &CascadeConfig,
) -> Result<(LossReport, ModelParams)> {
    let mut trace = forward(sample, params, cfg)?;
    let report = loss(&trace, sample, cfg)?;
    let grads = backward(&mut trace, sample, params, cfg)?;
    Ok((report, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{apply_mask, make_mask, MaskPattern};

    fn tiny_cfg() -> CascadeConfig {
        CascadeConfig {
            iterations: 2,
            cir_enabled: true,
            subnet: SubnetConfig {
                in_channels: 2,
                hidden_channels: 4,
                kernel: 3,
                se_reduction: 2,
                blocks: 1,
            },
            lambda_image: 0.5,
            lambda_kspace: 0.5,
        }
    }

    fn sample(seed: u64) -> UndersampledSample {
        let mut rng = Rng::new(seed);
        let data = (0..64)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let k = ComplexImage::from_vec(1, 8, 8, data).unwrap();
        let mask = make_mask(8, 2.0, 0.25, MaskPattern::RandomLines, seed).unwrap();
        apply_mask(&k, &mask).unwrap()
    }

    #[test]
    fn canonical_text_round_trip() {
        let cfg = CascadeConfig::for_coils(4);
        let text = cfg.canonical_text();
        assert!(text.starts_with("blocks=2\ncir=true\n"));
        assert_eq!(CascadeConfig::from_canonical_text(&text).unwrap(), cfg);
        let other = CascadeConfig {
            cir_enabled: false,
            ..cfg
        };
        assert_ne!(cfg.digest(), other.digest());
        assert!(CascadeConfig::from_canonical_text("iterations=2\n").is_err());
    }

    #[test]
    fn backward_twice_is_stale() {
        let cfg = tiny_cfg();
        let params = ModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
        let s = sample(2);
        let mut trace = forward(&s, &params, &cfg).unwrap();
        backward(&mut trace, &s, &params, &cfg).unwrap();
        assert!(matches!(
            backward(&mut trace, &s, &params, &cfg),
            Err(Error::Trace(_))
        ));
    }

    #[test]
    fn loss_needs_ground_truth() {
        let cfg = tiny_cfg();
        let params = ModelParams::zeros(&cfg);
        let mut s = sample(3);
        s.k_full = None;
        let trace = forward(&s, &params, &cfg).unwrap();
        assert!(matches!(
            loss(&trace, &s, &cfg),
            Err(Error::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let cfg = tiny_cfg();
        let params = ModelParams::zeros(&CascadeConfig {
            iterations: 3,
            ..cfg
        });
        assert!(matches!(
            forward(&sample(4), &params, &cfg),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn cir_toggle_keeps_parameter_count() {
        let on = tiny_cfg();
        let off = CascadeConfig {
            cir_enabled: false,
            ..on
        };
        assert_eq!(
            ModelParams::zeros(&on).parameter_count(),
            ModelParams::zeros(&off).parameter_count()
        );
    }
}
