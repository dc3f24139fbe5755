mod common;

use common::{check_param_grads, phantom_samples, random_sample};
use dualcascade::cascade::{backward, forward, loss, loss_and_gradients, predict, reconstruct};
use dualcascade::dc::{data_consistency, data_consistency_backward};
use dualcascade::fourier::{fft2c, ifft2c};
use dualcascade::layers::{init_params, subnet_backward, subnet_forward};
use dualcascade::phantom::rss_combine;
use dualcascade::sampling::{apply_mask, zero_fill_recon};
use dualcascade::tensor::{channels_to_complex, complex_to_channels};
use dualcascade::{
    CascadeConfig, ComplexImage, ModelParams, Norm, ParamSet, Rng, SamplingMask, SubnetConfig,
    SubnetParams, Tape, UndersampledSample,
};
use num_complex::Complex64;

fn tiny_cfg(cir: bool) -> CascadeConfig {
    CascadeConfig {
        iterations: 2,
        cir_enabled: cir,
        subnet: SubnetConfig {
            in_channels: 2,
            hidden_channels: 4,
            kernel: 3,
            se_reduction: 2,
            blocks: 2,
        },
        lambda_image: 0.5,
        lambda_kspace: 0.5,
    }
}

/// Seeded init with every tensor jittered, so no subnet is the identity.
fn random_params(cfg: &CascadeConfig, rng: &mut Rng, scale: f64) -> ModelParams {
    let mut p = ModelParams::init(cfg, rng).unwrap();
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += scale * rng.normal());
    }
    p
}

fn total_loss(s: &UndersampledSample, p: &ModelParams, cfg: &CascadeConfig) -> f64 {
    loss(&forward(s, p, cfg).unwrap(), s, cfg).unwrap().total
}

#[test]
fn full_cascade_gradients_match_finite_differences() {
    let cfg = tiny_cfg(true);
    let mut rng = Rng::new(21);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let p = random_params(&cfg, &mut rng, 0.2);
    let (_, g) = loss_and_gradients(&s, &p, &cfg).unwrap();
    let stride = p.parameter_count() / 60;
    let (err, n) = check_param_grads(&p, &g, stride, 1e-5, |p| total_loss(&s, p, &cfg));
    assert!(n >= 50, "only {n} parameters checked");
    assert!(err < 1e-4, "worst relative error {err}");
}

/// The non-CIR cascade written out by hand from layer primitives.
struct Explicit {
    images: Vec<ComplexImage>,
    kspaces: Vec<ComplexImage>,
    image_tapes: Vec<Tape>,
    kspace_tapes: Vec<Tape>,
}

fn net(z: &ComplexImage, p: &SubnetParams, cfg: &SubnetConfig, tape: &mut Tape) -> ComplexImage {
    channels_to_complex(&subnet_forward(&complex_to_channels(z), p, cfg, Some(tape)).unwrap()).unwrap()
}

fn net_back(g: &ComplexImage, p: &SubnetParams, tape: &mut Tape) -> (ComplexImage, SubnetParams) {
    let (gx, gp) = subnet_backward(&complex_to_channels(g), p, tape).unwrap();
    (channels_to_complex(&gx).unwrap(), gp)
}

fn explicit_forward(s: &UndersampledSample, p: &ModelParams, cfg: &CascadeConfig) -> Explicit {
    let mut e = Explicit {
        images: vec![],
        kspaces: vec![],
        image_tapes: vec![],
        kspace_tapes: vec![],
    };
    let mut k_prev = s.k_sparse.clone();
    for i in 0..cfg.iterations {
        let mut ti = Tape::new();
        let img = net(&ifft2c(&k_prev), &p.image_nets[i], &cfg.subnet, &mut ti);
        let a = data_consistency(&fft2c(&img), &s.k_sparse, &s.mask).unwrap();
        let mut tk = Tape::new();
        let b = net(&a, &p.kspace_nets[i], &cfg.subnet, &mut tk);
        let k = data_consistency(&b, &s.k_sparse, &s.mask).unwrap();
        e.images.push(img);
        e.kspaces.push(k.clone());
        e.image_tapes.push(ti);
        e.kspace_tapes.push(tk);
        k_prev = k;
    }
    e
}

fn explicit_backward(mut e: Explicit, s: &UndersampledSample, p: &ModelParams, cfg: &CascadeConfig) -> ModelParams {
    let k_full = s.k_full.as_ref().unwrap();
    let img_full = ifft2c(k_full);
    let m = k_full.data().len() as f64;
    let scale = |x: &ComplexImage, t: &ComplexImage, lam: f64| {
        x.sub(t).unwrap().scaled(Complex64::new(2.0 * lam / m, 0.0))
    };
    let mut ig = vec![None; cfg.iterations];
    let mut kg = vec![None; cfg.iterations];
    let mut g_next: Option<ComplexImage> = None;
    for i in (0..cfg.iterations).rev() {
        let mut g_k = scale(&e.kspaces[i], k_full, cfg.lambda_kspace);
        if let Some(g) = &g_next {
            // I_{i+1} = H(F^-1 K_i), and the adjoint of F^-1 is F
            g_k.add_assign(&fft2c(g)).unwrap();
        }
        let g_b = data_consistency_backward(&g_k, &s.mask).unwrap();
        let (g_a, gk) = net_back(&g_b, &p.kspace_nets[i], &mut e.kspace_tapes[i]);
        let g_ft = data_consistency_backward(&g_a, &s.mask).unwrap();
        let mut g_img = ifft2c(&g_ft);
        g_img.add_assign(&scale(&e.images[i], &img_full, cfg.lambda_image)).unwrap();
        let (g_in, gi) = net_back(&g_img, &p.image_nets[i], &mut e.image_tapes[i]);
        ig[i] = Some(gi);
        kg[i] = Some(gk);
        g_next = Some(g_in);
    }
    ModelParams {
        image_nets: ig.into_iter().map(Option::unwrap).collect(),
        kspace_nets: kg.into_iter().map(Option::unwrap).collect(),
    }
}

#[test]
fn cir_off_equals_explicit_graph() {
    let cfg = tiny_cfg(false);
    let mut rng = Rng::new(22);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let p = random_params(&cfg, &mut rng, 0.2);

    let trace = forward(&s, &p, &cfg).unwrap();
    let e = explicit_forward(&s, &p, &cfg);
    for i in 0..cfg.iterations {
        assert_eq!(trace.iterations[i].image, e.images[i]);
        assert_eq!(trace.iterations[i].kspace, e.kspaces[i]);
    }
    let (_, g) = loss_and_gradients(&s, &p, &cfg).unwrap();
    let want = explicit_backward(e, &s, &p, &cfg);
    for ((name, a), (_, b)) in g.named_tensors().into_iter().zip(want.named_tensors()) {
        let d = a.squared_distance(b).unwrap().sqrt();
        assert!(d <= 1e-12 * (1.0 + b.l2_norm()), "{name}: {d}");
    }
}

#[test]
fn cir_toggle_changes_the_output() {
    let mut rng = Rng::new(23);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let p = random_params(&tiny_cfg(true), &mut rng, 0.2);
    let on = forward(&s, &p, &tiny_cfg(true)).unwrap();
    let off = forward(&s, &p, &tiny_cfg(false)).unwrap();
    assert!(on.final_kspace().squared_distance(off.final_kspace()).unwrap() > 0.0);
    // the first iteration has no predecessor, so it is shared
    assert_eq!(on.iterations[0].kspace, off.iterations[0].kspace);
}

#[test]
fn measured_columns_are_pinned_in_every_iteration() {
    let cfg = tiny_cfg(true);
    let mut rng = Rng::new(24);
    for _ in 0..10 {
        let s = random_sample(1, 8, 8, 2.0, &mut rng);
        let p = random_params(&cfg, &mut rng, 0.5);
        let trace = forward(&s, &p, &cfg).unwrap();
        for rec in &trace.iterations {
            for (a, b) in rec.kspace.data().chunks(8).zip(s.k_sparse.data().chunks(8)) {
                for col in 0..8 {
                    if s.mask.is_sampled(col) {
                        assert_eq!(a[col], b[col]);
                    }
                }
            }
        }
    }
}

#[test]
fn zero_params_reproduce_zero_filling() {
    let samples = phantom_samples(2, 32, 2, 4.0, 3);
    let cfg = CascadeConfig::for_coils(2);
    let p = ModelParams::zeros(&cfg);
    for s in &samples {
        let r = reconstruct(s, &p, &cfg).unwrap();
        let zf = rss_combine(&zero_fill_recon(s));
        assert!(r.squared_distance(&zf).unwrap().sqrt() < 1e-8);
    }
}

#[test]
fn full_sampling_is_exact_for_any_parameters() {
    let cfg = tiny_cfg(true);
    let mut rng = Rng::new(25);
    let k = common::random_image(1, 8, 8, &mut rng);
    let s = apply_mask(&k, &SamplingMask::full(8)).unwrap();
    let p = random_params(&cfg, &mut rng, 1.0);
    let r = reconstruct(&s, &p, &cfg).unwrap();
    assert!(r.squared_distance(&rss_combine(&ifft2c(&k))).unwrap().sqrt() < 1e-8);

    // without CIR identity nets reproduce the truth at every stage; with CIR
    // the second image input is IFT(K_1) + I_1 = 2 I, so only boundedness holds
    let off = tiny_cfg(false);
    let (report, _) = loss_and_gradients(&s, &ModelParams::zeros(&off), &off).unwrap();
    assert!(report.total < 1e-25);
    let (report, g) = loss_and_gradients(&s, &ModelParams::zeros(&cfg), &cfg).unwrap();
    assert!(report.total.is_finite());
    assert!(g.named_tensors().iter().all(|(_, t)| t.is_finite()));
}

#[test]
fn reconstruct_predict_and_forward_agree() {
    let cfg = tiny_cfg(true);
    let mut rng = Rng::new(26);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let p = random_params(&cfg, &mut rng, 0.3);
    let trace = forward(&s, &p, &cfg).unwrap();
    let r = reconstruct(&s, &p, &cfg).unwrap();
    let (k, r2) = predict(&s, &p, &cfg).unwrap();
    assert_eq!(r, trace.r_out);
    assert_eq!(r2, trace.r_out);
    assert_eq!(&k, trace.final_kspace());
    assert!(r.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn two_by_two_loss_by_hand() {
    let k_full = ComplexImage::from_vec(
        1,
        2,
        2,
        vec![
            Complex64::new(1.0, 1.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
            Complex64::new(0.0, -1.0),
        ],
    )
    .unwrap();
    let mask = SamplingMask::from_columns(vec![true, false]).unwrap();
    let s = apply_mask(&k_full, &mask).unwrap();
    let mut cfg = tiny_cfg(true);
    cfg.iterations = 1;
    let p = ModelParams::zeros(&cfg);
    let report = loss(&forward(&s, &p, &cfg).unwrap(), &s, &cfg).unwrap();
    // identity nets: K_1 = K_S, so both errors are the missing column,
    // |2|^2 + |-i|^2 = 5 over 4 entries (image side by Parseval)
    assert!((report.kspace_terms[0] - 1.25).abs() < 1e-15);
    assert!((report.image_terms[0] - 1.25).abs() < 1e-15);
    assert!((report.total - 1.25).abs() < 1e-15);
}

#[test]
fn loss_weights_scale_linearly() {
    let mut rng = Rng::new(27);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let cfg = tiny_cfg(true);
    let p = random_params(&cfg, &mut rng, 0.3);
    let trace = forward(&s, &p, &cfg).unwrap();
    let a = loss(&trace, &s, &cfg).unwrap();
    let doubled = CascadeConfig { lambda_image: 2.0 * cfg.lambda_image, ..cfg };
    let b = loss(&trace, &s, &doubled).unwrap();
    assert_eq!(a.image_terms, b.image_terms);
    let image_part: f64 = a.image_terms.iter().map(|l| cfg.lambda_image * l).sum();
    assert!((b.total - a.total - image_part).abs() < 1e-12 * a.total);
    let sum: f64 = a.iteration_totals.iter().sum();
    assert!((sum - a.total).abs() <= 1e-15 * a.total);
}

#[test]
fn backward_rejects_stale_and_foreign_traces() {
    let cfg = tiny_cfg(true);
    let mut rng = Rng::new(28);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    let p = random_params(&cfg, &mut rng, 0.3);
    let mut trace = forward(&s, &p, &cfg).unwrap();
    backward(&mut trace, &s, &p, &cfg).unwrap();
    assert!(matches!(
        backward(&mut trace, &s, &p, &cfg),
        Err(dualcascade::Error::Trace(_))
    ));
    let mut longer = cfg;
    longer.iterations = 3;
    let mut trace = forward(&s, &p, &cfg).unwrap();
    assert!(backward(&mut trace, &s, &ModelParams::zeros(&longer), &longer).is_err());
}

#[test]
fn coil_mismatch_is_a_config_error() {
    let cfg = CascadeConfig::for_coils(2);
    let mut rng = Rng::new(29);
    let s = random_sample(1, 8, 8, 2.0, &mut rng);
    assert!(matches!(
        reconstruct(&s, &ModelParams::zeros(&cfg), &cfg),
        Err(dualcascade::Error::ConfigMismatch(_))
    ));
    let sub = init_params(&cfg.subnet, &mut rng).unwrap();
    assert_eq!(sub.parameter_count(), ModelParams::zeros(&cfg).image_nets[0].parameter_count());
}
