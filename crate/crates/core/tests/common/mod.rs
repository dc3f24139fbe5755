#![allow(dead_code)]

use dualcascade::phantom::{generate_dataset, undersample_dataset, DatasetConfig};
use dualcascade::sampling::make_mask;
use dualcascade::{ComplexImage, MaskPattern, RealTensor, Rng, UndersampledSample};
use num_complex::Complex64;

pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> RealTensor {
    let n = shape.iter().product();
    RealTensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

pub fn random_image(c: usize, h: usize, w: usize, rng: &mut Rng) -> ComplexImage {
    let data = (0..c * h * w)
        .map(|_| Complex64::new(rng.normal(), rng.normal()))
        .collect();
    ComplexImage::from_vec(c, h, w, data).unwrap()
}

/// Random fully sampled k-space undersampled by a random-lines mask.
pub fn random_sample(c: usize, h: usize, w: usize, accel: f64, rng: &mut Rng) -> UndersampledSample {
    let k_full = random_image(c, h, w, rng);
    let mask = make_mask(w, accel, 0.25, MaskPattern::RandomLines, rng.next_u64()).unwrap();
    dualcascade::sampling::apply_mask(&k_full, &mask).unwrap()
}

/// Small phantom cases with ground truth, for end-to-end checks.
pub fn phantom_samples(cases: usize, size: usize, coils: usize, accel: f64, seed: u64) -> Vec<UndersampledSample> {
    let cfg = DatasetConfig {
        cases,
        height: size,
        width: size,
        coils,
        jitter: 0.15,
        seed,
    };
    let gts = generate_dataset(&cfg).unwrap();
    undersample_dataset(&gts, accel, 0.08, MaskPattern::RandomLines, seed).unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` with respect to `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + eps;
    let up = f(x);
    x[i] = orig - eps;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * eps)
}

/// `sum(r * y)`: a linear probe whose gradient with respect to `y` is `r`.
pub fn probe(r: &RealTensor, y: &RealTensor) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Compare analytic parameter gradients against central differences of
/// `loss`, visiting every `stride`-th scalar. Returns the worst relative
/// error and the number of scalars checked.
pub fn check_param_grads<P, F>(params: &P, grads: &P, stride: usize, eps: f64, loss: F) -> (f64, usize)
where
    P: dualcascade::ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    let analytic: Vec<f64> = grads
        .named_tensors()
        .into_iter()
        .flat_map(|(_, t)| t.data().to_vec())
        .collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut p = params.clone();
    let sizes: Vec<usize> = p.named_tensors().iter().map(|(_, t)| t.len()).collect();
    let mut flat = 0;
    for (ti, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            if (flat + j) % stride == 0 {
                let orig = p.tensors_mut()[ti].data()[j];
                p.tensors_mut()[ti].data_mut()[j] = orig + eps;
                let up = loss(&p);
                p.tensors_mut()[ti].data_mut()[j] = orig - eps;
                let down = loss(&p);
                p.tensors_mut()[ti].data_mut()[j] = orig;
                let fd = (up - down) / (2.0 * eps);
                worst = worst.max(rel_err(analytic[flat + j], fd, 1e-4));
                checked += 1;
            }
        }
        flat += n;
    }
    (worst, checked)
}
