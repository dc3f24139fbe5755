//! NMSE%, SSIM, the paired t-test and per-dataset reports.

use std::fmt::Write as _;

use crate::cascade::{predict, CascadeConfig, ModelParams};
use crate::error::{shape_err, Error, Result};
use crate::fourier::ifft2c;
use crate::phantom::rss_combine;
use crate::sampling::UndersampledSample;
use crate::tensor::{ComplexImage, Norm, RealTensor};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `100 * ||pred - truth||^2 / ||truth||^2`
pub fn nmse_percent<T: Norm + ?Sized>(pred: &T, truth: &T) -> Result<f64> {
    let denom = truth.squared_norm();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("NMSE against an all-zero truth".into()));
    }
    Ok(100.0 * pred.squared_distance(truth)? / denom)
}

/// Mean SSIM with dynamic range `max(truth) - min(truth)`. A constant truth
/// has no range, so 1.0 is used instead.
pub fn ssim(pred: &RealTensor, truth: &RealTensor) -> Result<f64> {
    let range = truth.max() - truth.min();
    ssim_with_range(pred, truth, if range > 0.0 { range } else { 1.0 })
}

/// Mean local SSIM over every fully contained 7x7 window. Accepts `(H, W)`
/// images or `(P, H, W)` stacks, in which case windows of all planes are
/// averaged together. Window statistics use population (1/49) moments.
pub fn ssim_with_range(pred: &RealTensor, truth: &RealTensor, range: f64) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return shape_err(format!("ssim {:?} vs {:?}", pred.shape(), truth.shape()));
    }
    let (planes, h, w) = match *truth.shape() {
        [h, w] => (1, h, w),
        [p, h, w] => (p, h, w),
        ref s => return shape_err(format!("ssim needs a 2D image or 3D stack, got {s:?}")),
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW || planes == 0 {
        return shape_err(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::Parameter(format!("ssim dynamic range must be positive, got {range}")));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);

    let mut total = 0.0;
    for p in 0..planes {
        let x = &pred.data()[p * h * w..(p + 1) * h * w];
        let y = &truth.data()[p * h * w..(p + 1) * h * w];
        let sx = SummedArea::new(h, w, |i| x[i]);
        let sy = SummedArea::new(h, w, |i| y[i]);
        let sxx = SummedArea::new(h, w, |i| x[i] * x[i]);
        let syy = SummedArea::new(h, w, |i| y[i] * y[i]);
        let sxy = SummedArea::new(h, w, |i| x[i] * y[i]);
        for r in 0..oh {
            for c in 0..ow {
                let mx = sx.window(r, c) / n;
                let my = sy.window(r, c) / n;
                let vx = sxx.window(r, c) / n - mx * mx;
                let vy = syy.window(r, c) / n - my * my;
                let cov = sxy.window(r, c) / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    Ok(total / (planes * oh * ow) as f64)
}

struct SummedArea {
    table: Vec<f64>,
    stride: usize,
}

impl SummedArea {
    fn new(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = w + 1;
        let mut table = vec![0.0; (h + 1) * stride];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += f(r * w + c);
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + row;
            }
        }
        Self { table, stride }
    }

    fn window(&self, r: usize, c: usize) -> f64 {
        let k = SSIM_WINDOW;
        let s = self.stride;
        self.table[(r + k) * s + c + k] - self.table[r * s + c + k] - self.table[(r + k) * s + c]
            + self.table[r * s + c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-tailed.
    pub p: f64,
    pub n: usize,
}

/// Paired two-tailed Student t-test on `d = a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return shape_err(format!("paired samples of length {} and {}", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateTest(format!("need at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&d);
    if sd == 0.0 || d.iter().all(|&v| v == d[0]) {
        return Err(Error::DegenerateTest("differences have zero variance".into()));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dof = (n - 1) as f64;
    let p = if t == 0.0 {
        1.0
    } else {
        regularized_incomplete_beta(dof / (dof + t * t), dof / 2.0, 0.5)
    };
    Ok(TTest { t, p, n })
}

/// Mean and sample (n - 1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` by the continued fraction, using the symmetry
/// `I_x(a, b) = 1 - I_{1-x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Per-case metrics in both domains plus an optional paired comparison.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub image_nmse: Vec<f64>,
    pub image_ssim: Vec<f64>,
    pub kspace_nmse: Vec<f64>,
    pub kspace_ssim: Vec<f64>,
    pub ttest: Option<TTest>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

impl MetricsReport {
    pub fn cases(&self) -> usize {
        self.image_nmse.len()
    }

    pub fn image_nmse_summary(&self) -> Summary {
        Summary::of(&self.image_nmse)
    }

    pub fn image_ssim_summary(&self) -> Summary {
        Summary::of(&self.image_ssim)
    }

    pub fn kspace_nmse_summary(&self) -> Summary {
        Summary::of(&self.kspace_nmse)
    }

    pub fn kspace_ssim_summary(&self) -> Summary {
        Summary::of(&self.kspace_ssim)
    }

    /// Attach a paired t-test on per-case image NMSE against `other`.
    pub fn compare_image_nmse(&mut self, other: &MetricsReport) -> Result<TTest> {
        let t = paired_t_test(&self.image_nmse, &other.image_nmse)?;
        self.ttest = Some(t);
        Ok(t)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("k-space", self.kspace_nmse_summary(), self.kspace_ssim_summary()),
            ("image", self.image_nmse_summary(), self.image_ssim_summary()),
        ];
        let _ = writeln!(out, "{:<8} │ {:>20} │ {:>18}", "domain", "NMSE%", "SSIM");
        let _ = writeln!(out, "{}", "─".repeat(9) + "┼" + &"─".repeat(22) + "┼" + &"─".repeat(19));
        for (name, nmse, ssim) in rows {
            let _ = writeln!(
                out,
                "{:<8} │ {:>9.4} ± {:<8.4} │ {:>7.4} ± {:<8.4}",
                name, nmse.mean, nmse.std, ssim.mean, ssim.std
            );
        }
        let _ = writeln!(out, "cases: {}", self.cases());
        if let Some(t) = self.ttest {
            let _ = writeln!(out, "paired t-test on image NMSE: t={:.6} p={:.6e} n={}", t.t, t.p, t.n);
        }
        out
    }

    /// One `case=<i> domain=<img|ksp> nmse=<f> ssim=<f>` line per case and
    /// domain, then `summary` and optional `ttest` lines.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for i in 0..self.cases() {
            let _ = writeln!(
                out,
                "case={i} domain=img nmse={} ssim={}",
                self.image_nmse[i], self.image_ssim[i]
            );
            let _ = writeln!(
                out,
                "case={i} domain=ksp nmse={} ssim={}",
                self.kspace_nmse[i], self.kspace_ssim[i]
            );
        }
        for (domain, nmse, ssim) in [
            ("img", self.image_nmse_summary(), self.image_ssim_summary()),
            ("ksp", self.kspace_nmse_summary(), self.kspace_ssim_summary()),
        ] {
            let _ = writeln!(
                out,
                "summary domain={domain} nmse_mean={} nmse_std={} ssim_mean={} ssim_std={}",
                nmse.mean, nmse.std, ssim.mean, ssim.std
            );
        }
        if let Some(t) = self.ttest {
            let _ = writeln!(out, "ttest t={} p={} n={}", t.t, t.p, t.n);
        }
        out
    }
}

/// Score any reconstruction: `recon` returns the final multi-coil k-space
/// and the RSS image for a case. K-space is compared on coil-stacked
/// magnitudes, images on RSS magnitudes.
pub fn evaluate_with<F>(dataset: &[UndersampledSample], mut recon: F) -> Result<MetricsReport>
where
    F: FnMut(&UndersampledSample) -> Result<(ComplexImage, RealTensor)>,
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut report = MetricsReport::default();
    for (index, s) in dataset.iter().enumerate() {
        let scored = (|| {
            let k_full = s.k_full.as_ref().ok_or(Error::MissingGroundTruth("k_full"))?;
            let (k_pred, img_pred) = recon(s)?;
            let k_truth_mag = k_full.magnitude();
            let k_pred_mag = k_pred.magnitude();
            let img_truth = rss_combine(&ifft2c(k_full));
            Ok::<_, Error>((
                nmse_percent(&img_pred, &img_truth)?,
                ssim(&img_pred, &img_truth)?,
                nmse_percent(&k_pred_mag, &k_truth_mag)?,
                ssim(&k_pred_mag, &k_truth_mag)?,
            ))
        })()
        .map_err(|e| Error::Case { index, source: Box::new(e) })?;
        report.image_nmse.push(scored.0);
        report.image_ssim.push(scored.1);
        report.kspace_nmse.push(scored.2);
        report.kspace_ssim.push(scored.3);
    }
    Ok(report)
}

pub fn evaluate(
    dataset: &[UndersampledSample],
    params: &ModelParams,
    ccfg: &CascadeConfig,
) -> Result<MetricsReport> {
    evaluate_with(dataset, |s| predict(s, params, ccfg))
}

/// The zero-filled baseline: measured k-space as is, RSS of its inverse.
pub fn evaluate_zero_filling(dataset: &[UndersampledSample]) -> Result<MetricsReport> {
    evaluate_with(dataset, |s| {
        Ok((s.k_sparse.clone(), rss_combine(&ifft2c(&s.k_sparse))))
    })
}
