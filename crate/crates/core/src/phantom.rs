//! Synthetic ground truth: ellipse phantoms, coil sensitivities and
//! multi-coil simulation.
//!
//! Pixel `(row, col)` of an `H x W` grid sits at
//! `x = 2 (col - W/2) / W`, `y = 2 (H/2 - row) / H`, so the center pixel
//! `(H/2, W/2)` is the origin and the field of view is `[-1, 1)` on both
//! axes with `y` pointing up.

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};
use crate::fourier::fft2c;
use crate::rng::{derive_seed, Rng};
use crate::sampling::{apply_mask, make_mask, MaskPattern, UndersampledSample};
use crate::tensor::{ComplexImage, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseSpec {
    pub center_x: f64,
    pub center_y: f64,
    /// Semi-axis along the rotated x direction.
    pub semi_a: f64,
    /// Semi-axis along the rotated y direction.
    pub semi_b: f64,
    /// Counter-clockwise rotation in radians.
    pub angle: f64,
    pub intensity: f64,
}

impl EllipseSpec {
    pub fn new(
        intensity: f64,
        semi_a: f64,
        semi_b: f64,
        center_x: f64,
        center_y: f64,
        angle_deg: f64,
    ) -> Self {
        Self {
            center_x,
            center_y,
            semi_a,
            semi_b,
            angle: angle_deg.to_radians(),
            intensity,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_a).powi(2) + (v / self.semi_b).powi(2) <= 1.0
    }
}

/// The modified (higher contrast) Shepp-Logan head: ten ellipses as
/// `(intensity, a, b, x0, y0, angle in degrees)`.
pub const MODIFIED_SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

pub fn default_head() -> Vec<EllipseSpec> {
    MODIFIED_SHEPP_LOGAN
        .iter()
        .map(|&(i, a, b, x, y, deg)| EllipseSpec::new(i, a, b, x, y, deg))
        .collect()
}

/// Grid coordinate of a pixel.
pub fn pixel_coords(row: usize, col: usize, height: usize, width: usize) -> (f64, f64) {
    let x = 2.0 * (col as f64 - (width / 2) as f64) / width as f64;
    let y = 2.0 * ((height / 2) as f64 - row as f64) / height as f64;
    (x, y)
}

/// Rasterize ellipses into a real-valued single-coil image. Each pixel is
/// the sum of the intensities of the ellipses containing its coordinate.
pub fn shepp_logan(height: usize, width: usize, ellipses: &[EllipseSpec]) -> Result<ComplexImage> {
    if let Some(e) = ellipses.iter().find(|e| !(e.semi_a > 0.0 && e.semi_b > 0.0)) {
        return Err(Error::Parameter(format!(
            "ellipse semi-axes must be positive, got {} and {}",
            e.semi_a, e.semi_b
        )));
    }
    let mut img = ComplexImage::zeros(1, height, width)?;
    let plane = img.plane_mut(0);
    for row in 0..height {
        for col in 0..width {
            let (x, y) = pixel_coords(row, col, height, width);
            let v: f64 = ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            plane[row * width + col] = Complex64::new(v, 0.0);
        }
    }
    Ok(img)
}

/// Complex coil maps whose root-sum-of-squares is one at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySet {
    maps: ComplexImage,
}

impl SensitivitySet {
    pub fn coils(&self) -> usize {
        self.maps.coils()
    }

    pub fn maps(&self) -> &ComplexImage {
        &self.maps
    }

    pub fn from_maps(maps: ComplexImage) -> Self {
        Self { maps }
    }
}

/// Gaussian width of each coil's magnitude profile, in field-of-view units.
const COIL_SIGMA: f64 = 0.9;
/// Coils sit on a ring of this radius around the origin.
const COIL_RING: f64 = 1.1;
/// Angle of coil 0 on the ring. The array layout is the same for every case,
/// as with a fixed receive coil.
const COIL_ARRAY_ANGLE: f64 = std::f64::consts::FRAC_PI_4;
/// Per-case constant phase of each coil is uniform in `[-j, j]` radians.
const COIL_PHASE_JITTER: f64 = 0.3;

/// Smooth coil profiles: coil `c` is a Gaussian bump centered on the ring
/// at angle `COIL_ARRAY_ANGLE + 2 pi c / C` with a constant phase offset
/// and a linear phase ramp, then every pixel is divided by the
/// root-sum-of-squares over coils. Offsets and ramps come from `rng`.
pub fn make_sensitivities(
    height: usize,
    width: usize,
    coils: usize,
    rng: &mut Rng,
) -> Result<SensitivitySet> {
    if coils == 0 {
        return Err(Error::Parameter("coil count must be at least 1".into()));
    }
    let mut maps = ComplexImage::zeros(coils, height, width)?;
    for c in 0..coils {
        let phi = COIL_ARRAY_ANGLE + std::f64::consts::TAU * c as f64 / coils as f64;
        let (px, py) = (COIL_RING * phi.cos(), COIL_RING * phi.sin());
        let phase0 = rng.uniform(-COIL_PHASE_JITTER, COIL_PHASE_JITTER);
        let ramp_x = rng.uniform(-0.5, 0.5);
        let ramp_y = rng.uniform(-0.5, 0.5);
        let plane = maps.plane_mut(c);
        for row in 0..height {
            for col in 0..width {
                let (x, y) = pixel_coords(row, col, height, width);
                let d2 = (x - px).powi(2) + (y - py).powi(2);
                let mag = (-d2 / (2.0 * COIL_SIGMA * COIL_SIGMA)).exp();
                let phase = phase0 + ramp_x * x + ramp_y * y;
                plane[row * width + col] = Complex64::from_polar(mag, phase);
            }
        }
    }
    let n = height * width;
    for p in 0..n {
        let rss: f64 = (0..coils)
            .map(|c| maps.data()[c * n + p].norm_sqr())
            .sum::<f64>()
            .sqrt();
        for c in 0..coils {
            maps.data_mut()[c * n + p] /= rss;
        }
    }
    Ok(SensitivitySet { maps })
}

/// Coil `c` of the output is `sens_c * img`, pixelwise.
pub fn simulate_multicoil(img: &ComplexImage, sens: &SensitivitySet) -> Result<ComplexImage> {
    let (c1, h, w) = img.dims();
    if c1 != 1 || (h, w) != (sens.maps.height(), sens.maps.width()) {
        return shape_err(format!(
            "image {:?} vs sensitivities {:?}",
            img.dims(),
            sens.maps.dims()
        ));
    }
    let mut out = sens.maps.clone();
    let src = img.plane(0);
    for c in 0..out.coils() {
        for (o, v) in out.plane_mut(c).iter_mut().zip(src) {
            *o *= v;
        }
    }
    Ok(out)
}

/// Root-sum-of-squares coil combination: `(H, W)` tensor of
/// `sqrt(sum_c |x_c|^2)`.
pub fn rss_combine(x: &ComplexImage) -> RealTensor {
    let (coils, h, w) = x.dims();
    let n = h * w;
    let mut acc = vec![0.0; n];
    for c in 0..coils {
        for (a, z) in acc.iter_mut().zip(x.plane(c)) {
            *a += z.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|v| *v = v.sqrt());
    RealTensor::from_vec(&[h, w], acc).expect("rss shape")
}

/// Defaults give the desk-scale set: 24 training plus 8 validation cases.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub cases: usize,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cases: 32,
            height: 64,
            width: 64,
            coils: 4,
            jitter: 0.15,
            seed: 17,
        }
    }
}

/// One fully sampled synthetic acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Coil images, `sens_c * phantom`.
    pub image_full: ComplexImage,
    /// `fft2c(image_full)`.
    pub k_full: ComplexImage,
    pub sensitivities: SensitivitySet,
}

impl GroundTruth {
    /// Evaluation target: RSS magnitude of the coil images.
    pub fn target(&self) -> RealTensor {
        rss_combine(&self.image_full)
    }
}

/// Perturb each ellipse: semi-axes and intensity scale by `1 + jitter * u`,
/// centers shift by `jitter * u` times the ellipse's own semi-axis, with
/// `u` uniform in `[-1, 1)`.
pub fn jitter_ellipses(base: &[EllipseSpec], jitter: f64, rng: &mut Rng) -> Vec<EllipseSpec> {
    base.iter()
        .map(|e| {
            let mut u = || rng.uniform(-1.0, 1.0);
            EllipseSpec {
                center_x: e.center_x + jitter * u() * e.semi_a,
                center_y: e.center_y + jitter * u() * e.semi_b,
                semi_a: e.semi_a * (1.0 + jitter * u()),
                semi_b: e.semi_b * (1.0 + jitter * u()),
                angle: e.angle,
                intensity: e.intensity * (1.0 + jitter * u()),
            }
        })
        .collect()
}

/// Case `i` is generated from its own stream `derive_seed(seed, i)`, so
/// cases are independent of each other and of `cases`.
pub fn generate_case(cfg: &DatasetConfig, index: usize) -> Result<GroundTruth> {
    let mut rng = Rng::new(derive_seed(cfg.seed, index as u64));
    let ellipses = jitter_ellipses(&default_head(), cfg.jitter, &mut rng);
    let phantom = shepp_logan(cfg.height, cfg.width, &ellipses)?;
    let sensitivities = make_sensitivities(cfg.height, cfg.width, cfg.coils, &mut rng)?;
    let image_full = simulate_multicoil(&phantom, &sensitivities)?;
    let k_full = fft2c(&image_full);
    Ok(GroundTruth {
        image_full,
        k_full,
        sensitivities,
    })
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<GroundTruth>> {
    if cfg.cases == 0 {
        return Err(Error::Parameter("dataset needs at least one case".into()));
    }
    if !(cfg.jitter >= 0.0 && cfg.jitter < 1.0) {
        return Err(Error::Parameter(format!(
            "jitter must lie in [0, 1), got {}",
            cfg.jitter
        )));
    }
    (0..cfg.cases).map(|i| generate_case(cfg, i)).collect()
}

/// Undersample every case with its own mask, drawn from
/// `derive_seed(seed, i)` for case `i`. Ground-truth k-space and coil images
/// are kept on each sample.
pub fn undersample_dataset(
    cases: &[GroundTruth],
    acceleration: f64,
    center_fraction: f64,
    pattern: MaskPattern,
    seed: u64,
) -> Result<Vec<UndersampledSample>> {
    cases
        .iter()
        .enumerate()
        .map(|(i, gt)| {
            let mask = make_mask(
                gt.k_full.width(),
                acceleration,
                center_fraction,
                pattern,
                derive_seed(seed, i as u64),
            )?;
            Ok(apply_mask(&gt.k_full, &mask)?.with_image(gt.image_full.clone()))
        })
        .collect()
}
