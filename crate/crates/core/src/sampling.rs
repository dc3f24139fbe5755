//! Cartesian line undersampling.
//!
//! A mask selects whole k-space columns (phase-encode lines). The band of
//! `floor(W * center_fraction)` columns starting at `W/2 - n_center/2` is
//! always sampled; the remaining budget `round(W / R) - n_center` is spread
//! over the other columns either uniformly at random without replacement or
//! at even spacing. The same mask applies to every coil.

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::fourier::ifft2c;
use crate::rng::Rng;
use crate::tensor::{ComplexImage, RealTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskPattern {
    RandomLines,
    Equispaced,
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskPattern::RandomLines => "random_lines",
            MaskPattern::Equispaced => "equispaced",
        })
    }
}

impl FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_lines" => Ok(MaskPattern::RandomLines),
            "equispaced" => Ok(MaskPattern::Equispaced),
            other => Err(Error::Parameter(format!("unknown mask pattern {other:?}"))),
        }
    }
}

/// How a mask was generated. Absent for masks loaded from plain 0/1 files.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskProvenance {
    pub acceleration: f64,
    pub center_fraction: f64,
    pub seed: u64,
    pub pattern: MaskPattern,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    sampled: Vec<bool>,
    provenance: Option<MaskProvenance>,
}

/// Number of always-sampled center columns.
pub fn center_count(width: usize, center_fraction: f64) -> usize {
    (width as f64 * center_fraction).floor() as usize
}

/// Total sampled columns for an acceleration factor.
pub fn budget(width: usize, acceleration: f64) -> usize {
    (width as f64 / acceleration).round() as usize
}

/// First column of the center band.
pub fn center_start(width: usize, n_center: usize) -> usize {
    width / 2 - n_center / 2
}

/// Build a Cartesian line mask. Deterministic for a fixed `seed`.
pub fn make_mask(
    width: usize,
    acceleration: f64,
    center_fraction: f64,
    pattern: MaskPattern,
    seed: u64,
) -> Result<SamplingMask> {
    if width == 0 || width % 2 != 0 {
        return Err(Error::Parameter(format!("width must be even, got {width}")));
    }
    if !(acceleration.is_finite() && acceleration >= 1.0) {
        return Err(Error::Parameter(format!(
            "acceleration must be at least 1, got {acceleration}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "center fraction must lie in (0, 1), got {center_fraction}"
        )));
    }
    let n_center = center_count(width, center_fraction);
    let total = budget(width, acceleration);
    if total < n_center {
        return Err(Error::Parameter(format!(
            "sampling budget {total} is smaller than the {n_center}-column center block"
        )));
    }

    let mut sampled = vec![false; width];
    let start = center_start(width, n_center);
    sampled[start..start + n_center].fill(true);

    let mut outer: Vec<usize> = (0..width).filter(|&c| !sampled[c]).collect();
    let extra = total - n_center;
    match pattern {
        MaskPattern::RandomLines => {
            // partial Fisher-Yates: the first `extra` slots are a uniform draw
            let mut rng = Rng::new(seed);
            for i in 0..extra {
                let j = i + rng.below((outer.len() - i) as u64) as usize;
                outer.swap(i, j);
                sampled[outer[i]] = true;
            }
        }
        MaskPattern::Equispaced => {
            let m = outer.len();
            for j in 0..extra {
                sampled[outer[j * m / extra]] = true;
            }
        }
    }

    Ok(SamplingMask {
        sampled,
        provenance: Some(MaskProvenance {
            acceleration,
            center_fraction,
            seed,
            pattern,
        }),
    })
}

impl SamplingMask {
    /// Mask from explicit column flags, without generation provenance.
    pub fn from_columns(sampled: Vec<bool>) -> Result<Self> {
        if sampled.is_empty() {
            return Err(Error::Parameter("mask must have at least one column".into()));
        }
        Ok(Self {
            sampled,
            provenance: None,
        })
    }

    pub fn full(width: usize) -> Self {
        Self {
            sampled: vec![true; width],
            provenance: None,
        }
    }

    pub fn width(&self) -> usize {
        self.sampled.len()
    }

    pub fn columns(&self) -> &[bool] {
        &self.sampled
    }

    pub fn is_sampled(&self, col: usize) -> bool {
        self.sampled[col]
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.iter().filter(|&&s| s).count()
    }

    pub fn provenance(&self) -> Option<&MaskProvenance> {
        self.provenance.as_ref()
    }

    /// 0/1 tensor of shape `(1, 1, W)` for storage.
    pub fn to_tensor(&self) -> RealTensor {
        let data = self
            .sampled
            .iter()
            .map(|&s| if s { 1.0 } else { 0.0 })
            .collect();
        RealTensor::from_vec(&[1, 1, self.width()], data).expect("mask shape")
    }

    /// Parse a 0/1 tensor whose last axis is the column axis.
    pub fn from_tensor(t: &RealTensor) -> Result<Self> {
        let width = *t.shape().last().unwrap_or(&0);
        if width == 0 || t.len() != width {
            return shape_err(format!("mask tensor must be 1x1xW, got {:?}", t.shape()));
        }
        let sampled = t
            .data()
            .iter()
            .map(|&v| {
                if v == 1.0 {
                    Ok(true)
                } else if v == 0.0 {
                    Ok(false)
                } else {
                    Err(Error::Format(format!("mask value {v} is not 0 or 1")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(sampled)
    }

    /// Zero every unsampled column, in place.
    pub fn project(&self, k: &mut ComplexImage) -> Result<()> {
        let (coils, h, w) = k.dims();
        if w != self.width() {
            return shape_err(format!("mask width {} vs k-space width {w}", self.width()));
        }
        for coil in 0..coils {
            let plane = k.plane_mut(coil);
            for r in 0..h {
                for (c, &s) in self.sampled.iter().enumerate() {
                    if !s {
                        plane[r * w + c] = Default::default();
                    }
                }
            }
        }
        Ok(())
    }
}

/// Undersampled measurement with optional fully sampled ground truth.
#[derive(Clone, Debug)]
pub struct UndersampledSample {
    pub k_sparse: ComplexImage,
    pub mask: SamplingMask,
    pub k_full: Option<ComplexImage>,
    pub image_full: Option<ComplexImage>,
}

/// Keep sampled columns of `k_full`, zero the rest; the input is retained
/// as ground truth.
pub fn apply_mask(k_full: &ComplexImage, mask: &SamplingMask) -> Result<UndersampledSample> {
    let mut k_sparse = k_full.clone();
    mask.project(&mut k_sparse)?;
    Ok(UndersampledSample {
        k_sparse,
        mask: mask.clone(),
        k_full: Some(k_full.clone()),
        image_full: None,
    })
}

impl UndersampledSample {
    pub fn with_image(mut self, image_full: ComplexImage) -> Self {
        self.image_full = Some(image_full);
        self
    }

    /// Measurement only, no ground truth.
    pub fn measured(k: &ComplexImage, mask: &SamplingMask) -> Result<Self> {
        let mut k_sparse = k.clone();
        mask.project(&mut k_sparse)?;
        Ok(Self {
            k_sparse,
            mask: mask.clone(),
            k_full: None,
            image_full: None,
        })
    }
}

/// Aliased baseline: inverse transform of the zero-filled k-space, per coil.
pub fn zero_fill_recon(s: &UndersampledSample) -> ComplexImage {
    ifft2c(&s.k_sparse)
}
