//! Dense real tensors and multi-coil complex images.
//!
//! Layout is row-major throughout. A [`ComplexImage`] stores coil `c`,
//! row `y`, column `x` at `(c * height + y) * width + x`.

use num_complex::Complex64;

use crate::error::{shape_err, Error, Result};

/// Dense row-major `f64` tensor of arbitrary rank.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret with a new shape holding the same number of values.
    pub fn reshaped(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return shape_err(format!("add {:?} and {:?}", self.shape, other.shape));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return shape_err(format!("axpy {:?} and {:?}", self.shape, other.shape));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += alpha * b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Complex image with a leading coil axis. Height and width are even.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

fn check_dims(coils: usize, height: usize, width: usize) -> Result<()> {
    if coils == 0 {
        return shape_err("coil count must be at least 1");
    }
    if height == 0 || width == 0 || height % 2 != 0 || width % 2 != 0 {
        return shape_err(format!(
            "height and width must be even and positive, got {height}x{width}"
        ));
    }
    Ok(())
}

impl ComplexImage {
    pub fn zeros(coils: usize, height: usize, width: usize) -> Result<Self> {
        check_dims(coils, height, width)?;
        Ok(Self {
            coils,
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); coils * height * width],
        })
    }

    pub fn from_vec(
        coils: usize,
        height: usize,
        width: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        check_dims(coils, height, width)?;
        if data.len() != coils * height * width {
            return shape_err(format!(
                "{coils}x{height}x{width} image needs {} values, got {}",
                coils * height * width,
                data.len()
            ));
        }
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    /// Single-coil image with zero imaginary part.
    pub fn from_real(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let data = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_vec(1, height, width, data)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            coils: self.coils,
            height: self.height,
            width: self.width,
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
        }
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(coils, height, width)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.coils, self.height, self.width)
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn plane(&self, coil: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[coil * n..(coil + 1) * n]
    }

    pub fn plane_mut(&mut self, coil: usize) -> &mut [Complex64] {
        let n = self.height * self.width;
        &mut self.data[coil * n..(coil + 1) * n]
    }

    pub fn get(&self, coil: usize, row: usize, col: usize) -> Complex64 {
        self.data[(coil * self.height + row) * self.width + col]
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.same_dims(other) {
            return shape_err(format!("add {:?} and {:?}", self.dims(), other.dims()));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.same_dims(other) {
            return shape_err(format!("sub {:?} and {:?}", self.dims(), other.dims()));
        }
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&mut self, alpha: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(mut self, alpha: Complex64) -> Self {
        self.scale(alpha);
        self
    }

    /// Coil-stacked modulus as a `(coils, height, width)` tensor.
    pub fn magnitude(&self) -> RealTensor {
        RealTensor {
            shape: vec![self.coils, self.height, self.width],
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    /// Inner product `<self, other>` = sum of `conj(a) * b`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if !self.same_dims(other) {
            return shape_err(format!("inner {:?} and {:?}", self.dims(), other.dims()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Split each coil into a real channel and an imaginary channel: output has
/// shape `(2C, H, W)` with channel `2c` the real part of coil `c` and
/// channel `2c + 1` its imaginary part.
pub fn complex_to_channels(x: &ComplexImage) -> RealTensor {
    let (c, h, w) = x.dims();
    let n = h * w;
    let mut data = vec![0.0; 2 * c * n];
    for coil in 0..c {
        let (re, im) = data[2 * coil * n..2 * (coil + 1) * n].split_at_mut(n);
        for (i, z) in x.plane(coil).iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
    }
    RealTensor {
        shape: vec![2 * c, h, w],
        data,
    }
}

/// Inverse of [`complex_to_channels`].
pub fn channels_to_complex(t: &RealTensor) -> Result<ComplexImage> {
    let &[ch, h, w] = t.shape() else {
        return shape_err(format!("expected (channels, H, W), got {:?}", t.shape()));
    };
    if ch == 0 || ch % 2 != 0 {
        return Err(Error::Shape(format!(
            "channel count must be even and positive, got {ch}"
        )));
    }
    let n = h * w;
    let coils = ch / 2;
    let mut data = Vec::with_capacity(coils * n);
    for coil in 0..coils {
        let re = &t.data[2 * coil * n..(2 * coil + 1) * n];
        let im = &t.data[(2 * coil + 1) * n..(2 * coil + 2) * n];
        data.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
    }
    ComplexImage::from_vec(coils, h, w, data)
}

/// Values with a Euclidean norm: sums of squared magnitudes over all entries.
pub trait Norm {
    fn squared_norm(&self) -> f64;

    /// `||self - other||^2`; shapes must agree.
    fn squared_distance(&self, other: &Self) -> Result<f64>;

    fn l2_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }
}

impl Norm for RealTensor {
    fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn squared_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_shape(other) {
            return shape_err(format!("distance {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl Norm for ComplexImage {
    fn squared_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    fn squared_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_dims(other) {
            return shape_err(format!("distance {:?} vs {:?}", self.dims(), other.dims()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }
}

/// Euclidean norm of a tensor or complex image.
pub fn l2_norm<T: Norm + ?Sized>(x: &T) -> f64 {
    x.l2_norm()
}
