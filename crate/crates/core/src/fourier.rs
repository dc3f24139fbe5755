//! Centered orthonormal 2D Fourier transforms over the spatial axes.
//!
//! `fft2c(x) = fftshift(DFT2(ifftshift(x))) / sqrt(H * W)` per coil, so the
//! zero frequency sits at `(H/2, W/2)` and both directions are unitary.
//! Because the transforms are unitary, the adjoint of `fft2c` is `ifft2c`
//! and gradients pass through either node by applying the opposite transform.
//!
//! Any even size is accepted; rustfft handles non-power-of-two lengths.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::tensor::ComplexImage;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Centered orthonormal forward transform (image to k-space).
pub fn fft2c(x: &ComplexImage) -> ComplexImage {
    transform(x, FftDirection::Forward)
}

/// Centered orthonormal inverse transform (k-space to image).
pub fn ifft2c(k: &ComplexImage) -> ComplexImage {
    transform(k, FftDirection::Inverse)
}

fn transform(x: &ComplexImage, direction: FftDirection) -> ComplexImage {
    let (coils, h, w) = x.dims();
    let row_fft = plan(w, direction);
    let col_fft = plan(h, direction);
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::default(); scratch_len];
    let mut buf = vec![Complex64::default(); h * w];
    let mut cols = vec![Complex64::default(); h * w];
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let (hh, hw) = (h / 2, w / 2);

    let mut out = x.zeros_like();
    for coil in 0..coils {
        let src = x.plane(coil);
        // ifftshift on the way in (for even sizes the shift is a half roll)
        for r in 0..h {
            let sr = (r + hh) % h;
            for c in 0..w {
                buf[r * w + c] = src[sr * w + (c + hw) % w];
            }
        }
        for row in buf.chunks_exact_mut(w) {
            row_fft.process_with_scratch(row, &mut scratch[..row_fft.get_inplace_scratch_len()]);
        }
        for r in 0..h {
            for c in 0..w {
                cols[c * h + r] = buf[r * w + c];
            }
        }
        for col in cols.chunks_exact_mut(h) {
            col_fft.process_with_scratch(col, &mut scratch[..col_fft.get_inplace_scratch_len()]);
        }
        // fftshift on the way out
        let dst = out.plane_mut(coil);
        for r in 0..h {
            let dr = (r + hh) % h;
            for c in 0..w {
                dst[dr * w + (c + hw) % w] = cols[c * h + r] * norm;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Norm;

    fn random_image(rng: &mut Rng, c: usize, h: usize, w: usize) -> ComplexImage {
        let data = (0..c * h * w)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        ComplexImage::from_vec(c, h, w, data).unwrap()
    }

    /// Direct O(N^4) centered DFT with explicit index shifts.
    fn naive_dft2c(x: &ComplexImage, sign: f64) -> ComplexImage {
        let (coils, h, w) = x.dims();
        let mut out = x.zeros_like();
        for coil in 0..coils {
            for ku in 0..h {
                for kv in 0..w {
                    let fu = ku as f64 - (h / 2) as f64;
                    let fv = kv as f64 - (w / 2) as f64;
                    let mut acc = Complex64::default();
                    for y in 0..h {
                        for xx in 0..w {
                            let py = y as f64 - (h / 2) as f64;
                            let px = xx as f64 - (w / 2) as f64;
                            let phase = sign
                                * std::f64::consts::TAU
                                * (fu * py / h as f64 + fv * px / w as f64);
                            acc += x.get(coil, y, xx) * Complex64::from_polar(1.0, phase);
                        }
                    }
                    out.plane_mut(coil)[ku * w + kv] = acc / ((h * w) as f64).sqrt();
                }
            }
        }
        out
    }

    fn rel_err(a: &ComplexImage, b: &ComplexImage) -> f64 {
        a.squared_distance(b).unwrap().sqrt() / b.l2_norm().max(1e-300)
    }

    #[test]
    fn constant_image_maps_to_centered_dc() {
        let x = ComplexImage::from_real(2, 2, &[1.0; 4]).unwrap();
        let k = fft2c(&x);
        for r in 0..2 {
            for c in 0..2 {
                let v = k.get(0, r, c);
                if (r, c) == (1, 1) {
                    assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-15);
                } else {
                    assert!(v.norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn centered_impulse_has_flat_spectrum() {
        let (h, w) = (8, 6);
        let mut x = ComplexImage::zeros(1, h, w).unwrap();
        x.plane_mut(0)[(h / 2) * w + w / 2] = Complex64::new(1.0, 0.0);
        let k = fft2c(&x);
        let expected = 1.0 / ((h * w) as f64).sqrt();
        for z in k.data() {
            assert!((z.norm() - expected).abs() < 1e-14);
        }
        assert!(rel_err(&k, &naive_dft2c(&x, -1.0)) < 1e-12);
    }

    #[test]
    fn matches_naive_dft_both_directions() {
        let mut rng = Rng::new(8);
        let x = random_image(&mut rng, 2, 8, 8);
        assert!(rel_err(&fft2c(&x), &naive_dft2c(&x, -1.0)) < 1e-10);
        assert!(rel_err(&ifft2c(&x), &naive_dft2c(&x, 1.0)) < 1e-10);
        // non-power-of-two even size
        let y = random_image(&mut rng, 1, 6, 10);
        assert!(rel_err(&fft2c(&y), &naive_dft2c(&y, -1.0)) < 1e-10);
    }

    #[test]
    fn round_trip_and_zero() {
        let mut rng = Rng::new(1);
        let x = random_image(&mut rng, 3, 16, 16);
        assert!(rel_err(&ifft2c(&fft2c(&x)), &x) < 1e-10);
        let z = ComplexImage::zeros(2, 4, 4).unwrap();
        assert_eq!(ifft2c(&z), z);
    }

    #[test]
    fn linearity() {
        let mut rng = Rng::new(4);
        let x = random_image(&mut rng, 1, 16, 16);
        let y = random_image(&mut rng, 1, 16, 16);
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let mut lhs_in = x.clone().scaled(a);
        lhs_in.add_assign(&y.clone().scaled(b)).unwrap();
        let lhs = fft2c(&lhs_in);
        let mut rhs = fft2c(&x).scaled(a);
        rhs.add_assign(&fft2c(&y).scaled(b)).unwrap();
        assert!(rel_err(&lhs, &rhs) < 1e-10);
    }
}
