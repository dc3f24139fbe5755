//! Hard data consistency: measured columns overwrite predicted ones.

use crate::error::{shape_err, Result};
use crate::sampling::SamplingMask;
use crate::tensor::ComplexImage;

fn check(k: &ComplexImage, mask: &SamplingMask) -> Result<()> {
    if k.width() != mask.width() {
        return shape_err(format!(
            "mask width {} vs k-space width {}",
            mask.width(),
            k.width()
        ));
    }
    Ok(())
}

/// Column `j` of the output is `k_s` column `j` where the mask is set and
/// `k_pred` column `j` elsewhere, for every coil.
pub fn data_consistency(
    k_pred: &ComplexImage,
    k_s: &ComplexImage,
    mask: &SamplingMask,
) -> Result<ComplexImage> {
    if !k_pred.same_dims(k_s) {
        return shape_err(format!(
            "prediction {:?} vs measurement {:?}",
            k_pred.dims(),
            k_s.dims()
        ));
    }
    check(k_pred, mask)?;
    let w = k_pred.width();
    let mut out = k_pred.clone();
    for (o, m) in out
        .data_mut()
        .chunks_exact_mut(w)
        .zip(k_s.data().chunks_exact(w))
    {
        for (c, &s) in mask.columns().iter().enumerate() {
            if s {
                o[c] = m[c];
            }
        }
    }
    Ok(out)
}

/// Gradient with respect to `k_pred`: sampled columns carry none.
pub fn data_consistency_backward(
    grad_out: &ComplexImage,
    mask: &SamplingMask,
) -> Result<ComplexImage> {
    check(grad_out, mask)?;
    let mut g = grad_out.clone();
    mask.project_complement(&mut g);
    Ok(g)
}

impl SamplingMask {
    /// Zero every sampled column, in place. Widths must already agree.
    pub(crate) fn project_complement(&self, k: &mut ComplexImage) {
        let w = k.width();
        for row in k.data_mut().chunks_exact_mut(w) {
            for (c, &s) in self.columns().iter().enumerate() {
                if s {
                    row[c] = Default::default();
                }
            }
        }
    }
}
