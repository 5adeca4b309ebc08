use crate::channel::CsiGrid;
use crate::error::{Result, WifoError};
use crate::mask::MaskResult;
use crate::num::Real;
use crate::patch::{PatchSpec, TokenGrid};

/// Mean squared error over the complex elements covered by masked patches.
pub fn masked_mse(pred: &CsiGrid, target: &CsiGrid, mask: &MaskResult, patch: PatchSpec) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(WifoError::shape(
            "data",
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let dims = patch.grid_dims(target.shape())?;
    if mask.num_tokens() != dims.num_tokens() {
        return Err(WifoError::shape("token", "mask does not match the grid's token count"));
    }
    if mask.masked_idx.is_empty() {
        return Err(WifoError::EmptyMask);
    }
    let mut sum = 0.0;
    for &idx in &mask.masked_idx {
        let [pt, pf, ps] = dims.coords(idx);
        for dt in 0..patch.t_patch {
            for dk in 0..patch.f_patch {
                for dn in 0..patch.s_patch {
                    let (t, k, n) = (pt * patch.t_patch + dt, pf * patch.f_patch + dk, ps * patch.s_patch + dn);
                    sum += (pred.get(t, k, n) - target.get(t, k, n)).norm_sqr();
                }
            }
        }
    }
    Ok(sum / (mask.masked_idx.len() * patch.volume()) as f64)
}

/// Token-space form of [`masked_mse`]. Returns the loss and its gradient
/// with respect to `out`, multiplied by `weight`.
pub(crate) fn token_loss_and_grad<T: Real>(
    out: &[T],
    target: &TokenGrid<T>,
    mask: &MaskResult,
    weight: f64,
) -> Result<(f64, Vec<T>)> {
    if mask.masked_idx.is_empty() {
        return Err(WifoError::EmptyMask);
    }
    let width = target.width;
    let count = (mask.masked_idx.len() * width / 2) as f64;
    let coef = T::lit(2.0 * weight / count);
    let mut grad = vec![T::zero(); out.len()];
    let mut sum = 0.0f64;
    for &idx in &mask.masked_idx {
        let range = idx * width..(idx + 1) * width;
        for ((g, &o), &t) in grad[range.clone()].iter_mut().zip(&out[range.clone()]).zip(&target.tokens[range]) {
            let diff = o - t;
            sum += diff.as_f64() * diff.as_f64();
            *g = coef * diff;
        }
    }
    Ok((sum / count, grad))
}
