use rayon::prelude::*;

use super::loss::token_loss_and_grad;
use crate::error::{Result, WifoError};
use crate::mask::MaskResult;
use crate::model::{backward, forward_traced, Parameters};
use crate::num::Real;
use crate::patch::TokenGrid;

/// Items per work unit. Fixed so the reduction order, and therefore the
/// result, does not depend on the number of threads.
const CHUNK: usize = 4;

/// One loss term: reconstruct `tokens` under `mask`, weighted by `weight`.
#[derive(Debug, Clone, Copy)]
pub struct GradItem<'a, T> {
    pub tokens: &'a TokenGrid<T>,
    pub mask: &'a MaskResult,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub grads: Parameters<T>,
    /// Unweighted per-item losses.
    pub losses: Vec<f64>,
    /// Mean loss over the batch.
    pub mean_loss: f64,
}

fn chunk_gradients<T: Real>(params: &Parameters<T>, items: &[GradItem<'_, T>]) -> Result<(Parameters<T>, Vec<f64>)> {
    let mut grads = Parameters::zeros(&params.config);
    let mut losses = Vec::with_capacity(items.len());
    for item in items {
        let (out, trace) = forward_traced(params, item.tokens, item.mask)?;
        let (loss, d_out) = token_loss_and_grad(&out, item.tokens, item.mask, item.weight)?;
        if !loss.is_finite() {
            return Err(WifoError::NonFinite(format!(
                "loss {loss} on an item with {} masked of {} tokens",
                item.mask.masked_idx.len(),
                item.mask.num_tokens()
            )));
        }
        backward(params, &trace, &d_out, &mut grads);
        losses.push(loss);
    }
    Ok((grads, losses))
}

/// Add `Σ weight·∇loss` over `items` into `grads`; returns unweighted
/// per-item losses. Work is parallel over fixed-size chunks and reduced in
/// item order.
pub fn accumulate_gradients<T: Real>(
    params: &Parameters<T>,
    items: &[GradItem<'_, T>],
    grads: &mut Parameters<T>,
) -> Result<Vec<f64>> {
    let chunks: Vec<&[GradItem<'_, T>]> = items.chunks(CHUNK).collect();
    let wave = rayon::current_num_threads().max(1);
    let mut losses = Vec::with_capacity(items.len());
    for group in chunks.chunks(wave) {
        let results = group
            .par_iter()
            .map(|c| chunk_gradients(params, c))
            .collect::<Result<Vec<_>>>()?;
        for (g, l) in results {
            grads.axpy(T::one(), &g);
            losses.extend(l);
        }
    }
    if !grads.all_finite() {
        return Err(WifoError::NonFinite("gradient contains non-finite values".into()));
    }
    Ok(losses)
}

/// Exact gradient of the mean masked MSE over a batch of `(tokens, mask)`.
pub fn compute_gradients<T: Real>(
    params: &Parameters<T>,
    batch: &[(&TokenGrid<T>, &MaskResult)],
) -> Result<Gradients<T>> {
    if batch.is_empty() {
        return Err(WifoError::InvalidArgument("empty batch".into()));
    }
    let w = 1.0 / batch.len() as f64;
    let items: Vec<GradItem<'_, T>> = batch
        .iter()
        .map(|&(tokens, mask)| GradItem { tokens, mask, weight: w })
        .collect();
    let mut grads = Parameters::zeros(&params.config);
    let losses = accumulate_gradients(params, &items, &mut grads)?;
    let mean_loss = losses.iter().sum::<f64>() * w;
    Ok(Gradients {
        grads,
        losses,
        mean_loss,
    })
}
