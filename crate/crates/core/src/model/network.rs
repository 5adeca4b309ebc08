//! Encoder/decoder forward pass, traced forward for training and the
//! matching reverse pass.

use super::layers::{
    block_backward, block_forward, layernorm_backward, layernorm_forward, linear_backward, linear_forward, BlockCache,
    LnCache,
};
use super::params::{Block, Parameters};
use crate::channel::CsiGrid;
use crate::error::{Result, WifoError};
use crate::mask::MaskResult;
use crate::num::Real;
use crate::patch::{patchify, unpatchify, TokenGrid};
use crate::pe::build_stf_pe;

/// Intermediate activations of one forward pass. Opaque outside the crate.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    visible_idx: Vec<usize>,
    masked_idx: Vec<usize>,
    num_tokens: usize,
    visible_raw: Vec<T>,
    enc_blocks: Vec<BlockCache<T>>,
    enc_ln: LnCache<T>,
    enc_out: Vec<T>,
    dec_blocks: Vec<BlockCache<T>>,
    dec_ln: LnCache<T>,
    dec_out: Vec<T>,
}

fn run_blocks<T: Real>(mut x: Vec<T>, rows: usize, heads: usize, blocks: &[Block<T>]) -> (Vec<T>, Vec<BlockCache<T>>) {
    let mut caches = Vec::with_capacity(blocks.len());
    for blk in blocks {
        let (y, cache) = block_forward(&x, rows, heads, blk);
        caches.push(cache);
        x = y;
    }
    (x, caches)
}

fn add_in_place<T: Real>(x: &mut [T], y: &[T]) {
    x.iter_mut().zip(y).for_each(|(a, &b)| *a += b);
}

fn check_mask(mask: &MaskResult, num_tokens: usize) -> Result<()> {
    if mask.num_tokens() != num_tokens {
        return Err(WifoError::shape(
            "token",
            format!("mask covers {} tokens, grid has {num_tokens}", mask.num_tokens()),
        ));
    }
    if mask.visible_idx.iter().chain(&mask.masked_idx).any(|&i| i >= num_tokens) {
        return Err(WifoError::InvalidArgument("mask index out of range".into()));
    }
    Ok(())
}

fn encode_traced<T: Real>(
    params: &Parameters<T>,
    embedded: &[T],
    coords: &[[usize; 3]],
) -> Result<(Vec<T>, Vec<BlockCache<T>>, LnCache<T>)> {
    let d = params.config.enc_width;
    let rows = coords.len();
    if embedded.len() != rows * d {
        return Err(WifoError::shape(
            "token",
            format!("encoder input has {} values, expected {rows}×{d}", embedded.len()),
        ));
    }
    let mut x = embedded.to_vec();
    add_in_place(&mut x, &build_stf_pe::<T>(coords, d));
    let (x, caches) = run_blocks(x, rows, params.config.enc_heads, &params.enc_blocks);
    let (out, ln) = layernorm_forward(&x, d, &params.enc_norm);
    Ok((out, caches, ln))
}

/// Encoder over the visible tokens: add STF-PE of `coords`, run the blocks,
/// apply the final normalization. `visible_tokens` is `L_vis × D_enc`.
pub fn encode<T: Real>(params: &Parameters<T>, visible_tokens: &[T], coords: &[[usize; 3]]) -> Result<Vec<T>> {
    encode_traced(params, visible_tokens, coords).map(|(out, _, _)| out)
}

fn decode_traced<T: Real>(
    params: &Parameters<T>,
    encoded: &[T],
    mask: &MaskResult,
    all_coords: &[[usize; 3]],
) -> Result<(Vec<T>, Vec<BlockCache<T>>, LnCache<T>, Vec<T>)> {
    let cfg = &params.config;
    let (de, dd) = (cfg.enc_width, cfg.dec_width);
    let total = all_coords.len();
    check_mask(mask, total)?;
    let n_vis = mask.visible_idx.len();
    if encoded.len() != n_vis * de {
        return Err(WifoError::shape(
            "token",
            format!("encoded rows {} do not match {n_vis} visible tokens", encoded.len() / de.max(1)),
        ));
    }
    let projected = linear_forward(encoded, n_vis, &params.enc_to_dec);
    let mut full = vec![T::zero(); total * dd];
    for (r, &idx) in mask.visible_idx.iter().enumerate() {
        full[idx * dd..(idx + 1) * dd].copy_from_slice(&projected[r * dd..(r + 1) * dd]);
    }
    for &idx in &mask.masked_idx {
        full[idx * dd..(idx + 1) * dd].copy_from_slice(&params.mask_token);
    }
    add_in_place(&mut full, &build_stf_pe::<T>(all_coords, dd));
    let (y, caches) = run_blocks(full, total, cfg.dec_heads, &params.dec_blocks);
    let (normed, ln) = layernorm_forward(&y, dd, &params.dec_norm);
    let out = linear_forward(&normed, total, &params.head);
    Ok((out, caches, ln, normed))
}

/// Decoder: project encoder rows, scatter them to canonical positions, fill
/// masked positions with the mask token, add STF-PE, run the blocks and the
/// output head. Returns raw patch predictions, `L × 2tkn`.
pub fn decode<T: Real>(
    params: &Parameters<T>,
    encoded: &[T],
    mask: &MaskResult,
    all_coords: &[[usize; 3]],
) -> Result<Vec<T>> {
    decode_traced(params, encoded, mask, all_coords).map(|(out, ..)| out)
}

fn gather_rows<T: Real>(src: &[T], width: usize, idx: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

/// Full pass on raw tokens, keeping everything needed for [`backward`].
/// Masked tokens are never read.
pub fn forward_traced<T: Real>(
    params: &Parameters<T>,
    tokens: &TokenGrid<T>,
    mask: &MaskResult,
) -> Result<(Vec<T>, ForwardTrace<T>)> {
    let cfg = &params.config;
    if tokens.width != cfg.patch.token_width() {
        return Err(WifoError::shape(
            "token",
            format!("token width {} != model patch width {}", tokens.width, cfg.patch.token_width()),
        ));
    }
    let total = tokens.num_tokens();
    check_mask(mask, total)?;
    let visible_raw = gather_rows(&tokens.tokens, tokens.width, &mask.visible_idx);
    let n_vis = mask.visible_idx.len();
    let embedded = linear_forward(&visible_raw, n_vis, &params.patch_embed);
    let vis_coords: Vec<[usize; 3]> = mask.visible_idx.iter().map(|&i| tokens.coords[i]).collect();
    let (enc_out, enc_blocks, enc_ln) = encode_traced(params, &embedded, &vis_coords)?;
    let (out, dec_blocks, dec_ln, dec_out) = decode_traced(params, &enc_out, mask, &tokens.coords)?;
    Ok((
        out,
        ForwardTrace {
            visible_idx: mask.visible_idx.clone(),
            masked_idx: mask.masked_idx.clone(),
            num_tokens: total,
            visible_raw,
            enc_blocks,
            enc_ln,
            enc_out,
            dec_blocks,
            dec_ln,
            dec_out,
        },
    ))
}

/// Reverse pass: accumulate into `grads` the gradient of a scalar loss whose
/// derivative with respect to the raw output tokens is `d_out`.
pub fn backward<T: Real>(params: &Parameters<T>, trace: &ForwardTrace<T>, d_out: &[T], grads: &mut Parameters<T>) {
    let cfg = &params.config;
    let (de, dd) = (cfg.enc_width, cfg.dec_width);
    let total = trace.num_tokens;
    let n_vis = trace.visible_idx.len();

    let d_normed = linear_backward(&trace.dec_out, total, &params.head, d_out, &mut grads.head, true);
    let mut dy = layernorm_backward(&trace.dec_ln, &d_normed, dd, &params.dec_norm, &mut grads.dec_norm);
    for (i, cache) in trace.dec_blocks.iter().enumerate().rev() {
        dy = block_backward(cache, &dy, total, cfg.dec_heads, &params.dec_blocks[i], &mut grads.dec_blocks[i]);
    }
    // The positional encoding is constant; split the gradient between the
    // mask token and the projected encoder rows.
    for &idx in &trace.masked_idx {
        add_in_place(&mut grads.mask_token, &dy[idx * dd..(idx + 1) * dd]);
    }
    if n_vis == 0 {
        return;
    }
    let d_projected = gather_rows(&dy, dd, &trace.visible_idx);
    let d_enc_out = linear_backward(&trace.enc_out, n_vis, &params.enc_to_dec, &d_projected, &mut grads.enc_to_dec, true);
    let mut dx = layernorm_backward(&trace.enc_ln, &d_enc_out, de, &params.enc_norm, &mut grads.enc_norm);
    for (i, cache) in trace.enc_blocks.iter().enumerate().rev() {
        dx = block_backward(cache, &dx, n_vis, cfg.enc_heads, &params.enc_blocks[i], &mut grads.enc_blocks[i]);
    }
    linear_backward(&trace.visible_raw, n_vis, &params.patch_embed, &dx, &mut grads.patch_embed, false);
}

/// Raw output tokens for a token grid under `mask`.
pub fn forward_tokens<T: Real>(params: &Parameters<T>, tokens: &TokenGrid<T>, mask: &MaskResult) -> Result<Vec<T>> {
    forward_traced(params, tokens, mask).map(|(out, _)| out)
}

/// patchify → embed → select visible → encode → decode → unpatchify, with
/// the real and imaginary channels recombined into complex CSI.
pub fn reconstruct<T: Real>(params: &Parameters<T>, grid: &CsiGrid, mask: &MaskResult) -> Result<CsiGrid> {
    let tokens = patchify::<T>(grid, params.config.patch)?;
    let out = forward_tokens(params, &tokens, mask)?;
    let pred = TokenGrid {
        dims: tokens.dims,
        width: tokens.width,
        tokens: out,
        coords: tokens.coords,
    };
    unpatchify(&pred, params.config.patch)
}
