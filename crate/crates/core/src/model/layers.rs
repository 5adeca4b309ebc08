//! Forward and backward kernels for the transformer building blocks.
//!
//! Activations are row-major `rows × width` slices. Backward functions
//! accumulate parameter gradients into a gradient buffer of the same shape
//! and return the gradient with respect to the layer input.

use super::params::{Block, LayerNorm, Linear};
use crate::num::{gemm, Real};
use crate::patch::affine;

pub(crate) const LN_EPS: f64 = 1e-6;

pub(crate) fn linear_forward<T: Real>(x: &[T], rows: usize, lin: &Linear<T>) -> Vec<T> {
    debug_assert_eq!(x.len(), rows * lin.d_in);
    affine(x, rows, lin.d_in, &lin.weight, &lin.bias)
}

pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    rows: usize,
    lin: &Linear<T>,
    dy: &[T],
    grad: &mut Linear<T>,
    want_dx: bool,
) -> Vec<T> {
    let (d_in, d_out) = (lin.d_in, lin.d_out);
    // dW += dYᵀ·X
    gemm(
        d_out,
        rows,
        d_in,
        T::one(),
        dy,
        (1, d_out as isize),
        x,
        (d_in as isize, 1),
        T::one(),
        &mut grad.weight,
        (d_in as isize, 1),
    );
    for row in dy.chunks_exact(d_out) {
        for (b, g) in grad.bias.iter_mut().zip(row) {
            *b += *g;
        }
    }
    if !want_dx {
        return Vec::new();
    }
    // dX = dY·W
    let mut dx = vec![T::zero(); rows * d_in];
    gemm(
        rows,
        d_out,
        d_in,
        T::one(),
        dy,
        (d_out as isize, 1),
        &lin.weight,
        (d_in as isize, 1),
        T::zero(),
        &mut dx,
        (d_in as isize, 1),
    );
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layernorm_forward<T: Real>(x: &[T], d: usize, ln: &LayerNorm<T>) -> (Vec<T>, LnCache<T>) {
    let rows = x.len() / d;
    let eps = T::lit(LN_EPS);
    let inv_d = T::one() / T::lit(d as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * ln.gain[c] + ln.bias[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub(crate) fn layernorm_backward<T: Real>(
    cache: &LnCache<T>,
    dy: &[T],
    d: usize,
    ln: &LayerNorm<T>,
    grad: &mut LayerNorm<T>,
) -> Vec<T> {
    let rows = cache.rstd.len();
    let inv_d = T::one() / T::lit(d as f64);
    let mut dx = vec![T::zero(); rows * d];
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let g = &dy[r * d..(r + 1) * d];
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for c in 0..d {
            grad.gain[c] += g[c] * xh[c];
            grad.bias[c] += g[c];
            let v = g[c] * ln.gain[c];
            dxhat[c] = v;
            sum_dxhat += v;
            sum_dxhat_xhat += v * xh[c];
        }
        let m1 = sum_dxhat * inv_d;
        let m2 = sum_dxhat_xhat * inv_d;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] = rs * (dxhat[c] - m1 - xh[c] * m2);
        }
    }
    dx
}

/// Exact (erf-based) GELU.
#[inline]
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    let cdf = half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * T::lit(0.398_942_280_401_432_7);
    cdf + x * pdf
}

/// Multi-head self-attention core on a fused `rows × 3D` qkv buffer.
/// Returns the concatenated head outputs (`rows × D`) and the attention
/// probabilities (`heads × rows × rows`).
pub(crate) fn attention_forward<T: Real>(qkv: &[T], rows: usize, d: usize, heads: usize) -> (Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let ld = (3 * d) as isize;
    let mut out = vec![T::zero(); rows * d];
    let mut probs = vec![T::zero(); heads * rows * rows];
    for h in 0..heads {
        let q = &qkv[h * dh..];
        let k = &qkv[d + h * dh..];
        let v = &qkv[2 * d + h * dh..];
        let p = &mut probs[h * rows * rows..(h + 1) * rows * rows];
        gemm(rows, dh, rows, scale, q, (ld, 1), k, (1, ld), T::zero(), p, (rows as isize, 1));
        for row in p.chunks_exact_mut(rows) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            let inv = T::one() / sum;
            row.iter_mut().for_each(|x| *x *= inv);
        }
        gemm(rows, rows, dh, T::one(), p, (rows as isize, 1), v, (ld, 1), T::zero(), &mut out[h * dh..], (d as isize, 1));
    }
    (out, probs)
}

pub(crate) fn attention_backward<T: Real>(
    qkv: &[T],
    probs: &[T],
    dout: &[T],
    rows: usize,
    d: usize,
    heads: usize,
) -> Vec<T> {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let ld = (3 * d) as isize;
    let rs = rows as isize;
    let mut dqkv = vec![T::zero(); rows * 3 * d];
    let mut dp = vec![T::zero(); rows * rows];
    for h in 0..heads {
        let p = &probs[h * rows * rows..(h + 1) * rows * rows];
        let dout_h = &dout[h * dh..];
        // dV = Pᵀ·dO
        gemm(rows, rows, dh, T::one(), p, (1, rs), dout_h, (d as isize, 1), T::zero(), &mut dqkv[2 * d + h * dh..], (ld, 1));
        // dP = dO·Vᵀ
        let v = &qkv[2 * d + h * dh..];
        gemm(rows, dh, rows, T::one(), dout_h, (d as isize, 1), v, (1, ld), T::zero(), &mut dp, (rs, 1));
        // dS = P ⊙ (dP − rowsum(dP ⊙ P)), scaled by the logit scale.
        for (prow, drow) in p.chunks_exact(rows).zip(dp.chunks_exact_mut(rows)) {
            let dot = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum::<T>();
            for (g, &pv) in drow.iter_mut().zip(prow) {
                *g = pv * (*g - dot) * scale;
            }
        }
        let q = &qkv[h * dh..];
        let k = &qkv[d + h * dh..];
        // dQ = dS·K, dK = dSᵀ·Q
        gemm(rows, rows, dh, T::one(), &dp, (rs, 1), k, (ld, 1), T::zero(), &mut dqkv[h * dh..], (ld, 1));
        gemm(rows, rows, dh, T::one(), &dp, (1, rs), q, (ld, 1), T::zero(), &mut dqkv[d + h * dh..], (ld, 1));
    }
    dqkv
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache<T> {
    ln1: LnCache<T>,
    n1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LnCache<T>,
    n2: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
}

pub(crate) fn block_forward<T: Real>(x: &[T], rows: usize, heads: usize, blk: &Block<T>) -> (Vec<T>, BlockCache<T>) {
    let d = blk.proj.d_out;
    let (n1, ln1) = layernorm_forward(x, d, &blk.norm1);
    let qkv = linear_forward(&n1, rows, &blk.qkv);
    let (attn, probs) = attention_forward(&qkv, rows, d, heads);
    let a = linear_forward(&attn, rows, &blk.proj);
    let x1: Vec<T> = x.iter().zip(&a).map(|(&u, &v)| u + v).collect();
    let (n2, ln2) = layernorm_forward(&x1, d, &blk.norm2);
    let hidden_pre = linear_forward(&n2, rows, &blk.fc1);
    let hidden: Vec<T> = hidden_pre.iter().map(|&v| gelu(v)).collect();
    let f = linear_forward(&hidden, rows, &blk.fc2);
    let y: Vec<T> = x1.iter().zip(&f).map(|(&u, &v)| u + v).collect();
    (
        y,
        BlockCache {
            ln1,
            n1,
            qkv,
            probs,
            attn,
            ln2,
            n2,
            hidden_pre,
            hidden,
        },
    )
}

pub(crate) fn block_backward<T: Real>(
    cache: &BlockCache<T>,
    dy: &[T],
    rows: usize,
    heads: usize,
    blk: &Block<T>,
    grad: &mut Block<T>,
) -> Vec<T> {
    let d = blk.proj.d_out;
    // Feed-forward branch.
    let dhidden = linear_backward(&cache.hidden, rows, &blk.fc2, dy, &mut grad.fc2, true);
    let dpre: Vec<T> = dhidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(&g, &x)| g * gelu_grad(x))
        .collect();
    let dn2 = linear_backward(&cache.n2, rows, &blk.fc1, &dpre, &mut grad.fc1, true);
    let mut dx1 = layernorm_backward(&cache.ln2, &dn2, d, &blk.norm2, &mut grad.norm2);
    dx1.iter_mut().zip(dy).for_each(|(a, &b)| *a += b);
    // Attention branch.
    let dattn = linear_backward(&cache.attn, rows, &blk.proj, &dx1, &mut grad.proj, true);
    let dqkv = attention_backward(&cache.qkv, &cache.probs, &dattn, rows, d, heads);
    let dn1 = linear_backward(&cache.n1, rows, &blk.qkv, &dqkv, &mut grad.qkv, true);
    let mut dx = layernorm_backward(&cache.ln1, &dn1, d, &blk.norm1, &mut grad.norm1);
    dx.iter_mut().zip(&dx1).for_each(|(a, &b)| *a += b);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0f64) + 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5f64] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn single_token_attention_copies_value() {
        let d = 4;
        let qkv: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let (out, probs) = attention_forward(&qkv, 1, d, 2);
        assert_eq!(probs, vec![1.0, 1.0]);
        assert_eq!(out, qkv[8..12].to_vec());
    }

    #[test]
    fn layernorm_output_is_normalized() {
        let ln = LayerNorm {
            gain: vec![1.0f64; 5],
            bias: vec![0.0; 5],
        };
        let x = [1.0, 2.0, 3.0, 4.0, 10.0];
        let (y, _) = layernorm_forward(&x, 5, &ln);
        let mean: f64 = y.iter().sum::<f64>() / 5.0;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}
