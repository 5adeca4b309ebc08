//! 3D patching of CSI grids into token sequences.
//!
//! Tokens are ordered time-slowest, space-fastest. Within a patch the
//! flattened layout is `[channel][dt][dk][dn]` with the real channel first,
//! which makes a per-token affine map identical to a 3D convolution whose
//! kernel and stride both equal the patch size.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::CsiGrid;
use crate::error::{Result, WifoError};
use crate::num::{gemm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    pub t_patch: usize,
    pub f_patch: usize,
    pub s_patch: usize,
}

impl PatchSpec {
    pub const fn new(t_patch: usize, f_patch: usize, s_patch: usize) -> Self {
        PatchSpec {
            t_patch,
            f_patch,
            s_patch,
        }
    }

    /// Number of complex elements in one patch.
    pub fn volume(&self) -> usize {
        self.t_patch * self.f_patch * self.s_patch
    }

    /// Width of a raw (flattened, real/imag split) token.
    pub fn token_width(&self) -> usize {
        2 * self.volume()
    }

    /// Token grid dimensions for a `(T, K, N)` grid, or the offending axis.
    pub fn grid_dims(&self, shape: (usize, usize, usize)) -> Result<GridDims> {
        let (t, k, n) = shape;
        if self.t_patch == 0 || self.f_patch == 0 || self.s_patch == 0 {
            return Err(WifoError::InvalidArgument("patch sizes must be at least 1".into()));
        }
        for (axis, len, p) in [("time", t, self.t_patch), ("frequency", k, self.f_patch), ("space", n, self.s_patch)] {
            if len == 0 || len % p != 0 {
                return Err(WifoError::shape(axis, format!("length {len} is not divisible by patch size {p}")));
            }
        }
        Ok(GridDims {
            t: t / self.t_patch,
            f: k / self.f_patch,
            s: n / self.s_patch,
        })
    }
}

/// Token-grid extents along time, frequency and space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub t: usize,
    pub f: usize,
    pub s: usize,
}

impl GridDims {
    pub const fn new(t: usize, f: usize, s: usize) -> Self {
        GridDims { t, f, s }
    }

    pub fn num_tokens(&self) -> usize {
        self.t * self.f * self.s
    }

    #[inline]
    pub fn index(&self, [pt, pf, ps]: [usize; 3]) -> usize {
        (pt * self.f + pf) * self.s + ps
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let ps = index % self.s;
        let pf = (index / self.s) % self.f;
        let pt = index / (self.s * self.f);
        [pt, pf, ps]
    }

    /// Coordinates of every token in canonical order.
    pub fn all_coords(&self) -> Vec<[usize; 3]> {
        (0..self.num_tokens()).map(|i| self.coords(i)).collect()
    }
}

/// A token sequence with its grid geometry. `tokens` is row-major
/// `num_tokens × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid<T> {
    pub dims: GridDims,
    pub width: usize,
    pub tokens: Vec<T>,
    pub coords: Vec<[usize; 3]>,
}

impl<T: Real> TokenGrid<T> {
    pub fn num_tokens(&self) -> usize {
        self.dims.num_tokens()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.tokens[i * self.width..(i + 1) * self.width]
    }
}

/// Split a grid into raw tokens of width `2·t·k·n`.
pub fn patchify<T: Real>(grid: &CsiGrid, spec: PatchSpec) -> Result<TokenGrid<T>> {
    let dims = spec.grid_dims(grid.shape())?;
    let vol = spec.volume();
    let width = 2 * vol;
    let mut tokens = vec![T::zero(); dims.num_tokens() * width];
    for (idx, row) in tokens.chunks_exact_mut(width).enumerate() {
        let [pt, pf, ps] = dims.coords(idx);
        let mut o = 0;
        for dt in 0..spec.t_patch {
            for dk in 0..spec.f_patch {
                for dn in 0..spec.s_patch {
                    let z = grid.get(pt * spec.t_patch + dt, pf * spec.f_patch + dk, ps * spec.s_patch + dn);
                    row[o] = T::lit(z.re);
                    row[vol + o] = T::lit(z.im);
                    o += 1;
                }
            }
        }
    }
    Ok(TokenGrid {
        dims,
        width,
        tokens,
        coords: dims.all_coords(),
    })
}

/// Inverse of [`patchify`]; the first half of each token is the real part.
pub fn unpatchify<T: Real>(tokens: &TokenGrid<T>, spec: PatchSpec) -> Result<CsiGrid> {
    let vol = spec.volume();
    if tokens.width != 2 * vol {
        return Err(WifoError::shape(
            "token",
            format!("token width {} does not match patch width {}", tokens.width, 2 * vol),
        ));
    }
    let dims = tokens.dims;
    if tokens.tokens.len() != dims.num_tokens() * tokens.width {
        return Err(WifoError::shape("token", "token buffer length does not match grid dims"));
    }
    let mut grid = CsiGrid::zeros(dims.t * spec.t_patch, dims.f * spec.f_patch, dims.s * spec.s_patch);
    for (idx, row) in tokens.tokens.chunks_exact(tokens.width).enumerate() {
        let [pt, pf, ps] = dims.coords(idx);
        let mut o = 0;
        for dt in 0..spec.t_patch {
            for dk in 0..spec.f_patch {
                for dn in 0..spec.s_patch {
                    let z = Complex64::new(row[o].as_f64(), row[vol + o].as_f64());
                    grid.set(pt * spec.t_patch + dt, pf * spec.f_patch + dk, ps * spec.s_patch + dn, z);
                    o += 1;
                }
            }
        }
    }
    Ok(grid)
}

/// Per-token affine map `row_i ↦ weight·row_i + bias`, with `weight` stored
/// `out × in` row-major.
pub fn embed<T: Real>(tokens: &TokenGrid<T>, weight: &[T], bias: &[T]) -> Result<TokenGrid<T>> {
    let d_in = tokens.width;
    let d_out = bias.len();
    if weight.len() != d_out * d_in {
        return Err(WifoError::shape(
            "embedding",
            format!("weight has {} entries, expected {d_out}×{d_in}", weight.len()),
        ));
    }
    let rows = tokens.num_tokens();
    let out = affine(&tokens.tokens, rows, d_in, weight, bias);
    Ok(TokenGrid {
        dims: tokens.dims,
        width: d_out,
        tokens: out,
        coords: tokens.coords.clone(),
    })
}

/// `Y = X·Wᵀ + b` for `X: rows × d_in`, `W: d_out × d_in`.
pub(crate) fn affine<T: Real>(x: &[T], rows: usize, d_in: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let d_out = bias.len();
    let mut y = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(
        rows,
        d_in,
        d_out,
        T::one(),
        x,
        (d_in as isize, 1),
        weight,
        (1, d_in as isize),
        T::one(),
        &mut y,
        (d_out as isize, 1),
    );
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(t: usize, k: usize, n: usize, seed: u64) -> CsiGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * k * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CsiGrid::from_vec(t, k, n, data).unwrap()
    }

    #[test]
    fn token_count_for_paper_patch() {
        let g = random_grid(16, 32, 32, 0);
        let tok = patchify::<f64>(&g, PatchSpec::new(4, 4, 4)).unwrap();
        assert_eq!(tok.num_tokens(), 256);
        assert_eq!(tok.width, 128);
        assert_eq!(tok.dims, GridDims::new(4, 8, 8));
    }

    #[test]
    fn single_token_holds_whole_grid() {
        let g = random_grid(2, 3, 2, 1);
        let tok = patchify::<f64>(&g, PatchSpec::new(2, 3, 2)).unwrap();
        assert_eq!(tok.num_tokens(), 1);
        let re: Vec<f64> = g.data().iter().map(|z| z.re).collect();
        let im: Vec<f64> = g.data().iter().map(|z| z.im).collect();
        assert_eq!(&tok.tokens[..12], &re[..]);
        assert_eq!(&tok.tokens[12..], &im[..]);
        assert_eq!(unpatchify(&tok, PatchSpec::new(2, 3, 2)).unwrap(), g);
    }

    #[test]
    fn non_divisible_time_axis_rejected() {
        let g = random_grid(15, 8, 4, 2);
        match patchify::<f32>(&g, PatchSpec::new(4, 4, 4)) {
            Err(WifoError::ShapeMismatch { axis, .. }) => assert_eq!(axis, "time"),
            other => panic!("expected time-axis error, got {other:?}"),
        }
    }

    #[test]
    fn zero_tokens_give_zero_grid() {
        let spec = PatchSpec::new(2, 2, 2);
        let dims = GridDims::new(2, 1, 2);
        let tok = TokenGrid {
            dims,
            width: 16,
            tokens: vec![0.0f64; 4 * 16],
            coords: dims.all_coords(),
        };
        let g = unpatchify(&tok, spec).unwrap();
        assert_eq!(g, CsiGrid::zeros(4, 2, 4));
    }

    #[test]
    fn unpatchify_rejects_width_mismatch() {
        let g = random_grid(4, 4, 4, 3);
        let tok = patchify::<f64>(&g, PatchSpec::new(2, 2, 2)).unwrap();
        assert!(unpatchify(&tok, PatchSpec::new(4, 2, 2)).is_err());
    }

    #[test]
    fn index_coords_bijection() {
        let dims = GridDims::new(3, 5, 2);
        for i in 0..dims.num_tokens() {
            assert_eq!(dims.index(dims.coords(i)), i);
        }
    }

    #[test]
    fn embed_zero_weight_and_identity() {
        let g = random_grid(4, 4, 4, 4);
        let spec = PatchSpec::new(2, 2, 2);
        let tok = patchify::<f64>(&g, spec).unwrap();
        let w = tok.width;
        let bias: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let e = embed(&tok, &vec![0.0; 5 * w], &bias).unwrap();
        for i in 0..e.num_tokens() {
            assert_eq!(e.row(i), &bias[..]);
        }
        let mut eye = vec![0.0; w * w];
        for i in 0..w {
            eye[i * w + i] = 1.0;
        }
        let same = embed(&tok, &eye, &vec![0.0; w]).unwrap();
        assert_eq!(same.tokens, tok.tokens);
    }

    #[test]
    fn embed_matches_naive_matmul() {
        let g = random_grid(4, 8, 4, 5);
        let tok = patchify::<f64>(&g, PatchSpec::new(2, 4, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (d_out, d_in) = (7, tok.width);
        let w: Vec<f64> = (0..d_out * d_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = embed(&tok, &w, &b).unwrap();
        for i in 0..tok.num_tokens() {
            for o in 0..d_out {
                let mut acc = b[o];
                for p in 0..d_in {
                    acc += w[o * d_in + p] * tok.tokens[i * d_in + p];
                }
                assert!((acc - e.tokens[i * d_out + o]).abs() < 1e-6);
            }
        }
        assert!(embed(&tok, &w[1..], &b).is_err());
    }

    #[test]
    fn embed_equals_strided_conv3d() {
        // Direct 3D convolution with kernel = stride = patch over 2 channels.
        let spec = PatchSpec::new(2, 2, 1);
        let g = random_grid(4, 4, 2, 7);
        let tok = patchify::<f64>(&g, spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d_out = 3;
        let w: Vec<f64> = (0..d_out * tok.width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = vec![0.25, -0.5, 0.0];
        let e = embed(&tok, &w, &b).unwrap();
        for idx in 0..tok.num_tokens() {
            let [pt, pf, ps] = tok.dims.coords(idx);
            for o in 0..d_out {
                let mut acc = b[o];
                for c in 0..2 {
                    for dt in 0..2 {
                        for dk in 0..2 {
                            let z = g.get(pt * 2 + dt, pf * 2 + dk, ps);
                            let x = if c == 0 { z.re } else { z.im };
                            let kernel = w[o * tok.width + c * 4 + dt * 2 + dk];
                            acc += kernel * x;
                        }
                    }
                }
                assert!((acc - e.tokens[idx * d_out + o]).abs() < 1e-12);
            }
        }
    }
}
