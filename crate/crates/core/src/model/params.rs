use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelConfig;
use crate::num::Real;
use crate::rng::rng_from;

/// Role of a tensor, used for weight-decay selection and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    NormGain,
    NormBias,
    MaskToken,
}

impl ParamKind {
    /// Normalization parameters and the mask token are not decayed.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Bias)
    }
}

/// Affine map with `weight` stored `d_out × d_in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub d_in: usize,
    pub d_out: usize,
}

impl<T: Real> Linear<T> {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: vec![T::zero(); d_in * d_out],
            bias: vec![T::zero(); d_out],
            d_in,
            d_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    fn new(d: usize, gain: T) -> Self {
        LayerNorm {
            gain: vec![gain; d],
            bias: vec![T::zero(); d],
        }
    }
}

/// Pre-normalization transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub norm1: LayerNorm<T>,
    /// Fused query/key/value projection, `3·D × D`.
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Real> Block<T> {
    fn zeros(d: usize, hidden: usize, gain: T) -> Self {
        Block {
            norm1: LayerNorm::new(d, gain),
            qkv: Linear::zeros(d, 3 * d),
            proj: Linear::zeros(d, d),
            norm2: LayerNorm::new(d, gain),
            fc1: Linear::zeros(d, hidden),
            fc2: Linear::zeros(hidden, d),
        }
    }
}

/// Every trainable tensor of the model. The same structure doubles as a
/// gradient buffer and as optimizer moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub config: ModelConfig,
    pub patch_embed: Linear<T>,
    pub enc_blocks: Vec<Block<T>>,
    pub enc_norm: LayerNorm<T>,
    pub enc_to_dec: Linear<T>,
    pub mask_token: Vec<T>,
    pub dec_blocks: Vec<Block<T>>,
    pub dec_norm: LayerNorm<T>,
    pub head: Linear<T>,
}

/// Name, shape and role of one tensor in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

impl<T: Real> Parameters<T> {
    /// All-zero tensors (normalization gains included) shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::filled(config, T::zero())
    }

    fn filled(config: &ModelConfig, gain: T) -> Self {
        let tok = config.patch.token_width();
        let (de, dd) = (config.enc_width, config.dec_width);
        Parameters {
            config: *config,
            patch_embed: Linear::zeros(tok, de),
            enc_blocks: (0..config.enc_depth)
                .map(|_| Block::zeros(de, config.mlp_hidden(de), gain))
                .collect(),
            enc_norm: LayerNorm::new(de, gain),
            enc_to_dec: Linear::zeros(de, dd),
            mask_token: vec![T::zero(); dd],
            dec_blocks: (0..config.dec_depth)
                .map(|_| Block::zeros(dd, config.mlp_hidden(dd), gain))
                .collect(),
            dec_norm: LayerNorm::new(dd, gain),
            head: Linear::zeros(dd, tok),
        }
    }

    /// Truncated-normal weights (std 0.02, clipped at ±2 std), zero biases,
    /// unit normalization gains. Deterministic per seed.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::filled(config, T::one());
        let mut rng = rng_from(seed, &[0x1417]);
        p.for_each_tensor_mut(|_, _, kind, data| {
            if matches!(kind, ParamKind::Weight | ParamKind::MaskToken) {
                for v in data.iter_mut() {
                    *v = T::lit(truncated_normal(&mut rng) * 0.02);
                }
            }
        });
        p
    }

    pub fn for_each_tensor<'a>(&'a self, mut f: impl FnMut(&str, &[usize], ParamKind, &'a [T])) {
        let mut g = |name: String, shape: Vec<usize>, kind: ParamKind, data: &'a [T]| f(&name, &shape, kind, data);
        self.visit(&mut g);
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &[usize], ParamKind, &mut [T])) {
        let mut g = |name: String, shape: Vec<usize>, kind: ParamKind, data: &mut [T]| f(&name, &shape, kind, data);
        self.visit_mut(&mut g);
    }

    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, Vec<usize>, ParamKind, &'a [T])) {
        fn linear<'a, T>(prefix: &str, lin: &'a Linear<T>, f: &mut dyn FnMut(String, Vec<usize>, ParamKind, &'a [T])) {
            f(format!("{prefix}.weight"), vec![lin.d_out, lin.d_in], ParamKind::Weight, &lin.weight);
            f(format!("{prefix}.bias"), vec![lin.d_out], ParamKind::Bias, &lin.bias);
        }
        fn norm<'a, T>(prefix: &str, ln: &'a LayerNorm<T>, f: &mut dyn FnMut(String, Vec<usize>, ParamKind, &'a [T])) {
            f(format!("{prefix}.gain"), vec![ln.gain.len()], ParamKind::NormGain, &ln.gain);
            f(format!("{prefix}.bias"), vec![ln.bias.len()], ParamKind::NormBias, &ln.bias);
        }
        fn block<'a, T>(prefix: &str, b: &'a Block<T>, f: &mut dyn FnMut(String, Vec<usize>, ParamKind, &'a [T])) {
            norm(&format!("{prefix}.norm1"), &b.norm1, f);
            linear(&format!("{prefix}.attn.qkv"), &b.qkv, f);
            linear(&format!("{prefix}.attn.proj"), &b.proj, f);
            norm(&format!("{prefix}.norm2"), &b.norm2, f);
            linear(&format!("{prefix}.mlp.fc1"), &b.fc1, f);
            linear(&format!("{prefix}.mlp.fc2"), &b.fc2, f);
        }
        linear("patch_embed", &self.patch_embed, f);
        for (i, b) in self.enc_blocks.iter().enumerate() {
            block(&format!("enc.{i}"), b, f);
        }
        norm("enc_norm", &self.enc_norm, f);
        linear("enc_to_dec", &self.enc_to_dec, f);
        f("mask_token".into(), vec![self.mask_token.len()], ParamKind::MaskToken, &self.mask_token);
        for (i, b) in self.dec_blocks.iter().enumerate() {
            block(&format!("dec.{i}"), b, f);
        }
        norm("dec_norm", &self.dec_norm, f);
        linear("head", &self.head, f);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, Vec<usize>, ParamKind, &'a mut [T])) {
        type Visitor<'v, 'a, T> = dyn FnMut(String, Vec<usize>, ParamKind, &'a mut [T]) + 'v;
        fn linear<'a, T>(prefix: &str, lin: &'a mut Linear<T>, f: &mut Visitor<'_, 'a, T>) {
            f(format!("{prefix}.weight"), vec![lin.d_out, lin.d_in], ParamKind::Weight, &mut lin.weight);
            f(format!("{prefix}.bias"), vec![lin.d_out], ParamKind::Bias, &mut lin.bias);
        }
        fn norm<'a, T>(prefix: &str, ln: &'a mut LayerNorm<T>, f: &mut Visitor<'_, 'a, T>) {
            let d = ln.gain.len();
            f(format!("{prefix}.gain"), vec![d], ParamKind::NormGain, &mut ln.gain);
            f(format!("{prefix}.bias"), vec![d], ParamKind::NormBias, &mut ln.bias);
        }
        fn block<'a, T>(prefix: &str, b: &'a mut Block<T>, f: &mut Visitor<'_, 'a, T>) {
            norm(&format!("{prefix}.norm1"), &mut b.norm1, f);
            linear(&format!("{prefix}.attn.qkv"), &mut b.qkv, f);
            linear(&format!("{prefix}.attn.proj"), &mut b.proj, f);
            norm(&format!("{prefix}.norm2"), &mut b.norm2, f);
            linear(&format!("{prefix}.mlp.fc1"), &mut b.fc1, f);
            linear(&format!("{prefix}.mlp.fc2"), &mut b.fc2, f);
        }
        linear("patch_embed", &mut self.patch_embed, f);
        for (i, b) in self.enc_blocks.iter_mut().enumerate() {
            block(&format!("enc.{i}"), b, f);
        }
        norm("enc_norm", &mut self.enc_norm, f);
        linear("enc_to_dec", &mut self.enc_to_dec, f);
        let d = self.mask_token.len();
        f("mask_token".into(), vec![d], ParamKind::MaskToken, &mut self.mask_token);
        for (i, b) in self.dec_blocks.iter_mut().enumerate() {
            block(&format!("dec.{i}"), b, f);
        }
        norm("dec_norm", &mut self.dec_norm, f);
        linear("head", &mut self.head, f);
    }

    /// Canonical tensor list (names, shapes, roles).
    pub fn specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        self.for_each_tensor(|name, shape, kind, _| {
            out.push(TensorSpec {
                name: name.to_string(),
                shape: shape.to_vec(),
                kind,
            })
        });
        out
    }

    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        self.for_each_tensor(|_, _, _, d| out.push(d));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        let mut g = |_: String, _: Vec<usize>, _: ParamKind, d| out.push(d);
        self.visit_mut(&mut g);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += alpha·other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: T, other: &Parameters<T>) {
        let src = other.slices();
        let mut i = 0;
        self.for_each_tensor_mut(|_, _, _, dst| {
            for (d, s) in dst.iter_mut().zip(src[i]) {
                *d += alpha * *s;
            }
            i += 1;
        });
    }

    pub fn scale(&mut self, alpha: T) {
        self.for_each_tensor_mut(|_, _, _, d| d.iter_mut().for_each(|v| *v *= alpha));
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Convert every tensor to another float type.
    pub fn cast<U: Real>(&self) -> Parameters<U> {
        let mut out = Parameters::<U>::zeros(&self.config);
        let src = self.slices();
        let mut i = 0;
        out.for_each_tensor_mut(|_, _, _, dst| {
            for (d, s) in dst.iter_mut().zip(src[i]) {
                *d = U::lit(s.as_f64());
            }
            i += 1;
        });
        out
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= 2.0 {
            return x;
        }
    }
}

/// Exact number of trainable scalars for `config`.
pub fn param_count(config: &ModelConfig) -> usize {
    let tok = config.patch.token_width();
    let linear = |i: usize, o: usize| i * o + o;
    let block = |d: usize| {
        let h = config.mlp_hidden(d);
        4 * d + linear(d, 3 * d) + linear(d, d) + linear(d, h) + linear(h, d)
    };
    let (de, dd) = (config.enc_width, config.dec_width);
    linear(tok, de)
        + config.enc_depth * block(de)
        + 2 * de
        + linear(de, dd)
        + dd
        + config.dec_depth * block(dd)
        + 2 * dd
        + linear(dd, tok)
}
