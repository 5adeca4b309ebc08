//! Central finite-difference verification of the reverse pass.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::grad::{accumulate_gradients, GradItem};
use super::loss::token_loss_and_grad;
use super::TrainConfig;
use crate::channel::{generate_dataset, ScenarioConfig};
use crate::error::Result;
use crate::mask::{frequency_mask, random_mask, time_mask, MaskResult};
use crate::model::{forward_tokens, ModelConfig, Parameters};
use crate::patch::{patchify, TokenGrid};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub num_samples: usize,
    /// Grid shape `(T, K, N)`; `N` must factor as a 2-row UPA.
    pub grid: (usize, usize, usize),
    /// Scale of the Gaussian jitter added to every parameter after
    /// initialization, so attention and GELU leave their near-linear regime.
    pub jitter: f64,
    /// Negative control: multiply the analytic gradient of this tensor by 1.5.
    pub corrupt_tensor: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
            num_samples: 2,
            grid: (4, 4, 4),
            jitter: 0.2,
            corrupt_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub name: String,
    pub numel: usize,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub worst: GroupError,
    pub tolerance: f64,
    pub passed: bool,
}

fn batch_loss(params: &Parameters<f64>, items: &[GradItem<'_, f64>]) -> Result<f64> {
    let mut total = 0.0;
    for item in items {
        let out = forward_tokens(params, item.tokens, item.mask)?;
        let (loss, _) = token_loss_and_grad(&out, item.tokens, item.mask, 1.0)?;
        total += item.weight * loss;
    }
    Ok(total)
}

/// Compare analytic gradients of the three-task pre-training loss with
/// central differences, tensor by tensor, in double precision.
pub fn check_gradients(config: &ModelConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    config.validate()?;
    let (t, k, n) = opts.grid;
    let mut scenario = ScenarioConfig::new(3.5e9, t, 1e-3, k, 180e3, 2, n / 2);
    scenario.speed_range_mps = (5.0, 30.0);
    scenario.seed = opts.seed;
    let (samples, _) = generate_dataset(&scenario, opts.num_samples)?;
    let tokens: Vec<TokenGrid<f64>> = samples
        .iter()
        .map(|g| patchify(g, config.patch))
        .collect::<Result<_>>()?;

    let ratios = TrainConfig::default().ratios;
    let mut masks: Vec<MaskResult> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        masks.push(random_mask(tok.dims, ratios[0], derive_seed(opts.seed, &[i as u64]))?);
        masks.push(time_mask(tok.dims, ratios[1])?);
        masks.push(frequency_mask(tok.dims, ratios[2])?);
    }
    let weight = 1.0 / masks.len() as f64;
    let items: Vec<GradItem<'_, f64>> = masks
        .iter()
        .enumerate()
        .map(|(i, mask)| GradItem {
            tokens: &tokens[i / 3],
            mask,
            weight,
        })
        .collect();

    let mut params = Parameters::<f64>::init(config, opts.seed);
    let mut rng = rng_from(opts.seed, &[0x6a17]);
    params.for_each_tensor_mut(|_, _, _, d| {
        for v in d.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += opts.jitter * z;
        }
    });

    let mut analytic = Parameters::<f64>::zeros(config);
    accumulate_gradients(&params, &items, &mut analytic)?;
    if let Some(name) = &opts.corrupt_tensor {
        analytic.for_each_tensor_mut(|tn, _, _, d| {
            if tn == name {
                d.iter_mut().for_each(|v| *v *= 1.5);
            }
        });
    }

    let specs = params.specs();
    let analytic_slices: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();
    let h = opts.step;
    let mut groups = Vec::with_capacity(specs.len());
    for (ti, spec) in specs.iter().enumerate() {
        let mut numeric = vec![0.0; spec.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = params.slices()[ti][j];
            params.slices_mut()[ti][j] = orig + h;
            let plus = batch_loss(&params, &items)?;
            params.slices_mut()[ti][j] = orig - h;
            let minus = batch_loss(&params, &items)?;
            params.slices_mut()[ti][j] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let a = &analytic_slices[ti];
        let diff_norm = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n_norm = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = a_norm.max(n_norm);
        let rel_error = if denom == 0.0 { 0.0 } else { diff_norm / denom };
        let max_abs_error = a.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        groups.push(GroupError {
            name: spec.name.clone(),
            numel: spec.numel(),
            rel_error,
            max_abs_error,
            grad_norm: a_norm,
        });
    }
    let worst = groups
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .cloned()
        .expect("model has at least one tensor");
    let passed = worst.rel_error < opts.tolerance && groups.iter().all(|g| g.rel_error.is_finite());
    Ok(GradCheckReport {
        groups,
        worst,
        tolerance: opts.tolerance,
        passed,
    })
}
