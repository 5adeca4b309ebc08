use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grad::{accumulate_gradients, GradItem};
use super::loss::token_loss_and_grad;
use super::optim::{adamw_update, lr_schedule, OptimizerState};
use super::TrainConfig;
use crate::channel::CsiGrid;
use crate::error::{Result, WifoError};
use crate::mask::{frequency_mask, random_mask, time_mask, MaskResult};
use crate::model::{forward_tokens, ModelConfig, Parameters};
use crate::num::Real;
use crate::patch::{patchify, TokenGrid};
use crate::rng::{derive_seed, rng_from};

const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_ORDER: u64 = 0x6f72_6472;
const TAG_MASK: u64 = 0x6d61_736b;

/// Per-task reconstruction losses and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub random: f64,
    pub time: f64,
    pub frequency: f64,
    pub mean: f64,
    pub epoch: usize,
    pub batch: usize,
    pub dataset_id: String,
}

impl LossReport {
    fn from_tasks(random: f64, time: f64, frequency: f64) -> Self {
        LossReport {
            random,
            time,
            frequency,
            mean: (random + time + frequency) / 3.0,
            epoch: 0,
            batch: 0,
            dataset_id: String::new(),
        }
    }
}

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossReport,
    pub lr: f64,
}

/// A named collection of same-shape samples.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub id: String,
    pub samples: Vec<CsiGrid>,
}

/// Hooks for logging and checkpointing. Errors abort training.
pub trait TrainObserver<T> {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn on_epoch_end(&mut self, _epoch: usize, _summary: &LossReport, _params: &Parameters<T>) -> Result<()> {
        Ok(())
    }
}

pub struct NullObserver;

impl<T> TrainObserver<T> for NullObserver {}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    /// Mean over all steps of each epoch, with `dataset_id` = "all".
    pub epochs: Vec<LossReport>,
}

fn batch_masks(batch: &[&TokenGrid<impl Real>], ratios: [f64; 3], mask_seed: u64) -> Result<Vec<MaskResult>> {
    let mut masks = Vec::with_capacity(3 * batch.len());
    for (i, tok) in batch.iter().enumerate() {
        masks.push(random_mask(tok.dims, ratios[0], derive_seed(mask_seed, &[i as u64]))?);
    }
    for tok in batch {
        masks.push(time_mask(tok.dims, ratios[1])?);
    }
    for tok in batch {
        masks.push(frequency_mask(tok.dims, ratios[2])?);
    }
    Ok(masks)
}

fn task_means(losses: &[f64], batch_len: usize) -> LossReport {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / batch_len as f64;
    LossReport::from_tasks(
        mean(&losses[..batch_len]),
        mean(&losses[batch_len..2 * batch_len]),
        mean(&losses[2 * batch_len..]),
    )
}

/// Random, time and frequency reconstruction on one homogeneous batch,
/// followed by a single AdamW step on the mean of the three task losses.
/// `mask_seed` drives the per-sample random masks.
pub fn pretrain_step<T: Real>(
    params: &mut Parameters<T>,
    state: &mut OptimizerState<T>,
    batch: &[&TokenGrid<T>],
    mask_seed: u64,
    lr: f64,
    config: &TrainConfig,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(WifoError::InvalidArgument("empty batch".into()));
    }
    let dims = batch[0].dims;
    if batch.iter().any(|t| t.dims != dims || t.width != batch[0].width) {
        return Err(WifoError::InvalidArgument("samples in a batch must share one shape".into()));
    }
    let masks = batch_masks(batch, config.ratios, mask_seed)?;
    let weight = 1.0 / masks.len() as f64;
    let items: Vec<GradItem<'_, T>> = masks
        .iter()
        .enumerate()
        .map(|(i, mask)| GradItem {
            tokens: batch[i % batch.len()],
            mask,
            weight,
        })
        .collect();
    let mut grads = Parameters::zeros(&params.config);
    let losses = accumulate_gradients(params, &items, &mut grads)?;
    adamw_update(params, &grads, state, lr, config);
    if !params.all_finite() {
        return Err(WifoError::NonFinite(format!("parameters became non-finite at optimizer step {}", state.step)));
    }
    Ok(task_means(&losses, batch.len()))
}

fn tokenize<T: Real>(sets: &[TrainSet], model: &ModelConfig) -> Result<Vec<Vec<TokenGrid<T>>>> {
    sets.iter()
        .map(|set| {
            if set.samples.is_empty() {
                return Err(WifoError::InvalidArgument(format!("dataset '{}' has no samples", set.id)));
            }
            let shape = set.samples[0].shape();
            if set.samples.iter().any(|s| s.shape() != shape) {
                return Err(WifoError::InvalidArgument(format!("dataset '{}' mixes sample shapes", set.id)));
            }
            set.samples.par_iter().map(|g| patchify::<T>(g, model.patch)).collect()
        })
        .collect()
}

/// Pre-train a freshly initialized model (seeded by `config.seed`) on all
/// datasets jointly. Each epoch shuffles samples within every dataset,
/// cuts them into batches and shuffles the global batch order.
pub fn pretrain<T: Real>(
    sets: &[TrainSet],
    model: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(Parameters<T>, TrainSummary)> {
    let params = Parameters::init(model, config.seed);
    pretrain_from(params, sets, config, observer)
}

/// As [`pretrain`], starting from the given parameters.
pub fn pretrain_from<T: Real>(
    mut params: Parameters<T>,
    sets: &[TrainSet],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(Parameters<T>, TrainSummary)> {
    config.validate()?;
    params.config.validate()?;
    if config.grad_check_mode && T::NAME != "f64" {
        return Err(WifoError::InvalidArgument(format!(
            "gradient-check mode requires double precision, got {}",
            T::NAME
        )));
    }
    if sets.is_empty() {
        return Err(WifoError::InvalidArgument("no training datasets".into()));
    }
    let tokens = tokenize::<T>(sets, &params.config)?;
    let mut state = OptimizerState::new(&params);
    let mut summary = TrainSummary::default();

    for epoch in 0..config.epochs {
        let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
        for (d, set) in tokens.iter().enumerate() {
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.shuffle(&mut rng_from(config.seed, &[TAG_SHUFFLE, epoch as u64, d as u64]));
            batches.extend(order.chunks(config.batch_size).map(|c| (d, c.to_vec())));
        }
        batches.shuffle(&mut rng_from(config.seed, &[TAG_ORDER, epoch as u64]));

        let num_batches = batches.len();
        let mut sums = [0.0f64; 3];
        for (j, (d, idx)) in batches.iter().enumerate() {
            let batch: Vec<&TokenGrid<T>> = idx.iter().map(|&i| &tokens[*d][i]).collect();
            let lr = lr_schedule(epoch as f64 + j as f64 / num_batches as f64, config);
            let mask_seed = derive_seed(config.seed, &[TAG_MASK, summary.steps]);
            let mut report = pretrain_step(&mut params, &mut state, &batch, mask_seed, lr, config)?;
            report.epoch = epoch;
            report.batch = j;
            report.dataset_id = sets[*d].id.clone();
            sums[0] += report.random;
            sums[1] += report.time;
            sums[2] += report.frequency;
            summary.steps += 1;
            observer.on_step(&StepRecord {
                step: summary.steps,
                losses: report,
                lr,
            })?;
        }
        let n = num_batches as f64;
        let mut epoch_report = LossReport::from_tasks(sums[0] / n, sums[1] / n, sums[2] / n);
        epoch_report.epoch = epoch;
        epoch_report.batch = num_batches;
        epoch_report.dataset_id = "all".into();
        observer.on_epoch_end(epoch, &epoch_report, &params)?;
        summary.epochs.push(epoch_report);
    }
    Ok((params, summary))
}

/// Three-task losses of `params` on each dataset, without updating anything.
/// Random masks are drawn from `mask_seed`, so repeated calls agree.
pub fn evaluate_losses<T: Real>(
    params: &Parameters<T>,
    sets: &[TrainSet],
    ratios: [f64; 3],
    mask_seed: u64,
) -> Result<Vec<LossReport>> {
    let tokens = tokenize::<T>(sets, &params.config)?;
    tokens
        .iter()
        .zip(sets)
        .map(|(toks, set)| {
            let batch: Vec<&TokenGrid<T>> = toks.iter().collect();
            let masks = batch_masks(&batch, ratios, mask_seed)?;
            let losses = masks
                .par_iter()
                .enumerate()
                .map(|(i, mask)| {
                    let tok = batch[i % batch.len()];
                    let out = forward_tokens(params, tok, mask)?;
                    token_loss_and_grad(&out, tok, mask, 1.0).map(|(l, _)| l)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut report = task_means(&losses, batch.len());
            report.dataset_id = set.id.clone();
            Ok(report)
        })
        .collect()
}
