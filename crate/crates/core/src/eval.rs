//! Zero-shot prediction by zero-padding plus axis masking, NMSE scoring
//! and two trivial baselines.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Axis, CsiGrid};
use crate::error::{Result, WifoError};
use crate::mask::inference_mask;
use crate::model::{reconstruct, Parameters};
use crate::num::{compensated_sum, Real};
use crate::patch::PatchSpec;

/// Predict the tail of `axis` from its first `known` RBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTask {
    pub axis: Axis,
    pub known: usize,
}

impl PredictionTask {
    /// The default half/half split of a grid of shape `shape`.
    pub fn half(axis: Axis, shape: (usize, usize, usize)) -> Self {
        let len = match axis {
            Axis::Time => shape.0,
            Axis::Frequency => shape.1,
            Axis::Space => shape.2,
        };
        PredictionTask { axis, known: len / 2 }
    }

    fn axis_len(&self, shape: (usize, usize, usize)) -> Result<usize> {
        match self.axis {
            Axis::Time => Ok(shape.0),
            Axis::Frequency => Ok(shape.1),
            Axis::Space => Err(WifoError::InvalidArgument("prediction along the space axis is not supported".into())),
        }
    }

    /// Check `0 < known < len` on the task axis.
    pub fn validate(&self, shape: (usize, usize, usize)) -> Result<()> {
        let len = self.axis_len(shape)?;
        if self.known == 0 || self.known >= len {
            return Err(WifoError::shape(
                self.axis.name(),
                format!("known prefix {} must lie strictly between 0 and {len}", self.known),
            ));
        }
        Ok(())
    }

    /// Shape of the observed slab.
    pub fn known_shape(&self, full: (usize, usize, usize)) -> (usize, usize, usize) {
        match self.axis {
            Axis::Time => (self.known, full.1, full.2),
            Axis::Frequency => (full.0, self.known, full.2),
            Axis::Space => full,
        }
    }

    fn check_known(&self, known_part: &CsiGrid, full: (usize, usize, usize)) -> Result<()> {
        self.validate(full)?;
        if known_part.shape() != self.known_shape(full) {
            return Err(WifoError::shape(
                self.axis.name(),
                format!(
                    "known part {:?} does not match full shape {full:?} truncated to {}",
                    known_part.shape(),
                    self.known
                ),
            ));
        }
        Ok(())
    }
}

/// Anything that can fill in the unknown slab of a prediction task.
pub trait Predictor: Sync {
    fn predict(&self, known_part: &CsiGrid, task: PredictionTask, full_shape: (usize, usize, usize)) -> Result<CsiGrid>;
}

impl<T: Real> Predictor for Parameters<T> {
    fn predict(&self, known_part: &CsiGrid, task: PredictionTask, full_shape: (usize, usize, usize)) -> Result<CsiGrid> {
        zero_pad_predict(self, known_part, task, full_shape)
    }
}

fn patch_len(patch: PatchSpec, axis: Axis) -> usize {
    match axis {
        Axis::Time => patch.t_patch,
        Axis::Frequency => patch.f_patch,
        Axis::Space => patch.s_patch,
    }
}

/// Place `known_part` at the start of a zero grid of `full_shape`, mask
/// every token beyond it and return the reconstructed tail slab.
pub fn zero_pad_predict<T: Real>(
    params: &Parameters<T>,
    known_part: &CsiGrid,
    task: PredictionTask,
    full_shape: (usize, usize, usize),
) -> Result<CsiGrid> {
    task.check_known(known_part, full_shape)?;
    let patch = params.config.patch;
    let dims = patch.grid_dims(full_shape)?;
    let mask = inference_mask(task.axis, task.known, patch_len(patch, task.axis), dims)?;
    let mut input = CsiGrid::zeros(full_shape.0, full_shape.1, full_shape.2);
    input.paste(task.axis, 0, known_part)?;
    let out = reconstruct(params, &input, &mask)?;
    out.slab(task.axis, task.known..task.axis_len(full_shape)?)
}

/// [`zero_pad_predict`] on a full grid; whatever `grid` holds beyond the
/// known prefix is ignored.
pub fn predict_from_full<T: Real>(params: &Parameters<T>, grid: &CsiGrid, task: PredictionTask) -> Result<CsiGrid> {
    task.validate(grid.shape())?;
    let known = grid.slab(task.axis, 0..task.known)?;
    zero_pad_predict(params, &known, task, grid.shape())
}

/// Every predicted slice equals the last observed one.
pub fn baseline_repeat_last(
    known_part: &CsiGrid,
    task: PredictionTask,
    full_shape: (usize, usize, usize),
) -> Result<CsiGrid> {
    task.check_known(known_part, full_shape)?;
    let last = known_part.slab(task.axis, task.known - 1..task.known)?;
    let len = task.axis_len(full_shape)?;
    let (t, k, n) = full_shape;
    let mut out = match task.axis {
        Axis::Time => CsiGrid::zeros(len - task.known, k, n),
        _ => CsiGrid::zeros(t, len - task.known, n),
    };
    for i in 0..len - task.known {
        out.paste(task.axis, i, &last)?;
    }
    Ok(out)
}

fn squared_error_sums(pred: &CsiGrid, truth: &CsiGrid) -> Result<(f64, f64)> {
    if pred.shape() != truth.shape() {
        return Err(WifoError::shape(
            "time",
            format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape()),
        ));
    }
    let err = compensated_sum(pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t).norm_sqr()));
    let pow = compensated_sum(truth.data().iter().map(Complex64::norm_sqr));
    Ok((err, pow))
}

/// `‖pred − truth‖²_F / ‖truth‖²_F`.
pub fn nmse(pred: &CsiGrid, truth: &CsiGrid) -> Result<f64> {
    let (err, pow) = squared_error_sums(pred, truth)?;
    if pow <= 0.0 {
        return Err(WifoError::InvalidArgument("NMSE undefined for an all-zero truth".into()));
    }
    Ok(err / pow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseAveraging {
    /// Mean of per-sample ratios.
    #[default]
    PerSample,
    /// Ratio of error and truth energies summed over all samples.
    Pooled,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions<'a> {
    pub averaging: NmseAveraging,
    /// Score against these (e.g. noise-free) targets instead of the inputs.
    pub clean_targets: Option<&'a [CsiGrid]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub task: PredictionTask,
    pub nmse_model: f64,
    pub nmse_zero: f64,
    pub nmse_repeat_last: f64,
    pub num_samples: usize,
    pub averaging: NmseAveraging,
    pub clean_targets: bool,
}

/// Score `predictor` and both baselines on the same predicted region of
/// every sample.
pub fn evaluate_dataset<P: Predictor + ?Sized>(
    predictor: &P,
    dataset_id: &str,
    samples: &[CsiGrid],
    task: PredictionTask,
    options: &EvalOptions<'_>,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(WifoError::InvalidArgument("evaluation needs at least one sample".into()));
    }
    if let Some(clean) = options.clean_targets {
        if clean.len() != samples.len() {
            return Err(WifoError::InvalidArgument(format!(
                "{} clean targets for {} samples",
                clean.len(),
                samples.len()
            )));
        }
    }
    let full = samples[0].shape();
    let len = task.axis_len(full)?;
    task.validate(full)?;

    // Per sample: (model err, repeat err, truth power); zero-predictor error equals truth power.
    let sums = samples
        .par_iter()
        .enumerate()
        .map(|(i, grid)| {
            if grid.shape() != full {
                return Err(WifoError::InvalidArgument("samples in a dataset must share one shape".into()));
            }
            let known = grid.slab(task.axis, 0..task.known)?;
            let target_src = options.clean_targets.map_or(grid, |c| &c[i]);
            let truth = target_src.slab(task.axis, task.known..len)?;
            let model = predictor.predict(&known, task, full)?;
            let repeat = baseline_repeat_last(&known, task, full)?;
            let zero = CsiGrid::zeros(truth.t_len(), truth.f_len(), truth.s_len());
            let (e_model, pow) = squared_error_sums(&model, &truth)?;
            let (e_repeat, _) = squared_error_sums(&repeat, &truth)?;
            let (e_zero, _) = squared_error_sums(&zero, &truth)?;
            if pow <= 0.0 {
                return Err(WifoError::InvalidArgument(format!("sample {i} has an all-zero target region")));
            }
            Ok([e_model, e_zero, e_repeat, pow])
        })
        .collect::<Result<Vec<[f64; 4]>>>()?;

    let column = |j: usize| compensated_sum(sums.iter().map(|s| s[j]));
    let score = |j: usize| -> f64 {
        match options.averaging {
            NmseAveraging::PerSample => {
                compensated_sum(sums.iter().map(|s| s[j] / s[3])) / sums.len() as f64
            }
            NmseAveraging::Pooled => column(j) / column(3),
        }
    };
    let report = EvalReport {
        dataset_id: dataset_id.to_string(),
        task,
        nmse_model: score(0),
        nmse_zero: score(1),
        nmse_repeat_last: score(2),
        num_samples: samples.len(),
        averaging: options.averaging,
        clean_targets: options.clean_targets.is_some(),
    };
    if ![report.nmse_model, report.nmse_zero, report.nmse_repeat_last].iter().all(|v| v.is_finite()) {
        return Err(WifoError::NonFinite(format!("NMSE on dataset '{dataset_id}'")));
    }
    Ok(report)
}

/// One CSV row per report, with a header line.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("dataset_id,axis,known,nmse_model,nmse_zero,nmse_repeat_last,num_samples\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.9e},{:.9e},{:.9e},{}\n",
            r.dataset_id,
            r.task.axis.name(),
            r.task.known,
            r.nmse_model,
            r.nmse_zero,
            r.nmse_repeat_last,
            r.num_samples
        ));
    }
    out
}
