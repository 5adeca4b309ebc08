//! Visible/masked partitions of a token grid.
//!
//! Axis masks hide every token at or beyond `G − ⌊R·G⌋` along the axis
//! (0-indexed coordinates, `G` the axis grid length), so exactly `⌊R·G⌋`
//! slices are masked. Random masks hide `⌊R·L⌋` tokens drawn without
//! replacement.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::channel::Axis;
use crate::error::{Result, WifoError};
use crate::patch::GridDims;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Random,
    Time,
    Frequency,
}

impl MaskKind {
    pub const ALL: [MaskKind; 3] = [MaskKind::Random, MaskKind::Time, MaskKind::Frequency];

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Random => "random",
            MaskKind::Time => "time",
            MaskKind::Frequency => "frequency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub ratio: f64,
    /// Only consulted by [`MaskKind::Random`].
    pub seed: u64,
}

impl MaskSpec {
    pub fn apply(&self, dims: GridDims) -> Result<MaskResult> {
        match self.kind {
            MaskKind::Random => random_mask(dims, self.ratio, self.seed),
            MaskKind::Time => time_mask(dims, self.ratio),
            MaskKind::Frequency => frequency_mask(dims, self.ratio),
        }
    }
}

/// Sorted, disjoint index lists covering `0..L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskResult {
    pub visible_idx: Vec<usize>,
    pub masked_idx: Vec<usize>,
}

impl MaskResult {
    pub fn num_tokens(&self) -> usize {
        self.visible_idx.len() + self.masked_idx.len()
    }

    /// Boolean view: `true` where the token is masked.
    pub fn is_masked(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_tokens()];
        for &i in &self.masked_idx {
            m[i] = true;
        }
        m
    }

    fn from_flags(flags: &[bool]) -> Self {
        let (mut visible_idx, mut masked_idx) = (Vec::new(), Vec::new());
        for (i, &m) in flags.iter().enumerate() {
            if m {
                masked_idx.push(i)
            } else {
                visible_idx.push(i)
            }
        }
        MaskResult {
            visible_idx,
            masked_idx,
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(WifoError::InvalidArgument(format!("mask ratio {ratio} outside [0, 1]")));
    }
    Ok(())
}

/// `⌊ratio·len⌋`, robust to ratios like `0.5` stored inexactly.
fn floor_count(ratio: f64, len: usize) -> usize {
    let x = ratio * len as f64;
    let r = x.round();
    let n = if (x - r).abs() < 1e-9 { r } else { x.floor() };
    (n as usize).min(len)
}

pub fn random_mask(dims: GridDims, ratio: f64, seed: u64) -> Result<MaskResult> {
    check_ratio(ratio)?;
    let total = dims.num_tokens();
    let count = floor_count(ratio, total);
    let mut rng = rng_from(seed, &[0x6d61_736b]);
    let mut flags = vec![false; total];
    for i in index::sample(&mut rng, total, count) {
        flags[i] = true;
    }
    Ok(MaskResult::from_flags(&flags))
}

fn axis_mask(dims: GridDims, ratio: f64, axis: Axis) -> Result<MaskResult> {
    check_ratio(ratio)?;
    let axis_len = match axis {
        Axis::Time => dims.t,
        Axis::Frequency => dims.f,
        Axis::Space => dims.s,
    };
    let threshold = axis_len - floor_count(ratio, axis_len);
    let flags: Vec<bool> = (0..dims.num_tokens())
        .map(|i| {
            let c = dims.coords(i);
            let pos = match axis {
                Axis::Time => c[0],
                Axis::Frequency => c[1],
                Axis::Space => c[2],
            };
            pos >= threshold
        })
        .collect();
    Ok(MaskResult::from_flags(&flags))
}

pub fn time_mask(dims: GridDims, ratio: f64) -> Result<MaskResult> {
    axis_mask(dims, ratio, Axis::Time)
}

pub fn frequency_mask(dims: GridDims, ratio: f64) -> Result<MaskResult> {
    axis_mask(dims, ratio, Axis::Frequency)
}

/// Mask every token whose coordinate along `axis` lies at or beyond the
/// known prefix. `known_prefix` counts RBs and must be a multiple of
/// `patch_len`.
pub fn inference_mask(axis: Axis, known_prefix: usize, patch_len: usize, dims: GridDims) -> Result<MaskResult> {
    if patch_len == 0 || known_prefix % patch_len != 0 {
        return Err(WifoError::shape(
            axis.name(),
            format!("known prefix {known_prefix} is not a multiple of patch size {patch_len}"),
        ));
    }
    let known_cells = known_prefix / patch_len;
    let axis_len = match axis {
        Axis::Time => dims.t,
        Axis::Frequency => dims.f,
        Axis::Space => {
            return Err(WifoError::InvalidArgument("prediction along the space axis is not supported".into()))
        }
    };
    if known_cells > axis_len {
        return Err(WifoError::shape(axis.name(), format!("known prefix {known_prefix} exceeds axis length")));
    }
    let coord = if axis == Axis::Time { 0 } else { 1 };
    let flags: Vec<bool> = (0..dims.num_tokens()).map(|i| dims.coords(i)[coord] >= known_cells).collect();
    Ok(MaskResult::from_flags(&flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_partition(m: &MaskResult, total: usize) {
        let mut all: Vec<usize> = m.visible_idx.iter().chain(&m.masked_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..total).collect::<Vec<_>>());
        assert!(m.visible_idx.windows(2).all(|w| w[0] < w[1]));
        assert!(m.masked_idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn random_counts() {
        let dims = GridDims::new(4, 8, 8);
        let m = random_mask(dims, 0.85, 1).unwrap();
        assert_eq!((m.masked_idx.len(), m.visible_idx.len()), (217, 39));
        assert_eq!(random_mask(dims, 0.0, 1).unwrap().masked_idx.len(), 0);
        assert_eq!(random_mask(dims, 1.0, 1).unwrap().visible_idx.len(), 0);
        assert_eq!(m, random_mask(dims, 0.85, 1).unwrap());
        assert_ne!(m, random_mask(dims, 0.85, 2).unwrap());
        check_partition(&m, 256);
    }

    #[test]
    fn time_mask_examples() {
        let m = time_mask(GridDims::new(4, 8, 8), 0.5).unwrap();
        assert_eq!(m.masked_idx.len(), 128);
        assert_eq!(m.masked_idx, (128..256).collect::<Vec<_>>());
        assert!(time_mask(GridDims::new(4, 8, 8), 0.2).unwrap().masked_idx.is_empty());
    }

    #[test]
    fn time_mask_enumeration_oracle() {
        let dims = GridDims::new(6, 2, 2);
        let m = time_mask(dims, 0.5).unwrap();
        let expect: Vec<usize> = (0..24).filter(|&i| i / 4 >= 3).collect();
        assert_eq!(m.masked_idx, expect);
        assert_eq!(m.masked_idx.len(), 12);
    }

    #[test]
    fn frequency_mask_examples() {
        let m = frequency_mask(GridDims::new(4, 8, 8), 0.5).unwrap();
        assert_eq!(m.masked_idx.len(), 128);
        assert!(m.masked_idx.iter().all(|&i| (i / 8) % 8 >= 4));
        assert!(frequency_mask(GridDims::new(4, 8, 8), 0.0).unwrap().masked_idx.is_empty());
        let dims = GridDims::new(2, 6, 2);
        let m = frequency_mask(dims, 1.0 / 3.0).unwrap();
        let expect: Vec<usize> = (0..24).filter(|&i| (i / 2) % 6 >= 4).collect();
        assert_eq!(m.masked_idx, expect);
        assert_eq!(m.masked_idx.len(), 8);
    }

    #[test]
    fn inference_mask_examples() {
        let dims = GridDims::new(4, 8, 8);
        let m = inference_mask(Axis::Time, 8, 4, dims).unwrap();
        assert!(m.masked_idx.iter().all(|&i| dims.coords(i)[0] >= 2));
        assert_eq!(m, time_mask(dims, 0.5).unwrap());
        assert!(inference_mask(Axis::Time, 16, 4, dims).unwrap().masked_idx.is_empty());
        assert!(inference_mask(Axis::Time, 6, 4, dims).is_err());
        assert_eq!(inference_mask(Axis::Frequency, 16, 4, dims).unwrap(), frequency_mask(dims, 0.5).unwrap());
    }

    #[test]
    fn ratio_out_of_range_rejected() {
        assert!(random_mask(GridDims::new(1, 1, 4), 1.5, 0).is_err());
        assert!(time_mask(GridDims::new(1, 1, 4), -0.1).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_ratio_laws(t in 1usize..7, f in 1usize..7, s in 1usize..4, ratio in 0.0f64..=1.0, seed: u64) {
            let dims = GridDims::new(t, f, s);
            let total = dims.num_tokens();
            let r = random_mask(dims, ratio, seed).unwrap();
            check_partition(&r, total);
            prop_assert_eq!(r.masked_idx.len(), floor_count(ratio, total));
            let tm = time_mask(dims, ratio).unwrap();
            check_partition(&tm, total);
            prop_assert_eq!(tm.masked_idx.len(), floor_count(ratio, t) * f * s);
            // Suffix of canonical order.
            if let Some(&first) = tm.masked_idx.first() {
                prop_assert_eq!(tm.masked_idx.clone(), (first..total).collect::<Vec<_>>());
            }
            let fm = frequency_mask(dims, ratio).unwrap();
            check_partition(&fm, total);
            prop_assert_eq!(fm.masked_idx.len(), floor_count(ratio, f) * t * s);
        }
    }
}
