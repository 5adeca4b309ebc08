//! Synthetic space-time-frequency CSI from a geometric multipath model.
//!
//! A sample is a complex tensor `H[t][k][n]` over `T` time RBs, `K`
//! frequency RBs and `N = N_h·N_v` base-station antennas, sampled at pilot
//! positions `t_i = i·Δt`, `f_j = f_1 + (j−1)·Δf` (both 1-indexed in the
//! math, 0-indexed in storage).

mod config;
mod dataset;
mod synth;

pub use config::{parse_scenario, scenario_to_text};
pub use dataset::{
    generate_dataset, generate_dataset_with_clean, read_dataset, read_dataset_from, standardize_dataset,
    write_atomic, write_dataset, write_dataset_to, DatasetMeta,
};
pub use synth::{add_noise, sample_paths, steering_vector, synthesize_csi, SPEED_OF_LIGHT};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WifoError};

/// Rician K-factor of the optional line-of-sight path, in dB.
pub const LOS_K_FACTOR_DB: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Frequency,
    Space,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Frequency => "frequency",
            Axis::Space => "space",
        }
    }
}

/// One propagation path of the geometric model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub amplitude: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
}

/// Recipe for one synthetic dataset. All quantities in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub carrier_hz: f64,
    pub num_rb_freq: usize,
    pub delta_f_hz: f64,
    pub num_rb_time: usize,
    pub delta_t_s: f64,
    pub upa_h: usize,
    pub upa_v: usize,
    /// Frequency of the first pilot RB.
    pub f1_hz: f64,
    pub speed_range_mps: (f64, f64),
    pub num_paths_range: (usize, usize),
    pub delay_max_s: f64,
    pub los: bool,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// A config with the default path statistics (3–12 paths, 1 µs maximum
    /// delay, NLoS, 20 dB SNR) and the band centred on the carrier.
    pub fn new(
        carrier_hz: f64,
        num_rb_time: usize,
        delta_t_s: f64,
        num_rb_freq: usize,
        delta_f_hz: f64,
        upa_h: usize,
        upa_v: usize,
    ) -> Self {
        ScenarioConfig {
            carrier_hz,
            num_rb_freq,
            delta_f_hz,
            num_rb_time,
            delta_t_s,
            upa_h,
            upa_v,
            f1_hz: carrier_hz - (num_rb_freq / 2) as f64 * delta_f_hz,
            speed_range_mps: (0.0, 0.0),
            num_paths_range: (3, 12),
            delay_max_s: 1e-6,
            los: false,
            snr_db: 20.0,
            seed: 0,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.upa_h * self.upa_v
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_rb_time, self.num_rb_freq, self.num_antennas())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(WifoError::InvalidArgument(m.to_string()));
        if self.upa_h == 0 || self.upa_v == 0 {
            return bad("UPA dimensions must be at least 1");
        }
        if self.num_rb_time == 0 || self.num_rb_freq == 0 {
            return bad("grid sizes T and K must be at least 1");
        }
        if !(self.delta_f_hz > 0.0) || !(self.delta_t_s > 0.0) {
            return bad("pilot spacings must be positive");
        }
        if !(self.carrier_hz > 0.0) || !self.f1_hz.is_finite() {
            return bad("carrier and first pilot frequency must be finite and positive");
        }
        let (vmin, vmax) = self.speed_range_mps;
        if !(vmin >= 0.0 && vmin <= vmax && vmax.is_finite()) {
            return bad("speed range must satisfy 0 <= min <= max");
        }
        let (pmin, pmax) = self.num_paths_range;
        if pmin < 1 || pmin > pmax {
            return bad("path count range must satisfy 1 <= min <= max");
        }
        if !(self.delay_max_s >= 0.0 && self.delay_max_s.is_finite()) {
            return bad("maximum delay must be finite and non-negative");
        }
        if self.snr_db.is_nan() {
            return bad("snr_db must not be NaN");
        }
        Ok(())
    }
}

/// Complex CSI tensor stored `[t][k][n]`, time slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiGrid {
    t_len: usize,
    f_len: usize,
    s_len: usize,
    data: Vec<Complex64>,
}

impl CsiGrid {
    pub fn zeros(t_len: usize, f_len: usize, s_len: usize) -> Self {
        CsiGrid {
            t_len,
            f_len,
            s_len,
            data: vec![Complex64::new(0.0, 0.0); t_len * f_len * s_len],
        }
    }

    pub fn from_vec(t_len: usize, f_len: usize, s_len: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != t_len * f_len * s_len {
            return Err(WifoError::shape(
                "data",
                format!("expected {} elements for ({t_len}, {f_len}, {s_len}), got {}", t_len * f_len * s_len, data.len()),
            ));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(WifoError::NonFinite("CSI grid contains non-finite values".into()));
        }
        Ok(CsiGrid {
            t_len,
            f_len,
            s_len,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t_len, self.f_len, self.s_len)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn f_len(&self) -> usize {
        self.f_len
    }

    pub fn s_len(&self) -> usize {
        self.s_len
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::Time => self.t_len,
            Axis::Frequency => self.f_len,
            Axis::Space => self.s_len,
        }
    }

    #[inline]
    pub fn index(&self, t: usize, k: usize, n: usize) -> usize {
        (t * self.f_len + k) * self.s_len + n
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize, n: usize) -> Complex64 {
        self.data[self.index(t, k, n)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, k: usize, n: usize, v: Complex64) {
        let i = self.index(t, k, n);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.energy() / self.data.len() as f64
        }
    }

    /// Copy of the index range `range` along `axis` (time or frequency).
    pub fn slab(&self, axis: Axis, range: std::ops::Range<usize>) -> Result<CsiGrid> {
        let len = self.axis_len(axis);
        if range.start > range.end || range.end > len {
            return Err(WifoError::shape(axis.name(), format!("slab {range:?} outside axis of length {len}")));
        }
        let (t0, t1, k0, k1, n0, n1) = match axis {
            Axis::Time => (range.start, range.end, 0, self.f_len, 0, self.s_len),
            Axis::Frequency => (0, self.t_len, range.start, range.end, 0, self.s_len),
            Axis::Space => (0, self.t_len, 0, self.f_len, range.start, range.end),
        };
        let mut data = Vec::with_capacity((t1 - t0) * (k1 - k0) * (n1 - n0));
        for t in t0..t1 {
            for k in k0..k1 {
                for n in n0..n1 {
                    data.push(self.get(t, k, n));
                }
            }
        }
        Ok(CsiGrid {
            t_len: t1 - t0,
            f_len: k1 - k0,
            s_len: n1 - n0,
            data,
        })
    }

    /// Write `part` into this grid starting at `offset` along `axis`.
    pub fn paste(&mut self, axis: Axis, offset: usize, part: &CsiGrid) -> Result<()> {
        let (pt, pk, pn) = part.shape();
        let fits = match axis {
            Axis::Time => offset + pt <= self.t_len && pk == self.f_len && pn == self.s_len,
            Axis::Frequency => offset + pk <= self.f_len && pt == self.t_len && pn == self.s_len,
            Axis::Space => offset + pn <= self.s_len && pt == self.t_len && pk == self.f_len,
        };
        if !fits {
            return Err(WifoError::shape(
                axis.name(),
                format!("cannot paste {:?} at offset {offset} into {:?}", part.shape(), self.shape()),
            ));
        }
        for t in 0..pt {
            for k in 0..pk {
                for n in 0..pn {
                    let (tt, kk, nn) = match axis {
                        Axis::Time => (t + offset, k, n),
                        Axis::Frequency => (t, k + offset, n),
                        Axis::Space => (t, k, n + offset),
                    };
                    self.set(tt, kk, nn, part.get(t, k, n));
                }
            }
        }
        Ok(())
    }
}
