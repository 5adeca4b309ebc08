use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use super::synth::{add_noise, sample_paths, synthesize_csi};
use super::{CsiGrid, ScenarioConfig};
use crate::error::{Result, WifoError};
use crate::rng::rng_from;

const MAGIC: &[u8; 4] = b"WFO1";
const VERSION: u32 = 1;
const FLAG_STANDARDIZED: u32 = 1;

/// Dataset-level statistics. `config` is absent for datasets read back from
/// disk, since the binary format carries only shapes and statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub config: Option<ScenarioConfig>,
    pub shape: (usize, usize, usize),
    pub num_samples: usize,
    pub mean: Complex64,
    pub std: f64,
    pub standardized: bool,
}

/// Map every element to `(x − μ)/σ` with one complex mean and one real
/// scale for the whole set.
pub fn standardize_dataset(samples: &[CsiGrid]) -> Result<(Vec<CsiGrid>, Complex64, f64)> {
    let count: usize = samples.iter().map(CsiGrid::len).sum();
    if samples.is_empty() || count == 0 {
        return Err(WifoError::InvalidArgument("cannot standardize an empty dataset".into()));
    }
    let n = count as f64;
    let sum = samples
        .iter()
        .flat_map(|g| g.data().iter())
        .fold(Complex64::new(0.0, 0.0), |acc, z| acc + z);
    let mean = sum / n;
    let var = samples
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|z| (z - mean).norm_sqr())
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(WifoError::DegenerateDataset);
    }
    let out = samples.iter().map(|g| apply_standardization(g, mean, std)).collect();
    Ok((out, mean, std))
}

fn apply_standardization(grid: &CsiGrid, mean: Complex64, std: f64) -> CsiGrid {
    let mut out = grid.clone();
    for z in out.data_mut() {
        *z = (*z - mean) / std;
    }
    out
}

fn synthesize_sample(config: &ScenarioConfig, index: usize) -> Result<(CsiGrid, CsiGrid)> {
    let mut rng = rng_from(config.seed, &[index as u64]);
    let (paths, _speed) = sample_paths(config, &mut rng);
    let clean = synthesize_csi(&paths, config)?;
    let noisy = add_noise(&clean, config.snr_db, &mut rng);
    Ok((clean, noisy))
}

/// Generate `n_samples` noisy, standardized samples.
///
/// Sample `i` draws from a stream keyed by `(config.seed, i)`, so the result
/// does not depend on generation order or thread count.
pub fn generate_dataset(config: &ScenarioConfig, n_samples: usize) -> Result<(Vec<CsiGrid>, DatasetMeta)> {
    let (noisy, _clean, meta) = generate_dataset_with_clean(config, n_samples)?;
    Ok((noisy, meta))
}

/// As [`generate_dataset`], also returning the noise-free samples mapped with
/// the same statistics (for clean-target evaluation).
pub fn generate_dataset_with_clean(
    config: &ScenarioConfig,
    n_samples: usize,
) -> Result<(Vec<CsiGrid>, Vec<CsiGrid>, DatasetMeta)> {
    config.validate()?;
    if n_samples == 0 {
        return Err(WifoError::InvalidArgument("n_samples must be at least 1".into()));
    }
    let pairs = (0..n_samples)
        .into_par_iter()
        .map(|i| synthesize_sample(config, i))
        .collect::<Result<Vec<_>>>()?;
    let (clean, noisy): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let (noisy, mean, std) = standardize_dataset(&noisy)?;
    let clean = clean.iter().map(|g| apply_standardization(g, mean, std)).collect();
    let meta = DatasetMeta {
        config: Some(config.clone()),
        shape: config.shape(),
        num_samples: n_samples,
        mean,
        std,
        standardized: true,
    };
    Ok((noisy, clean, meta))
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| WifoError::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_dataset_to<W: Write>(w: &mut W, samples: &[CsiGrid], meta: &DatasetMeta) -> Result<()> {
    let (t, k, n) = meta.shape;
    if samples.len() != meta.num_samples {
        return Err(WifoError::InvalidArgument("sample count disagrees with metadata".into()));
    }
    let mut buf = Vec::with_capacity(52 + samples.len() * t * k * n * 8);
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, t as u32, k as u32, n as u32, samples.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [meta.mean.re, meta.mean.im, meta.std] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let flags = if meta.standardized { FLAG_STANDARDIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for s in samples {
        if s.shape() != meta.shape {
            return Err(WifoError::shape("data", format!("sample shape {:?} != header {:?}", s.shape(), meta.shape)));
        }
        for z in s.data() {
            buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_dataset(path: &Path, samples: &[CsiGrid], meta: &DatasetMeta) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, samples, meta)?;
    write_atomic(path, &buf)
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let end = *pos + N;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| WifoError::Format(format!("unexpected end of data at byte {}", *pos)))?;
    *pos = end;
    Ok(slice.try_into().expect("length checked"))
}

pub fn read_dataset_from<R: Read>(r: &mut R) -> Result<(Vec<CsiGrid>, DatasetMeta)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    if &take::<4>(&bytes, &mut pos)? != MAGIC {
        return Err(WifoError::Format("bad magic, expected WFO1".into()));
    }
    let u32_at = |pos: &mut usize| take::<4>(&bytes, pos).map(u32::from_le_bytes);
    let version = u32_at(&mut pos)?;
    if version != VERSION {
        return Err(WifoError::Format(format!("unsupported dataset version {version}")));
    }
    let t = u32_at(&mut pos)? as usize;
    let k = u32_at(&mut pos)? as usize;
    let n = u32_at(&mut pos)? as usize;
    let count = u32_at(&mut pos)? as usize;
    let f64_at = |pos: &mut usize| take::<8>(&bytes, pos).map(f64::from_le_bytes);
    let mean = Complex64::new(f64_at(&mut pos)?, f64_at(&mut pos)?);
    let std = f64_at(&mut pos)?;
    let flags = u32_at(&mut pos)?;
    let per = t * k * n;
    let expected = pos + count * per * 8;
    if bytes.len() != expected {
        return Err(WifoError::Format(format!(
            "payload length {} does not match header ({} samples of {t}×{k}×{n})",
            bytes.len() - pos,
            count
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(per);
        for _ in 0..per {
            let re = f32::from_le_bytes(take::<4>(&bytes, &mut pos)?);
            let im = f32::from_le_bytes(take::<4>(&bytes, &mut pos)?);
            data.push(Complex64::new(re as f64, im as f64));
        }
        samples.push(CsiGrid::from_vec(t, k, n, data)?);
    }
    let meta = DatasetMeta {
        config: None,
        shape: (t, k, n),
        num_samples: count,
        mean,
        std,
        standardized: flags & FLAG_STANDARDIZED != 0,
    };
    Ok((samples, meta))
}

pub fn read_dataset(path: &Path) -> Result<(Vec<CsiGrid>, DatasetMeta)> {
    let mut f = fs::File::open(path)?;
    read_dataset_from(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(2.5e9, 8, 1e-3, 8, 90e3, 2, 2);
        c.speed_range_mps = (1.0, 10.0);
        c.seed = seed;
        c
    }

    #[test]
    fn constant_dataset_is_degenerate() {
        let g = CsiGrid::from_vec(1, 1, 2, vec![Complex64::new(2.0, -1.0); 2]).unwrap();
        assert!(matches!(standardize_dataset(&[g.clone(), g]), Err(WifoError::DegenerateDataset)));
    }

    #[test]
    fn symmetric_singletons_unchanged() {
        let a = CsiGrid::from_vec(1, 1, 1, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let b = CsiGrid::from_vec(1, 1, 1, vec![Complex64::new(-1.0, 0.0)]).unwrap();
        let (out, mean, std) = standardize_dataset(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(mean, Complex64::new(0.0, 0.0));
        assert_eq!(std, 1.0);
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn standardized_statistics() {
        let (samples, meta) = generate_dataset(&cfg(11), 6).unwrap();
        let all: Vec<Complex64> = samples.iter().flat_map(|g| g.data().iter().copied()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<Complex64>() / n;
        let power = all.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!(mean.norm() < 1e-6);
        assert!((power - 1.0).abs() < 1e-6);
        assert!(meta.standardized && meta.std > 0.0);
    }

    #[test]
    fn shape_and_determinism() {
        let (a, meta) = generate_dataset(&cfg(5), 1).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].shape(), (8, 8, 4));
        assert_eq!(meta.shape, (8, 8, 4));
        let (b, _) = generate_dataset(&cfg(5), 1).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_dataset(&cfg(6), 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn per_sample_streams_are_prefix_stable() {
        // Raw (pre-standardization) samples only depend on (seed, index).
        let c = cfg(21);
        let (_, small) = (0..3).map(|i| synthesize_sample(&c, i).unwrap()).unzip::<_, _, Vec<_>, Vec<_>>();
        let (_, large) = (0..5).map(|i| synthesize_sample(&c, i).unwrap()).unzip::<_, _, Vec<_>, Vec<_>>();
        assert_eq!(small[..], large[..3]);
    }

    #[test]
    fn binary_round_trip() {
        let (samples, meta) = generate_dataset(&cfg(3), 3).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &samples, &meta).unwrap();
        assert_eq!(&buf[..4], b"WFO1");
        assert_eq!(buf.len(), 52 + 3 * 8 * 8 * 4 * 8);
        let (back, meta2) = read_dataset_from(&mut buf.as_slice()).unwrap();
        assert_eq!(meta2.shape, meta.shape);
        assert_eq!(meta2.mean, meta.mean);
        assert_eq!(meta2.std, meta.std);
        assert!(meta2.standardized);
        for (a, b) in samples.iter().zip(&back) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).norm() <= 1e-6 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let (samples, meta) = generate_dataset(&cfg(3), 2).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &samples, &meta).unwrap();
        buf.pop();
        assert!(matches!(read_dataset_from(&mut buf.as_slice()), Err(WifoError::Format(_))));
    }
}
