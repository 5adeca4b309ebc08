use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CsiGrid, PathParams, ScenarioConfig, LOS_K_FACTOR_DB};
use crate::error::{Result, WifoError};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// UPA response with half-wavelength spacing, horizontal-major ordering:
/// entry `m·N_v + q` is `exp(jπ(m·sin(az)·cos(el) + q·sin(el)))`.
pub fn steering_vector(az: f64, el: f64, upa_h: usize, upa_v: usize) -> Vec<Complex64> {
    let u = az.sin() * el.cos();
    let w = el.sin();
    let mut out = Vec::with_capacity(upa_h * upa_v);
    for m in 0..upa_h {
        for q in 0..upa_v {
            let phase = PI * (m as f64 * u + q as f64 * w);
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    out
}

/// Draw a path set and the user speed for one sample.
///
/// Path count and delays are uniform, powers follow an exponential delay
/// profile with `τ_rms = delay_max/3`, phases and arrival angles are uniform
/// and Doppler is `f_c·v/c·cos(α)` with `α` uniform. With `los`, path 0 has
/// zero delay and a `K/(K+1)` power share. Total power is normalized to 1.
pub fn sample_paths<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> (Vec<PathParams>, f64) {
    let (pmin, pmax) = config.num_paths_range;
    let count = rng.random_range(pmin..=pmax);
    let (vmin, vmax) = config.speed_range_mps;
    let speed = if vmax > vmin { rng.random_range(vmin..=vmax) } else { vmin };
    let max_doppler = config.carrier_hz * speed / SPEED_OF_LIGHT;
    let tau_rms = config.delay_max_s / 3.0;

    let mut paths = Vec::with_capacity(count);
    let mut powers = Vec::with_capacity(count);
    for p in 0..count {
        let los_path = config.los && p == 0;
        let delay = if los_path || config.delay_max_s == 0.0 {
            0.0
        } else {
            rng.random_range(0.0..=config.delay_max_s)
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        let azimuth = rng.random_range(-PI..=PI);
        let elevation = rng.random_range(-PI / 2.0..=PI / 2.0);
        let alpha = rng.random_range(0.0..2.0 * PI);
        powers.push(if tau_rms > 0.0 { (-delay / tau_rms).exp() } else { 1.0 });
        paths.push(PathParams {
            amplitude: Complex64::from_polar(1.0, phase),
            delay_s: delay,
            doppler_hz: max_doppler * alpha.cos(),
            azimuth_rad: azimuth,
            elevation_rad: elevation,
        });
    }

    let k_factor = 10f64.powf(LOS_K_FACTOR_DB / 10.0);
    let (los_share, nlos_share, nlos_start) = if config.los && count > 1 {
        (k_factor / (k_factor + 1.0), 1.0 / (k_factor + 1.0), 1)
    } else {
        (1.0, 1.0, 0)
    };
    if config.los && count > 1 {
        powers[0] = los_share;
    }
    let nlos_total: f64 = powers[nlos_start..].iter().sum();
    for (p, path) in paths.iter_mut().enumerate() {
        let power = if p < nlos_start {
            powers[p]
        } else {
            powers[p] / nlos_total * nlos_share
        };
        path.amplitude *= power.sqrt();
    }
    (paths, speed)
}

/// Evaluate the multipath model on the pilot grid.
pub fn synthesize_csi(paths: &[PathParams], config: &ScenarioConfig) -> Result<CsiGrid> {
    if paths.is_empty() {
        return Err(WifoError::InvalidArgument("path list is empty".into()));
    }
    let (t_len, f_len, s_len) = config.shape();
    let mut grid = CsiGrid::zeros(t_len, f_len, s_len);
    let mut time_phasor = vec![Complex64::new(0.0, 0.0); t_len];
    let mut freq_phasor = vec![Complex64::new(0.0, 0.0); f_len];
    for path in paths {
        let a = steering_vector(path.azimuth_rad, path.elevation_rad, config.upa_h, config.upa_v);
        for (i, z) in time_phasor.iter_mut().enumerate() {
            let t = (i + 1) as f64 * config.delta_t_s;
            *z = Complex64::from_polar(1.0, 2.0 * PI * path.doppler_hz * t);
        }
        for (j, z) in freq_phasor.iter_mut().enumerate() {
            let f = config.f1_hz + j as f64 * config.delta_f_hz;
            *z = Complex64::from_polar(1.0, -2.0 * PI * f * path.delay_s);
        }
        let data = grid.data_mut();
        for (i, tp) in time_phasor.iter().enumerate() {
            for (j, fp) in freq_phasor.iter().enumerate() {
                let coef = path.amplitude * fp * tp;
                let base = (i * f_len + j) * s_len;
                for (n, an) in a.iter().enumerate() {
                    data[base + n] += coef * an;
                }
            }
        }
    }
    Ok(grid)
}

/// Add circularly-symmetric complex Gaussian noise at `snr_db` relative to
/// the grid's own mean power. An infinite SNR returns the input unchanged.
pub fn add_noise<R: Rng + ?Sized>(grid: &CsiGrid, snr_db: f64, rng: &mut R) -> CsiGrid {
    if snr_db == f64::INFINITY || grid.is_empty() {
        return grid.clone();
    }
    let variance = grid.mean_power() / 10f64.powf(snr_db / 10.0);
    let scale = (variance / 2.0).sqrt();
    let mut out = grid.clone();
    for z in out.data_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z += Complex64::new(re, im) * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScenarioConfig {
        let mut c = ScenarioConfig::new(3e9, 8, 5e-3, 8, 180e3, 2, 2);
        c.speed_range_mps = (10.0, 30.0);
        c
    }

    fn single(g: Complex64, tau: f64, nu: f64, az: f64, el: f64) -> PathParams {
        PathParams {
            amplitude: g,
            delay_s: tau,
            doppler_hz: nu,
            azimuth_rad: az,
            elevation_rad: el,
        }
    }

    #[test]
    fn steering_single_element_and_boresight() {
        assert_eq!(steering_vector(1.3, -0.4, 1, 1), vec![Complex64::new(1.0, 0.0)]);
        let v = steering_vector(0.0, 0.0, 4, 8);
        assert_eq!(v.len(), 32);
        assert!(v.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn steering_endfire_alternates() {
        let v = steering_vector(PI / 2.0, 0.0, 2, 1);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_ordering_is_horizontal_major() {
        let (az, el) = (0.3, 0.2);
        let v = steering_vector(az, el, 3, 2);
        for m in 0..3 {
            for q in 0..2 {
                let want = Complex64::from_polar(1.0, PI * (m as f64 * az.sin() * el.cos() + q as f64 * el.sin()));
                assert!((v[m * 2 + q] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_speed_gives_zero_doppler() {
        let mut c = cfg();
        c.num_paths_range = (1, 1);
        c.speed_range_mps = (0.0, 0.0);
        let (paths, v) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(paths.len(), 1);
        assert_eq!(v, 0.0);
        assert_eq!(paths[0].doppler_hz, 0.0);
        assert!((paths[0].amplitude.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_bounded_by_max() {
        let mut c = cfg();
        c.speed_range_mps = (30.0, 30.0);
        for seed in 0..20 {
            let (paths, _) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(seed));
            // f_c·v/c with c = 299 792 458 m/s is just above 300 Hz.
            assert!(paths.iter().all(|p| p.doppler_hz.abs() <= 3e9 * 30.0 / SPEED_OF_LIGHT + 1e-9));
            assert!(paths.iter().all(|p| p.doppler_hz.abs() <= 300.3));
        }
    }

    #[test]
    fn path_statistics_contract() {
        let mut c = cfg();
        c.num_paths_range = (3, 12);
        for seed in 0..50 {
            let (paths, v) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!((3..=12).contains(&paths.len()));
            assert!((10.0..=30.0).contains(&v));
            let total: f64 = paths.iter().map(|p| p.amplitude.norm_sqr()).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for p in &paths {
                assert!(p.delay_s >= 0.0 && p.delay_s <= c.delay_max_s);
                assert!(p.azimuth_rad.abs() <= PI && p.elevation_rad.abs() <= PI / 2.0);
            }
        }
    }

    #[test]
    fn los_path_carries_k_factor_share() {
        let mut c = cfg();
        c.los = true;
        c.num_paths_range = (4, 4);
        let (paths, _) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(paths[0].delay_s, 0.0);
        assert!((paths[0].amplitude.norm_sqr() - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn sample_paths_is_deterministic() {
        let c = cfg();
        let a = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn static_path_reproduces_steering_vector() {
        let c = cfg();
        let p = single(Complex64::new(1.0, 0.0), 0.0, 0.0, 0.7, 0.1);
        let g = synthesize_csi(&[p], &c).unwrap();
        let a = steering_vector(0.7, 0.1, 2, 2);
        for t in 0..8 {
            for k in 0..8 {
                for n in 0..4 {
                    assert_eq!(g.get(t, k, n), a[n]);
                }
            }
        }
    }

    #[test]
    fn half_cycle_doppler_alternates_sign() {
        let c = cfg();
        let p = single(Complex64::new(1.0, 0.0), 0.0, 100.0, 0.4, -0.2);
        let g = synthesize_csi(&[p], &c).unwrap();
        for t in 0..7 {
            for k in 0..8 {
                for n in 0..4 {
                    assert!((g.get(t + 1, k, n) + g.get(t, k, n)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_path_list_rejected() {
        assert!(synthesize_csi(&[], &cfg()).is_err());
    }

    #[test]
    fn infinite_snr_is_identity() {
        let c = cfg();
        let (paths, _) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(2));
        let g = synthesize_csi(&paths, &c).unwrap();
        let n = add_noise(&g, f64::INFINITY, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(g, n);
    }

    #[test]
    fn noise_power_matches_snr() {
        // 10^5 elements: 50 × 50 × 40.
        let mut c = ScenarioConfig::new(3e9, 50, 1e-3, 50, 30e3, 5, 8);
        c.speed_range_mps = (5.0, 5.0);
        let (paths, _) = sample_paths(&c, &mut ChaCha8Rng::seed_from_u64(4));
        let g = synthesize_csi(&paths, &c).unwrap();
        assert_eq!(g.len(), 100_000);
        let noisy = add_noise(&g, 20.0, &mut ChaCha8Rng::seed_from_u64(5));
        let noise: f64 = noisy.data().iter().zip(g.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let ratio = noise / g.energy();
        assert!((0.008..=0.012).contains(&ratio), "ratio {ratio}");
        let again = add_noise(&g, 20.0, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(noisy, again);
    }
}
