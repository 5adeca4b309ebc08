//! Plain-text `key = value` scenario files.
//!
//! Keys carry their unit in the name. `#` starts a comment. Required keys:
//! `carrier_ghz`, `num_rb_time`, `delta_t_ms`, `num_rb_freq`, `delta_f_khz`,
//! `upa_h`, `upa_v`, `speed_min_kmh`, `speed_max_kmh`. Optional keys:
//! `f1_ghz`, `paths_min`, `paths_max`, `delay_max_us`, `los`, `snr_db`
//! (`inf` disables noise) and `seed`.

use std::collections::BTreeMap;

use super::ScenarioConfig;
use crate::error::{Result, WifoError};

const REQUIRED: &[&str] = &[
    "carrier_ghz",
    "num_rb_time",
    "delta_t_ms",
    "num_rb_freq",
    "delta_f_khz",
    "upa_h",
    "upa_v",
    "speed_min_kmh",
    "speed_max_kmh",
];

const OPTIONAL: &[&str] = &["f1_ghz", "paths_min", "paths_max", "delay_max_us", "los", "snr_db", "seed"];

const KMH: f64 = 1.0 / 3.6;

struct Entry {
    line: usize,
    value: String,
}

fn parse_num<T: std::str::FromStr>(entries: &BTreeMap<String, Entry>, key: &str) -> Result<Option<T>> {
    match entries.get(key) {
        None => Ok(None),
        Some(e) => e.value.parse::<T>().map(Some).map_err(|_| WifoError::ConfigParse {
            line: e.line,
            msg: format!("invalid value `{}` for `{key}`", e.value),
        }),
    }
}

fn required<T: std::str::FromStr>(entries: &BTreeMap<String, Entry>, key: &str) -> Result<T> {
    parse_num(entries, key)?.ok_or_else(|| WifoError::MissingKey(key.to_string()))
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| WifoError::ConfigParse {
            line,
            msg: format!("expected `key = value`, got `{body}`"),
        })?;
        let key = key.trim().to_string();
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            return Err(WifoError::ConfigParse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        if entries.contains_key(&key) {
            return Err(WifoError::ConfigParse {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }

    let carrier_hz = required::<f64>(&entries, "carrier_ghz")? * 1e9;
    let mut cfg = ScenarioConfig::new(
        carrier_hz,
        required(&entries, "num_rb_time")?,
        required::<f64>(&entries, "delta_t_ms")? * 1e-3,
        required(&entries, "num_rb_freq")?,
        required::<f64>(&entries, "delta_f_khz")? * 1e3,
        required(&entries, "upa_h")?,
        required(&entries, "upa_v")?,
    );
    cfg.speed_range_mps = (
        required::<f64>(&entries, "speed_min_kmh")? * KMH,
        required::<f64>(&entries, "speed_max_kmh")? * KMH,
    );
    if let Some(f1) = parse_num::<f64>(&entries, "f1_ghz")? {
        cfg.f1_hz = f1 * 1e9;
    }
    let pmin = parse_num(&entries, "paths_min")?.unwrap_or(cfg.num_paths_range.0);
    let pmax = parse_num(&entries, "paths_max")?.unwrap_or(cfg.num_paths_range.1.max(pmin));
    cfg.num_paths_range = (pmin, pmax);
    if let Some(d) = parse_num::<f64>(&entries, "delay_max_us")? {
        cfg.delay_max_s = d * 1e-6;
    }
    if let Some(los) = parse_num::<bool>(&entries, "los")? {
        cfg.los = los;
    }
    if let Some(snr) = parse_num::<f64>(&entries, "snr_db")? {
        cfg.snr_db = snr;
    }
    if let Some(seed) = parse_num::<u64>(&entries, "seed")? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Inverse of [`parse_scenario`].
pub fn scenario_to_text(cfg: &ScenarioConfig) -> String {
    let snr = if cfg.snr_db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{}", cfg.snr_db)
    };
    format!(
        "carrier_ghz = {}\nnum_rb_time = {}\ndelta_t_ms = {}\nnum_rb_freq = {}\ndelta_f_khz = {}\n\
         upa_h = {}\nupa_v = {}\nspeed_min_kmh = {}\nspeed_max_kmh = {}\nf1_ghz = {}\n\
         paths_min = {}\npaths_max = {}\ndelay_max_us = {}\nlos = {}\nsnr_db = {}\nseed = {}\n",
        cfg.carrier_hz / 1e9,
        cfg.num_rb_time,
        cfg.delta_t_s * 1e3,
        cfg.num_rb_freq,
        cfg.delta_f_hz / 1e3,
        cfg.upa_h,
        cfg.upa_v,
        cfg.speed_range_mps.0 / KMH,
        cfg.speed_range_mps.1 / KMH,
        cfg.f1_hz / 1e9,
        cfg.num_paths_range.0,
        cfg.num_paths_range.1,
        cfg.delay_max_s * 1e6,
        cfg.los,
        snr,
        cfg.seed
    )
}
