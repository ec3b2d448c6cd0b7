//! Load profiles: per-profile time series of kVA demand.
//!
//! Profiles either come from a CSV file (first column time in seconds,
//! one named column per profile) or are synthesized from ramp-plus-noise
//! parameters. Lookup is zero-order hold: a sample's value applies until
//! the next sample time.

use crate::rng::substream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("profile CSV row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("profile CSV row {row}: time {t} does not increase over previous {prev}")]
    NonMonotonicTime { row: usize, t: f64, prev: f64 },
    #[error("profile CSV row {row}, column `{column}`: negative power {value}")]
    NegativePower {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("profile CSV row {row}, column {col}: `{text}` is not a number")]
    BadNumber { row: usize, col: usize, text: String },
    #[error("profile CSV has no data rows")]
    Empty,
    #[error("no sample at t = {t} s for profile `{id}` (first sample at {first} s)")]
    MissingSample { id: String, t: f64, first: f64 },
}

/// A bundle of named kVA profiles sharing one sample-time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfileSet {
    ids: Vec<String>,
    times: Vec<f64>,
    /// values[profile][sample]
    values: Vec<Vec<f64>>,
}

impl LoadProfileSet {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.times
    }

    /// Zero-order-hold value of profile `idx` at time `t`. Values past the
    /// last sample hold the last sample; times before the first sample have
    /// no defined value.
    pub fn value(&self, idx: usize, t: f64) -> Result<f64, ProfileError> {
        let times = &self.times;
        if t < times[0] {
            return Err(ProfileError::MissingSample {
                id: self.ids[idx].clone(),
                t,
                first: times[0],
            });
        }
        // Last sample index with time <= t.
        let pos = times.partition_point(|&x| x <= t) - 1;
        Ok(self.values[idx][pos])
    }
}

/// Parse a profile CSV. Layout: a header row naming the time column and the
/// profile ids, then rows of strictly increasing times and non-negative kVA.
pub fn load_profiles(reader: impl Read) -> Result<LoadProfileSet, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(ProfileError::Empty);
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let expected = headers.len();

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record?;
        if record.len() != expected {
            return Err(ProfileError::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        let parse = |col: usize| -> Result<f64, ProfileError> {
            record[col].parse::<f64>().map_err(|_| ProfileError::BadNumber {
                row,
                col: col + 1,
                text: record[col].to_owned(),
            })
        };
        let t = parse(0)?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(ProfileError::NonMonotonicTime { row, t, prev });
            }
        }
        for (k, column) in ids.iter().enumerate() {
            let v = parse(k + 1)?;
            if v < 0.0 {
                return Err(ProfileError::NegativePower {
                    row,
                    column: column.clone(),
                    value: v,
                });
            }
            values[k].push(v);
        }
        times.push(t);
    }
    if times.is_empty() {
        return Err(ProfileError::Empty);
    }
    Ok(LoadProfileSet { ids, times, values })
}

/// Parameters for one synthesized profile: a base level, an optional linear
/// growth window, an optional linear decline window, and bounded noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfileSpec {
    pub id: String,
    pub base_kva: f64,
    #[serde(default)]
    pub growth_kva_per_s: f64,
    #[serde(default)]
    pub growth_start_s: f64,
    #[serde(default)]
    pub growth_duration_s: f64,
    #[serde(default)]
    pub decline_kva_per_s: f64,
    #[serde(default)]
    pub decline_start_s: f64,
    #[serde(default)]
    pub decline_duration_s: f64,
    #[serde(default)]
    pub noise_kva: f64,
}

impl SynthProfileSpec {
    fn deterministic_value(&self, t: f64) -> f64 {
        let grow = self.growth_kva_per_s * (t - self.growth_start_s).clamp(0.0, self.growth_duration_s.max(0.0));
        let decline =
            self.decline_kva_per_s * (t - self.decline_start_s).clamp(0.0, self.decline_duration_s.max(0.0));
        self.base_kva + grow - decline
    }
}

/// Synthesize profiles on a fixed sample grid covering `[0, horizon_s]`.
/// Noise is uniform in `[-noise_kva, +noise_kva]`, drawn from a substream
/// keyed by the seed and the profile id, so the same inputs always yield
/// the same set.
pub fn synth_profiles(
    specs: &[SynthProfileSpec],
    spacing_s: f64,
    horizon_s: f64,
    seed: u64,
) -> LoadProfileSet {
    assert!(spacing_s > 0.0, "sample spacing must be positive");
    let n = (horizon_s / spacing_s).ceil() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * spacing_s).collect();
    let mut ids = Vec::with_capacity(specs.len());
    let mut values = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut rng = substream_rng(seed, "profile", &spec.id);
        let column: Vec<f64> = times
            .iter()
            .map(|&t| {
                let noise = if spec.noise_kva > 0.0 {
                    rng.gen_range(-spec.noise_kva..=spec.noise_kva)
                } else {
                    0.0
                };
                (spec.deterministic_value(t) + noise).max(0.0)
            })
            .collect();
        ids.push(spec.id.clone());
        values.push(column);
    }
    LoadProfileSet { ids, times, values }
}
