//! Corpus construction: normalization, train/test splitting, dataset
//! scaling, padding, balance accounting, synthetic generators, window
//! sampling, CSV ingestion, and the binary corpus cache.
//!
//! The pipeline runs: ingest (CSV and/or synthetic) -> per-series
//! normalization -> per-source 95/5 split by whole series -> train-side
//! scaling by `f_d` -> left-padding of short series -> cache. Everything
//! downstream samples windows of `l_seq + 1` points (`l_seq` inputs plus
//! the shifted targets) and masks out positions whose target falls in the
//! padding.

mod cache;
mod manifest;
mod sampler;
mod synth;

pub use cache::{load_cache, save_cache};
pub use manifest::{build_corpus, ingest_csv_path, read_series_csv, Manifest, SourceSpec};
pub use sampler::{assemble_windows, eval_windows, Sampler, WindowBatch};
pub use synth::synth_corpus;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::util::{derive_seed, derive_seed_indexed};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot normalize an empty series")]
    EmptySeries,
    #[error("data fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("corpus has no sampleable series")]
    EmptyCorpus,
    #[error("corpus cache format: {0}")]
    Format(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path} record {record}: {what}")]
    BadRecord {
        path: String,
        record: usize,
        what: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One raw time series. `values` holds only real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub source: String,
    pub id: String,
    pub values: Vec<f64>,
}

/// A series ready for windowing: length is at least `l_seq + 1`, with
/// `pad_len` synthetic zeros on the left when the real series was shorter.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSeries {
    pub source: String,
    pub id: String,
    pub values: Vec<f64>,
    pub pad_len: usize,
}

impl PaddedSeries {
    /// Number of real observations.
    pub fn real_len(&self) -> usize {
        self.values.len() - self.pad_len
    }
}

/// The materialized train/test corpus for one window length.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub l_seq: usize,
    pub train: Vec<PaddedSeries>,
    pub test: Vec<PaddedSeries>,
}

/// Per-source share of a corpus. Sources above the balance threshold are
/// listed in `warnings`.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    /// (source, points, fraction of total), in first-appearance order.
    pub entries: Vec<(String, u64, f64)>,
    pub warnings: Vec<String>,
}

/// No single source should exceed roughly 15% of the corpus; the report
/// warns above 17% to leave slack for rounding in generated corpora.
pub const BALANCE_WARN_FRACTION: f64 = 0.17;

/// In-place zero-mean unit-variance scaling with the population standard
/// deviation. A constant series becomes all zeros.
pub fn normalize(values: &mut [f64]) -> Result<(), DataError> {
    if values.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        values.fill(0.0);
        return Ok(());
    }
    for v in values {
        *v = (*v - mean) / std;
    }
    Ok(())
}

/// Splits a corpus 95/5 per source by whole series, deterministically in
/// `seed`. Sources with fewer than 20 series cannot honor the 5% fraction
/// exactly and are reported in the warning list (a single-series source
/// keeps its series in train).
pub fn split_corpus(
    series: Vec<Series>,
    seed: u64,
) -> (Vec<Series>, Vec<Series>, Vec<String>) {
    // group by source, preserving first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Series>> = Vec::new();
    for s in series {
        match order.iter().position(|name| *name == s.source) {
            Some(i) => groups[i].push(s),
            None => {
                order.push(s.source.clone());
                groups.push(vec![s]);
            }
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (name, mut group) in order.into_iter().zip(groups) {
        let n = group.len();
        if n < 20 {
            warnings.push(format!(
                "source {name} has {n} series; a 5% test split cannot be honored exactly below 20"
            ));
        }
        if n == 1 {
            train.append(&mut group);
            continue;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("split:{name}")));
        group.shuffle(&mut rng);
        let n_test = ((n as f64 * 0.05).round() as usize).max(1);
        for (i, s) in group.into_iter().enumerate() {
            if i < n_test {
                test.push(s);
            } else {
                train.push(s);
            }
        }
    }
    (train, test, warnings)
}

/// Reduces a training corpus to a fraction `f_d` of its points while
/// preserving source diversity. Each series either keeps a contiguous
/// segment of `ceil(f_d * len)` points at a uniformly random offset, or,
/// when that segment could not fill a window (`< l_seq + 1` points), the
/// whole series is kept with probability `f_d` and dropped otherwise.
/// `f_d = 1` returns the corpus unchanged.
pub fn scale_dataset(
    series: Vec<Series>,
    f_d: f64,
    l_seq: usize,
    seed: u64,
) -> Result<Vec<Series>, DataError> {
    if !(f_d > 0.0 && f_d <= 1.0) {
        return Err(DataError::BadFraction(f_d));
    }
    let mut out = Vec::with_capacity(series.len());
    for (i, mut s) in series.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed_indexed(seed, "scale", i as u64));
        let len = s.values.len();
        let cut = (f_d * len as f64).ceil() as usize;
        if cut >= l_seq + 1 {
            let start = rng.random_range(0..=len - cut);
            s.values.drain(..start);
            s.values.truncate(cut);
            out.push(s);
        } else {
            let keep: f64 = rng.random_range(0.0..1.0);
            if keep < f_d {
                out.push(s);
            }
        }
    }
    Ok(out)
}

/// Left-pads every series shorter than `l_seq + 1` with zeros so each one
/// admits at least one window, recording how many positions are synthetic.
pub fn pad_series(series: Vec<Series>, l_seq: usize) -> Vec<PaddedSeries> {
    let need = l_seq + 1;
    series
        .into_iter()
        .map(|s| {
            let len = s.values.len();
            if len >= need {
                PaddedSeries {
                    source: s.source,
                    id: s.id,
                    values: s.values,
                    pad_len: 0,
                }
            } else {
                let pad_len = need - len;
                let mut values = vec![0.0; pad_len];
                values.extend(s.values);
                PaddedSeries {
                    source: s.source,
                    id: s.id,
                    values,
                    pad_len,
                }
            }
        })
        .collect()
}

/// Counts points per source and flags sources above
/// [`BALANCE_WARN_FRACTION`] of the total.
pub fn balance_report(series: &[Series]) -> BalanceReport {
    let mut order: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for s in series {
        match order.iter().position(|name| *name == s.source) {
            Some(i) => counts[i] += s.values.len() as u64,
            None => {
                order.push(s.source.clone());
                counts.push(s.values.len() as u64);
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (name, count) in order.into_iter().zip(counts) {
        let fraction = if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        };
        if fraction > BALANCE_WARN_FRACTION {
            warnings.push(format!(
                "source {name} holds {:.1}% of the corpus, above the {:.0}% balance guideline",
                fraction * 100.0,
                BALANCE_WARN_FRACTION * 100.0
            ));
        }
        entries.push((name, count, fraction));
    }
    BalanceReport { entries, warnings }
}
