//! Scaling-law extraction from run logs: power-law fits (single and
//! broken), compute-frontier envelopes, optimal-learning-rate fits, and
//! the per-run loss minima the fits consume.

mod frontier;
mod lrfit;
mod powerlaw;
mod report;

pub use frontier::compute_frontier;
pub use lrfit::{fit_optimal_lr, OffsetPowerLawFit};
pub use powerlaw::{
    fit_broken_power_law, fit_power_law, BrokenFitOutcome, BrokenPowerLawFit, PowerLawFit,
    BREAK_RSS_IMPROVEMENT,
};
pub use report::{render_report, ReportSection};

use thiserror::Error;

use crate::train::RunLogEntry;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit requires positive finite coordinates, got ({a}, {l})")]
    NonPositivePoint { a: f64, l: f64 },
    #[error("weights must be positive and match the number of points")]
    BadWeights,
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("no points to build a frontier from")]
    NoPoints,
    #[error("run log {log} has non-increasing compute")]
    NonMonotoneCompute { log: usize },
    #[error("offset search did not converge: {0}")]
    NoConvergence(String),
    #[error("run log is empty")]
    EmptyLog,
    #[error("run log entry is malformed: {0}")]
    BadLog(String),
}

/// Which test metric a fit consumes. `LogLik` is the shifted variant
/// used for log-space fitting: min test NLL plus the constant 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMetric {
    Mse,
    Crps,
    LogLik,
}

impl FitMetric {
    pub fn name(&self) -> &'static str {
        match self {
            FitMetric::Mse => "mse",
            FitMetric::Crps => "crps",
            FitMetric::LogLik => "loglik",
        }
    }

    fn value(&self, entry: &RunLogEntry) -> f64 {
        match self {
            FitMetric::Mse => entry.test_mse,
            FitMetric::Crps => entry.test_crps,
            FitMetric::LogLik => entry.test_nll + 2.0,
        }
    }
}

/// Minimum of the chosen test metric across a run's evaluations; the
/// quantity scaling fits consume, one per run.
pub fn min_loss_per_run(entries: &[RunLogEntry], metric: FitMetric) -> Result<f64, ScalingError> {
    entries
        .iter()
        .map(|e| metric.value(e))
        .min_by(f64::total_cmp)
        .ok_or(ScalingError::EmptyLog)
}

/// Extracts a run's `(compute, metric)` curve for frontier building.
pub fn run_points(
    entries: &[RunLogEntry],
    metric: FitMetric,
) -> Result<Vec<(u128, f64)>, ScalingError> {
    if entries.is_empty() {
        return Err(ScalingError::EmptyLog);
    }
    entries
        .iter()
        .map(|e| {
            let c: u128 = e
                .compute
                .parse()
                .map_err(|_| ScalingError::BadLog(format!("compute field {:?}", e.compute)))?;
            Ok((c, metric.value(e)))
        })
        .collect()
}
