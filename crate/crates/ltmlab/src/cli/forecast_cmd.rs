//! The `forecast` subcommand: checkpoint plus context series in, sampled
//! trajectories out as CSV and an overlay plot.
//!
//! Contexts are normalized with their own mean and standard deviation
//! before entering the model (which trains on normalized data), and every
//! output is mapped back to the series' units. `--raw` skips both steps
//! for series already in model units.

use std::fmt::Write as _;

use crate::data::read_series_csv;
use crate::model::{forecast_rollout, Forecast, Model};

use super::svg::forecast_plot;
use super::{CliError, ForecastArgs};

pub const FORECAST_CSV_VERSION: &str = "ltmlab-forecast v1";

fn render_csv(forecast: &Forecast, n_samples: usize) -> String {
    let mut out = format!("# {FORECAST_CSV_VERSION}\n");
    out += "step,mean,p16,p84";
    for s in 0..n_samples {
        let _ = write!(out, ",sample_{s}");
    }
    out += "\n";
    for t in 0..forecast.mean.len() {
        let _ = write!(
            out,
            "{},{},{},{}",
            t + 1,
            forecast.mean[t],
            forecast.lo[t],
            forecast.hi[t],
        );
        for trajectory in &forecast.trajectories {
            let _ = write!(out, ",{}", trajectory[t]);
        }
        out += "\n";
    }
    out
}

pub fn cmd_forecast(args: &ForecastArgs) -> Result<i32, CliError> {
    let model = Model::load(&args.checkpoint)
        .map_err(|e| CliError::Usage(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let series = read_series_csv(&args.series)
        .map_err(|e| CliError::Usage(format!("series {}: {e}", args.series.display())))?;
    let context_len = args.context.unwrap_or(series.len());
    if context_len == 0 || context_len > series.len() {
        return Err(CliError::Usage(format!(
            "context must cover 1..={} points of the series, got {context_len}",
            series.len(),
        )));
    }
    let context = &series[..context_len];

    // context statistics stand in for the training corpus' per-series ones
    let (shift, scale) = if args.raw {
        (0.0, 1.0)
    } else {
        let n = context.len() as f64;
        let mean = context.iter().sum::<f64>() / n;
        let var = context.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        (mean, if std == 0.0 { 1.0 } else { std })
    };
    let normalized: Vec<f64> = context.iter().map(|v| (v - shift) / scale).collect();

    let mut forecast = forecast_rollout(
        &model,
        &normalized,
        args.horizon,
        args.n_samples,
        args.seed,
    )
    .map_err(|e| CliError::Run(format!("forecast: {e}")))?;
    for values in [&mut forecast.mean, &mut forecast.lo, &mut forecast.hi] {
        for v in values.iter_mut() {
            *v = *v * scale + shift;
        }
    }
    for trajectory in &mut forecast.trajectories {
        for v in trajectory.iter_mut() {
            *v = *v * scale + shift;
        }
    }

    let csv_path = args.out.with_extension("csv");
    std::fs::write(&csv_path, render_csv(&forecast, args.n_samples))
        .map_err(|e| CliError::Run(format!("writing {}: {e}", csv_path.display())))?;
    let svg_path = args.out.with_extension("svg");
    let svg = forecast_plot(&series, context_len, &forecast.mean, &forecast.lo, &forecast.hi);
    std::fs::write(&svg_path, svg)
        .map_err(|e| CliError::Run(format!("writing {}: {e}", svg_path.display())))?;

    println!(
        "forecast: horizon {} x {} samples from {} context points",
        args.horizon, args.n_samples, context_len,
    );
    // held-out tail of the series doubles as truth for a point-forecast score
    let held_out = series.len() - context_len;
    let overlap = held_out.min(args.horizon);
    if overlap > 0 {
        let mse = (0..overlap)
            .map(|t| {
                let err = forecast.mean[t] - series[context_len + t];
                err * err
            })
            .sum::<f64>()
            / overlap as f64;
        println!("forecast mse over {overlap} held-out points: {mse:.6e}");
    }
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(0)
}
