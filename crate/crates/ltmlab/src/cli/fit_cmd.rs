//! The `fit` and `report` subcommands: turn a finished campaign into
//! scaling-law fits, plots, and tables.

use std::path::Path;

use crate::scaling::{
    compute_frontier, fit_broken_power_law, min_loss_per_run, render_report, run_points,
    FitMetric, ReportSection,
};
use crate::train::{RunLogEntry, RunStatus};

use super::campaign::{render_campaign_report, CampaignIndex, CampaignKind, IndexEntry, Selection};
use super::run_cmd::RunSummary;
use super::svg::scaling_plot;
use super::{AxisArg, CliError, FitArgs, MetricArg, ReportArgs};

impl MetricArg {
    fn to_metric(self) -> FitMetric {
        match self {
            MetricArg::Mse => FitMetric::Mse,
            MetricArg::Crps => FitMetric::Crps,
            MetricArg::Loglik => FitMetric::LogLik,
        }
    }
}

impl AxisArg {
    fn label(self) -> &'static str {
        match self {
            AxisArg::Params => "parameters",
            AxisArg::Compute => "compute",
            AxisArg::Data => "training points",
        }
    }
}

fn load_log(campaign_dir: &Path, entry: &IndexEntry) -> Result<Vec<RunLogEntry>, CliError> {
    let path = campaign_dir.join(&entry.run).join("log.jsonl");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Run(format!("run log {}: {e}", path.display())))?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| CliError::Run(format!("run log {}: {e}", path.display())))
        })
        .collect()
}

/// Completed (non-diverged) cells with their logs. The index is the source
/// of truth for which runs exist; missing logs are hard errors, not skips.
fn completed_runs(
    campaign_dir: &Path,
    index: &CampaignIndex,
) -> Result<Vec<(IndexEntry, Vec<RunLogEntry>)>, CliError> {
    let mut out = Vec::new();
    for entry in &index.cells {
        if entry.status == RunStatus::Diverged.to_string() || entry.status == "PENDING" {
            continue;
        }
        out.push((entry.clone(), load_log(campaign_dir, entry)?));
    }
    Ok(out)
}

/// The paper's protocol keeps the best model at each abscissa, so points
/// sharing an A (e.g. one size at several learning rates) collapse to
/// their minimum loss.
fn best_per_abscissa(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    // dedup keeps the first of each group, which sorted to the lower loss
    points.dedup_by(|next, kept| kept.0 == next.0);
    points
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    if !args.campaign.is_dir() {
        return Err(CliError::Usage(format!(
            "campaign directory {} does not exist",
            args.campaign.display(),
        )));
    }
    let index = CampaignIndex::load(&args.campaign)?;
    let runs = completed_runs(&args.campaign, &index)?;
    if runs.len() < 2 {
        return Err(CliError::Run(format!(
            "scaling fits need at least 2 completed runs, campaign has {}",
            runs.len(),
        )));
    }
    let metric = args.metric.to_metric();

    let points: Vec<(f64, f64)> = match args.axis {
        AxisArg::Params => {
            let mut pts = Vec::with_capacity(runs.len());
            for (entry, log) in &runs {
                pts.push((
                    entry.n_params as f64,
                    min_loss_per_run(log, metric)
                        .map_err(|e| CliError::Run(format!("cell {}: {e}", entry.id)))?,
                ));
            }
            best_per_abscissa(pts)
        }
        AxisArg::Data => {
            let mut pts = Vec::with_capacity(runs.len());
            for (entry, log) in &runs {
                let summary =
                    RunSummary::load(&args.campaign.join(&entry.run)).map_err(|e| match e {
                        CliError::Run(m) => CliError::Run(format!("cell {}: {m}", entry.id)),
                        other => other,
                    })?;
                pts.push((
                    summary.n_train_points as f64,
                    min_loss_per_run(log, metric)
                        .map_err(|e| CliError::Run(format!("cell {}: {e}", entry.id)))?,
                ));
            }
            best_per_abscissa(pts)
        }
        AxisArg::Compute => {
            // the frontier across all runs comes first; its points are the fit input
            let logs: Vec<Vec<(u128, f64)>> = runs
                .iter()
                .map(|(entry, log)| {
                    run_points(log, metric)
                        .map_err(|e| CliError::Run(format!("cell {}: {e}", entry.id)))
                })
                .collect::<Result<_, _>>()?;
            compute_frontier(&logs)
                .map_err(|e| CliError::Run(format!("compute frontier: {e}")))?
                .into_iter()
                .map(|(c, l)| (c as f64, l))
                .collect()
        }
    };

    let outcome = fit_broken_power_law(&points)
        .map_err(|e| CliError::Run(format!("power-law fit: {e}")))?;
    let axis_name = match args.axis {
        AxisArg::Params => "params",
        AxisArg::Compute => "compute",
        AxisArg::Data => "data",
    };
    let section = ReportSection {
        axis: axis_name.into(),
        metric: metric.name().into(),
        outcome: outcome.clone(),
    };
    let report = render_report(&[section]);
    let stem = format!("fit-{axis_name}-{}", metric.name());
    std::fs::write(args.campaign.join(format!("{stem}.txt")), &report)
        .map_err(|e| CliError::Run(format!("writing fit report: {e}")))?;
    let svg = scaling_plot(&points, &outcome, args.axis.label(), metric.name());
    std::fs::write(args.campaign.join(format!("{stem}.svg")), svg)
        .map_err(|e| CliError::Run(format!("writing fit plot: {e}")))?;

    print!("{report}");
    println!("points: {}", points.len());
    println!("wrote {stem}.txt and {stem}.svg in {}", args.campaign.display());
    Ok(0)
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32, CliError> {
    if !args.campaign.is_dir() {
        return Err(CliError::Usage(format!(
            "campaign directory {} does not exist",
            args.campaign.display(),
        )));
    }
    let index = CampaignIndex::load(&args.campaign)?;
    let mut summaries = Vec::new();
    for entry in &index.cells {
        if entry.status == "PENDING" {
            continue;
        }
        summaries.push((
            entry.id.clone(),
            RunSummary::load(&args.campaign.join(&entry.run))?,
        ));
    }
    let selection: Option<Selection> = if index.kind == CampaignKind::LrSweep {
        let path = args.campaign.join("selection.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Run(format!("selection {}: {e}", path.display())))?;
        Some(
            serde_json::from_str(&text)
                .map_err(|e| CliError::Run(format!("selection {}: {e}", path.display())))?,
        )
    } else {
        None
    };
    let report = render_campaign_report(&index, &summaries, selection.as_ref());
    std::fs::write(args.campaign.join("report.txt"), &report)
        .map_err(|e| CliError::Run(format!("writing report: {e}")))?;
    print!("{report}");
    Ok(0)
}
