//! Experiment plans and campaign bookkeeping.
//!
//! A plan is a TOML file naming a campaign kind, a base model and training
//! config, and exactly one sweep axis. Validation expands the grid up
//! front and rejects bad plans before anything runs. The campaign index
//! enumerates every cell and is written only by the sweep coordinator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{count_parameters, ModelConfig};
use crate::train::{RunStatus, TrainConfig};
use crate::util::derive_seed;

use super::run_cmd::RunSummary;
use super::CliError;

pub const INDEX_VERSION: &str = "ltmlab-campaign v1";
pub const SELECTION_VERSION: &str = "ltmlab-selection v1";

/// Width over depth stays below this in parameter-scaling grids, so the
/// sweep never probes the shallow-and-wide regime where scaling bends.
pub const MAX_ASPECT_RATIO: f64 = 70.0;

/// Diverged cells outside LR sweeps are retried at 0.8x the learning rate,
/// at most this many times. LR sweeps keep their diverged cells as data.
pub const BACKOFF_FACTOR: f64 = 0.8;
pub const BACKOFF_MAX_RETRIES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    ParamScaling,
    DataScaling,
    LrSweep,
    ArchSweep,
}

impl std::fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CampaignKind::ParamScaling => "param_scaling",
            CampaignKind::DataScaling => "data_scaling",
            CampaignKind::LrSweep => "lr_sweep",
            CampaignKind::ArchSweep => "arch_sweep",
        };
        f.write_str(s)
    }
}

/// One entry of the model-size axis. `lr_max` overrides the base rate for
/// that size in parameter-scaling grids (the fitted optimum per size); LR
/// sweeps take their rates from the `lrs` axis instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSpec {
    pub d_m: usize,
    pub n_layers: usize,
    #[serde(default)]
    pub lr_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: CampaignKind,
    #[serde(default)]
    pub seed: u64,
    /// Campaign directory, relative to the plan file.
    pub out: PathBuf,
    /// Corpus cache; required except for data scaling.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Corpus manifest; data scaling rebuilds the corpus per f_d from it.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Axis for param_scaling and lr_sweep.
    #[serde(default)]
    pub models: Vec<SizeSpec>,
    /// Axis for lr_sweep.
    #[serde(default)]
    pub lrs: Vec<f64>,
    /// Axis for arch_sweep.
    #[serde(default)]
    pub heads: Vec<usize>,
    /// Axis for data_scaling.
    #[serde(default)]
    pub f_d: Vec<f64>,
}

impl ExperimentPlan {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("experiment plan: {e}")))
    }
}

/// One grid cell, fully expanded: its own model, training config (seed and
/// learning rate resolved), and data fraction.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub f_d: Option<f64>,
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

/// Expands the plan into its grid, rejecting invalid plans before any run:
/// exactly the axis matching `kind` may be populated, every cell's model
/// must pass strict validation, and parameter-scaling grids must keep four
/// heads and aspect ratio below [`MAX_ASPECT_RATIO`].
pub fn expand_plan(plan: &ExperimentPlan) -> Result<Vec<Cell>, CliError> {
    plan.model
        .validate()
        .map_err(|e| usage(format!("plan model: {e}")))?;
    plan.train
        .validate()
        .map_err(|e| usage(format!("plan train config: {e}")))?;

    let axis_named = |name: &str, populated: bool| -> Result<(), CliError> {
        if populated {
            Err(usage(format!(
                "{} plans do not take the `{name}` axis",
                plan.kind
            )))
        } else {
            Ok(())
        }
    };

    match plan.kind {
        CampaignKind::DataScaling => {
            if plan.manifest.is_none() {
                return Err(usage("data_scaling plans need `manifest`".into()));
            }
            if plan.corpus.is_some() {
                return Err(usage(
                    "data_scaling plans rebuild the corpus per f_d; drop `corpus`".into(),
                ));
            }
        }
        _ => {
            if plan.corpus.is_none() {
                return Err(usage(format!("{} plans need `corpus`", plan.kind)));
            }
            if plan.manifest.is_some() {
                return Err(usage(format!(
                    "{} plans read the cache; drop `manifest`",
                    plan.kind
                )));
            }
        }
    }

    let mut cells = Vec::new();
    match plan.kind {
        CampaignKind::ParamScaling => {
            axis_named("lrs", !plan.lrs.is_empty())?;
            axis_named("heads", !plan.heads.is_empty())?;
            axis_named("f_d", !plan.f_d.is_empty())?;
            if plan.models.is_empty() {
                return Err(usage("param_scaling plans need a `models` axis".into()));
            }
            for size in &plan.models {
                let model = ModelConfig {
                    d_m: size.d_m,
                    n_layers: size.n_layers,
                    ..plan.model.clone()
                };
                model
                    .validate_strict()
                    .map_err(|e| usage(format!("size d_m={} n_layers={}: {e}", size.d_m, size.n_layers)))?;
                if model.n_heads != 4 {
                    return Err(usage(format!(
                        "param_scaling fixes n_heads=4, plan has {}",
                        model.n_heads
                    )));
                }
                if model.aspect_ratio() >= MAX_ASPECT_RATIO {
                    return Err(usage(format!(
                        "size d_m={} n_layers={}: aspect ratio {} is not below {MAX_ASPECT_RATIO}",
                        size.d_m,
                        size.n_layers,
                        model.aspect_ratio(),
                    )));
                }
                let id = format!("size-d{:03}-l{}", size.d_m, size.n_layers);
                let mut train = plan.train.clone();
                if let Some(lr) = size.lr_max {
                    train.lr_max = lr;
                }
                cells.push(Cell {
                    id,
                    model,
                    train,
                    f_d: None,
                });
            }
        }
        CampaignKind::LrSweep => {
            axis_named("heads", !plan.heads.is_empty())?;
            axis_named("f_d", !plan.f_d.is_empty())?;
            if plan.models.is_empty() || plan.lrs.is_empty() {
                return Err(usage("lr_sweep plans need `models` and `lrs` axes".into()));
            }
            for lr in &plan.lrs {
                if !(lr.is_finite() && *lr > 0.0) {
                    return Err(usage(format!("lr_sweep rate {lr} is not positive and finite")));
                }
            }
            for size in &plan.models {
                if size.lr_max.is_some() {
                    return Err(usage(
                        "lr_sweep sizes take rates from `lrs`, not per-size lr_max".into(),
                    ));
                }
                let model = ModelConfig {
                    d_m: size.d_m,
                    n_layers: size.n_layers,
                    ..plan.model.clone()
                };
                model
                    .validate_strict()
                    .map_err(|e| usage(format!("size d_m={} n_layers={}: {e}", size.d_m, size.n_layers)))?;
                for (j, lr) in plan.lrs.iter().enumerate() {
                    let id = format!("size-d{:03}-l{}-lr{j}", size.d_m, size.n_layers);
                    let mut train = plan.train.clone();
                    train.lr_max = *lr;
                    cells.push(Cell {
                        id,
                        model: model.clone(),
                        train,
                        f_d: None,
                    });
                }
            }
        }
        CampaignKind::ArchSweep => {
            axis_named("models", !plan.models.is_empty())?;
            axis_named("lrs", !plan.lrs.is_empty())?;
            axis_named("f_d", !plan.f_d.is_empty())?;
            if plan.heads.is_empty() {
                return Err(usage("arch_sweep plans need a `heads` axis".into()));
            }
            for h in &plan.heads {
                let model = ModelConfig {
                    n_heads: *h,
                    ..plan.model.clone()
                };
                model
                    .validate_strict()
                    .map_err(|e| usage(format!("n_heads={h}: {e}")))?;
                cells.push(Cell {
                    id: format!("heads-{h}"),
                    model,
                    train: plan.train.clone(),
                    f_d: None,
                });
            }
        }
        CampaignKind::DataScaling => {
            axis_named("models", !plan.models.is_empty())?;
            axis_named("lrs", !plan.lrs.is_empty())?;
            axis_named("heads", !plan.heads.is_empty())?;
            if plan.f_d.is_empty() {
                return Err(usage("data_scaling plans need an `f_d` axis".into()));
            }
            plan.model
                .validate_strict()
                .map_err(|e| usage(format!("plan model: {e}")))?;
            for v in &plan.f_d {
                if !(*v > 0.0 && *v <= 1.0) {
                    return Err(usage(format!("f_d value {v} is outside (0, 1]")));
                }
                cells.push(Cell {
                    id: format!("fd-{v}"),
                    model: plan.model.clone(),
                    train: plan.train.clone(),
                    f_d: Some(*v),
                });
            }
        }
    }

    let mut ids: Vec<&str> = cells.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != cells.len() {
        return Err(usage("plan axes produce duplicate cell ids".into()));
    }

    for cell in &mut cells {
        cell.train.seed = derive_seed(plan.seed, &format!("cell:{}", cell.id));
        cell.train
            .validate()
            .map_err(|e| usage(format!("cell {}: {e}", cell.id)))?;
    }
    Ok(cells)
}

/// One row of the campaign index. `config` and `run` point at the cell's
/// final attempt; `retries` counts learning-rate backoffs that preceded it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub n_params: u64,
    pub n_heads: usize,
    pub f_d: Option<f64>,
    pub lr_max: f64,
    pub seed: u64,
    pub config: String,
    pub run: String,
    pub status: String,
    pub retries: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignIndex {
    pub version: String,
    pub kind: CampaignKind,
    pub seed: u64,
    pub cells: Vec<IndexEntry>,
}

impl CampaignIndex {
    pub fn load(campaign_dir: &Path) -> Result<Self, CliError> {
        let path = campaign_dir.join("index.json");
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Usage(format!("campaign index {}: {e}", path.display()))
        })?;
        let index: CampaignIndex = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("campaign index {}: {e}", path.display())))?;
        if index.version != INDEX_VERSION {
            return Err(CliError::Usage(format!(
                "campaign index version {:?}, expected {INDEX_VERSION:?}",
                index.version
            )));
        }
        Ok(index)
    }

    pub fn save(&self, campaign_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("index serializes");
        std::fs::write(campaign_dir.join("index.json"), text + "\n")
            .map_err(|e| CliError::Run(format!("writing campaign index: {e}")))
    }
}

/// Best learning rate per model size, chosen by minimum CRPS over the
/// cells that did not diverge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeSelection {
    pub d_m: usize,
    pub n_layers: usize,
    pub n_params: u64,
    pub best_lr_max: Option<f64>,
    pub best_crps: Option<f64>,
    pub best_run: Option<String>,
    /// Learning rates whose runs diverged, excluded from selection.
    pub excluded_lrs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub version: String,
    pub sizes: Vec<SizeSelection>,
}

/// Groups LR-sweep cells by size (plan order) and picks the best surviving
/// rate for each. Summaries are looked up by cell id.
pub fn select_best_lrs(
    plan_models: &[SizeSpec],
    base_model: &ModelConfig,
    index: &CampaignIndex,
    summaries: &[(String, RunSummary)],
) -> Selection {
    let mut sizes = Vec::new();
    for size in plan_models {
        let model = ModelConfig {
            d_m: size.d_m,
            n_layers: size.n_layers,
            ..base_model.clone()
        };
        let prefix = format!("size-d{:03}-l{}-lr", size.d_m, size.n_layers);
        let mut best: Option<(f64, f64, String)> = None;
        let mut excluded = Vec::new();
        for entry in index.cells.iter().filter(|e| e.id.starts_with(&prefix)) {
            if entry.status == RunStatus::Diverged.to_string() {
                excluded.push(entry.lr_max);
                continue;
            }
            let Some((_, summary)) = summaries.iter().find(|(id, _)| *id == entry.id) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, crps, _)| summary.min_crps < *crps) {
                best = Some((entry.lr_max, summary.min_crps, entry.run.clone()));
            }
        }
        sizes.push(SizeSelection {
            d_m: size.d_m,
            n_layers: size.n_layers,
            n_params: count_parameters(&model),
            best_lr_max: best.as_ref().map(|(lr, _, _)| *lr),
            best_crps: best.as_ref().map(|(_, crps, _)| *crps),
            best_run: best.map(|(_, _, run)| run),
            excluded_lrs: excluded,
        });
    }
    Selection {
        version: SELECTION_VERSION.into(),
        sizes,
    }
}

/// Human-readable campaign table: one row per cell with its scores, plus
/// the selection for LR sweeps. Deterministic, no wall-clock fields.
pub fn render_campaign_report(
    index: &CampaignIndex,
    summaries: &[(String, RunSummary)],
    selection: Option<&Selection>,
) -> String {
    let mut out = format!(
        "{INDEX_VERSION} report\nkind: {}  seed: {}  cells: {}\n\n",
        index.kind,
        index.seed,
        index.cells.len(),
    );
    out += &format!(
        "{:<26} {:>6} {:>10} {:>7} {:>11} {:>13} {:>13} {:>13} {:>16}\n",
        "cell", "heads", "n_params", "f_d", "lr_max", "min_mse", "min_crps", "min_nll", "status",
    );
    for entry in &index.cells {
        let summary = summaries.iter().find(|(id, _)| *id == entry.id).map(|(_, s)| s);
        let (mse, crps, nll) = match summary {
            Some(s) => (
                format!("{:.6e}", s.min_mse),
                format!("{:.6e}", s.min_crps),
                format!("{:.6e}", s.min_nll),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        let fd = entry.f_d.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
        let status = if entry.retries > 0 {
            format!("{} (r{})", entry.status, entry.retries)
        } else {
            entry.status.clone()
        };
        out += &format!(
            "{:<26} {:>6} {:>10} {:>7} {:>11.4e} {:>13} {:>13} {:>13} {:>16}\n",
            entry.id, entry.n_heads, entry.n_params, fd, entry.lr_max, mse, crps, nll, status,
        );
    }
    if let Some(sel) = selection {
        out += "\nbest learning rate per size (min CRPS, diverged excluded):\n";
        for s in &sel.sizes {
            match (&s.best_lr_max, &s.best_crps) {
                (Some(lr), Some(crps)) => {
                    out += &format!(
                        "  d_m={:<4} n_layers={:<3} n_params={:<10} lr_max={:.4e} crps={:.6e}",
                        s.d_m, s.n_layers, s.n_params, lr, crps,
                    );
                }
                _ => {
                    out += &format!(
                        "  d_m={:<4} n_layers={:<3} n_params={:<10} no surviving run",
                        s.d_m, s.n_layers, s.n_params,
                    );
                }
            }
            if s.excluded_lrs.is_empty() {
                out += "\n";
            } else {
                let lrs: Vec<String> = s.excluded_lrs.iter().map(|v| format!("{v:.4e}")).collect();
                out += &format!("  (diverged: {})\n", lrs.join(", "));
            }
        }
    }
    out
}
