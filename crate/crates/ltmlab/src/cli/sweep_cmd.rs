//! The `sweep` subcommand: a full campaign from one plan file.
//!
//! The coordinator expands the plan, lays out the campaign directory,
//! runs every cell (in this process, or as worker processes when
//! `--parallel` exceeds one), and is the only writer of the index. A
//! cell that diverges outside an LR sweep is retried at 0.8x the rate a
//! few times; LR sweeps keep diverged cells as data points and exclude
//! them from selection.

use std::path::{Path, PathBuf};
use std::process::{Child, Command};

use crate::data::{build_corpus, save_cache, Manifest};
use crate::model::count_parameters;
use crate::train::RunStatus;

use super::campaign::{
    expand_plan, render_campaign_report, select_best_lrs, CampaignIndex, CampaignKind, Cell,
    ExperimentPlan, IndexEntry, Selection, BACKOFF_FACTOR, BACKOFF_MAX_RETRIES, INDEX_VERSION,
};
use super::run_cmd::{execute_run, RunSpec, RunSummary};
use super::{CliError, SweepArgs};

/// One attempt at a cell: its config file and run directory, both named by
/// the retry ordinal so earlier attempts stay on disk.
fn attempt_paths(cell_dir: &Path, retry: u32) -> (PathBuf, PathBuf) {
    if retry == 0 {
        (cell_dir.join("config.toml"), cell_dir.join("run"))
    } else {
        (
            cell_dir.join(format!("config-r{retry}.toml")),
            cell_dir.join(format!("run-r{retry}")),
        )
    }
}

fn write_cell_config(
    cell: &Cell,
    cell_dir: &Path,
    corpus: &Path,
    retry: u32,
    lr_max: f64,
) -> Result<PathBuf, CliError> {
    let (config_path, run_dir) = attempt_paths(cell_dir, retry);
    let mut train = cell.train.clone();
    train.lr_max = lr_max;
    let spec = RunSpec {
        corpus: corpus.to_path_buf(),
        out: Some(run_dir),
        model: cell.model.clone(),
        train,
    };
    let text = toml::to_string(&spec).expect("run spec serializes");
    std::fs::write(&config_path, text)
        .map_err(|e| CliError::Run(format!("writing {}: {e}", config_path.display())))?;
    Ok(config_path)
}

/// Runs one attempt as a worker process so a crash cannot take the
/// coordinator down. Exit statuses 0 and 1 are run outcomes (the summary
/// file has the detail); anything else is a hard failure.
fn spawn_worker(config: &Path) -> Result<Child, CliError> {
    let exe = std::env::current_exe()
        .map_err(|e| CliError::Run(format!("locating worker executable: {e}")))?;
    Command::new(exe)
        .arg("train")
        .arg("--config")
        .arg(config)
        .spawn()
        .map_err(|e| CliError::Run(format!("spawning worker: {e}")))
}

fn run_attempt_local(config: &Path, verbose: bool) -> Result<RunSummary, CliError> {
    let (summary, _) = execute_run(config, verbose)?;
    Ok(summary)
}

struct Attempt {
    cell_index: usize,
    retry: u32,
    config: PathBuf,
    run_dir: PathBuf,
}

/// Runs a batch of attempts, `parallel` at a time when above one, and
/// returns each attempt's summary in order.
fn run_attempts(
    attempts: &[Attempt],
    parallel: usize,
    verbose: bool,
) -> Result<Vec<RunSummary>, CliError> {
    if parallel <= 1 {
        return attempts
            .iter()
            .map(|a| run_attempt_local(&a.config, verbose))
            .collect();
    }
    let mut summaries: Vec<Option<RunSummary>> = (0..attempts.len()).map(|_| None).collect();
    let mut next = 0usize;
    for batch in attempts.chunks(parallel) {
        let mut children: Vec<(usize, Child)> = Vec::new();
        for attempt in batch {
            children.push((next, spawn_worker(&attempt.config)?));
            next += 1;
        }
        for (index, mut child) in children {
            let status = child
                .wait()
                .map_err(|e| CliError::Run(format!("waiting for worker: {e}")))?;
            if !matches!(status.code(), Some(0) | Some(1)) {
                return Err(CliError::Run(format!(
                    "worker for {} failed with {status}",
                    attempts[index].config.display(),
                )));
            }
            summaries[index] = Some(RunSummary::load(&attempts[index].run_dir)?);
        }
    }
    Ok(summaries.into_iter().map(|s| s.expect("all attempts ran")).collect())
}

fn rel_to(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let plan_text = std::fs::read_to_string(&args.plan)
        .map_err(|e| CliError::Usage(format!("plan {}: {e}", args.plan.display())))?;
    let plan = ExperimentPlan::from_str(&plan_text)?;
    let cells = expand_plan(&plan)?;
    let plan_dir = args.plan.parent().unwrap_or(Path::new("."));

    // Cell configs embed their run and corpus paths, and workers resolve
    // relative paths against the config file, not our cwd. Absolutize here
    // so the embedded paths mean the same thing everywhere.
    let campaign_dir = if plan.out.is_absolute() {
        plan.out.clone()
    } else {
        plan_dir.join(&plan.out)
    };
    let campaign_dir = std::path::absolute(&campaign_dir)
        .map_err(|e| CliError::Run(format!("resolving {}: {e}", campaign_dir.display())))?;
    let cells_dir = campaign_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)
        .map_err(|e| CliError::Run(format!("creating {}: {e}", cells_dir.display())))?;
    std::fs::write(campaign_dir.join("plan.toml"), &plan_text)
        .map_err(|e| CliError::Run(format!("copying plan: {e}")))?;

    // per-cell corpus: the shared cache, or a per-f_d rebuild for data scaling
    let mut cell_corpora: Vec<PathBuf> = Vec::with_capacity(cells.len());
    match plan.kind {
        CampaignKind::DataScaling => {
            let manifest_path = plan.manifest.as_ref().expect("validated above");
            let manifest_path = if manifest_path.is_absolute() {
                manifest_path.clone()
            } else {
                plan_dir.join(manifest_path)
            };
            let mut manifest = Manifest::from_path(&manifest_path)
                .map_err(|e| CliError::Usage(format!("manifest {}: {e}", manifest_path.display())))?;
            let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
            let caches_dir = campaign_dir.join("caches");
            std::fs::create_dir_all(&caches_dir)
                .map_err(|e| CliError::Run(format!("creating {}: {e}", caches_dir.display())))?;
            for cell in &cells {
                manifest.f_d = cell.f_d.expect("data cells carry f_d");
                let (corpus, _, _) = build_corpus(&manifest, base_dir)
                    .map_err(|e| CliError::Usage(format!("building corpus: {e}")))?;
                let cache = caches_dir.join(format!("{}.corpus", cell.id));
                save_cache(&cache, &corpus)
                    .map_err(|e| CliError::Run(format!("writing cache: {e}")))?;
                cell_corpora.push(cache);
            }
        }
        _ => {
            let corpus = plan.corpus.as_ref().expect("validated above");
            let corpus = if corpus.is_absolute() {
                corpus.clone()
            } else {
                plan_dir.join(corpus)
            };
            let corpus = std::path::absolute(&corpus)
                .map_err(|e| CliError::Run(format!("resolving {}: {e}", corpus.display())))?;
            if !corpus.exists() {
                return Err(CliError::Usage(format!(
                    "corpus cache {} does not exist; run `ltmlab ingest` first",
                    corpus.display(),
                )));
            }
            cell_corpora = vec![corpus; cells.len()];
        }
    }

    // enumerate the grid up front so a crashed campaign still names every cell
    let mut index = CampaignIndex {
        version: INDEX_VERSION.into(),
        kind: plan.kind,
        seed: plan.seed,
        cells: cells
            .iter()
            .map(|cell| {
                let (config, run) = attempt_paths(&cells_dir.join(&cell.id), 0);
                IndexEntry {
                    id: cell.id.clone(),
                    n_params: count_parameters(&cell.model),
                    n_heads: cell.model.n_heads,
                    f_d: cell.f_d,
                    lr_max: cell.train.lr_max,
                    seed: cell.train.seed,
                    config: rel_to(&campaign_dir, &config),
                    run: rel_to(&campaign_dir, &run),
                    status: "PENDING".into(),
                    retries: 0,
                }
            })
            .collect(),
    };
    index.save(&campaign_dir)?;

    let mut pending: Vec<Attempt> = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let cell_dir = cells_dir.join(&cell.id);
        std::fs::create_dir_all(&cell_dir)
            .map_err(|e| CliError::Run(format!("creating {}: {e}", cell_dir.display())))?;
        let config = write_cell_config(cell, &cell_dir, &cell_corpora[i], 0, cell.train.lr_max)?;
        let (_, run_dir) = attempt_paths(&cell_dir, 0);
        pending.push(Attempt {
            cell_index: i,
            retry: 0,
            config,
            run_dir,
        });
    }

    let mut summaries: Vec<(String, RunSummary)> = Vec::with_capacity(cells.len());
    let backoff_enabled = plan.kind != CampaignKind::LrSweep;
    while !pending.is_empty() {
        let done = run_attempts(&pending, args.parallel, args.verbose)?;
        let mut retries: Vec<Attempt> = Vec::new();
        for (attempt, summary) in pending.iter().zip(done) {
            let cell = &cells[attempt.cell_index];
            let entry = &mut index.cells[attempt.cell_index];
            entry.status = summary.status.clone();
            entry.retries = attempt.retry;
            entry.config = rel_to(&campaign_dir, &attempt.config);
            entry.run = rel_to(&campaign_dir, &attempt.run_dir);
            let diverged = summary.status == RunStatus::Diverged.to_string();
            if diverged && backoff_enabled && attempt.retry < BACKOFF_MAX_RETRIES {
                let retry = attempt.retry + 1;
                let lr = entry.lr_max * BACKOFF_FACTOR;
                println!(
                    "cell {} diverged at lr_max={:.4e}; retrying at {:.4e} ({retry}/{BACKOFF_MAX_RETRIES})",
                    cell.id, entry.lr_max, lr,
                );
                entry.lr_max = lr;
                let cell_dir = cells_dir.join(&cell.id);
                let config = write_cell_config(
                    cell,
                    &cell_dir,
                    &cell_corpora[attempt.cell_index],
                    retry,
                    lr,
                )?;
                let (_, run_dir) = attempt_paths(&cell_dir, retry);
                retries.push(Attempt {
                    cell_index: attempt.cell_index,
                    retry,
                    config,
                    run_dir,
                });
            } else {
                summaries.push((cell.id.clone(), summary));
            }
        }
        pending = retries;
    }
    summaries.sort_by(|a, b| a.0.cmp(&b.0));
    index.save(&campaign_dir)?;

    let selection: Option<Selection> = match plan.kind {
        CampaignKind::LrSweep => {
            let sel = select_best_lrs(&plan.models, &plan.model, &index, &summaries);
            let text = serde_json::to_string_pretty(&sel).expect("selection serializes");
            std::fs::write(campaign_dir.join("selection.json"), text + "\n")
                .map_err(|e| CliError::Run(format!("writing selection: {e}")))?;
            Some(sel)
        }
        _ => None,
    };

    let report = render_campaign_report(&index, &summaries, selection.as_ref());
    std::fs::write(campaign_dir.join("report.txt"), &report)
        .map_err(|e| CliError::Run(format!("writing report: {e}")))?;
    print!("{report}");
    println!("campaign dir: {}", campaign_dir.display());
    Ok(0)
}
