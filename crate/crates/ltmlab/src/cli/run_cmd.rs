//! The `train` subcommand: one run, one directory.
//!
//! A run config is a TOML file with a corpus cache path and `[model]` /
//! `[train]` tables. The run directory receives the original config, the
//! JSON-lines log (one entry per evaluation, flushed as written), the
//! final and best checkpoints, and a `summary.json` the other subcommands
//! read back. Identical configs reproduce identical artifacts byte for
//! byte, wall-clock fields aside.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_cache, Corpus};
use crate::model::{Model, ModelConfig};
use crate::train::{run_identity, train, RunStatus, TrainConfig, TrainOutcome};
use crate::util::derive_seed;

use super::{cache_root, CliError, TrainArgs};

pub const SUMMARY_VERSION: &str = "ltmlab-summary v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Corpus cache written by `ingest`, relative to this config file
    /// (falls back to the cache root when set and the local path misses).
    pub corpus: PathBuf,
    /// Run directory; defaults to `runs/<run_id>` beside the config.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("run config {}: {e}", path.display())))?;
        let spec: RunSpec = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("run config {}: {e}", path.display())))?;
        spec.model
            .validate()
            .map_err(|e| CliError::Usage(format!("model config: {e}")))?;
        spec.train
            .validate()
            .map_err(|e| CliError::Usage(format!("train config: {e}")))?;
        Ok(spec)
    }
}

/// What a finished run leaves behind for campaign tooling: identity,
/// terminal status, per-metric minima, and the sizes that scaling fits
/// use as abscissae.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub run_id: String,
    pub config_hash: String,
    pub status: String,
    pub n_params: u64,
    pub n_train_points: u64,
    pub l_seq: usize,
    pub evals: usize,
    pub best_step: u64,
    pub min_mse: f64,
    pub min_crps: f64,
    pub min_nll: f64,
    pub final_compute: String,
    pub diagnostic: Option<String>,
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub fn load(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join("summary.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Run(format!("run summary {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Run(format!("run summary {}: {e}", path.display())))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Locates the corpus cache: beside the config first, then under the
/// cache root from the environment.
fn find_corpus(config_dir: &Path, spec_path: &Path) -> PathBuf {
    let local = resolve(config_dir, spec_path);
    if local.exists() || spec_path.is_absolute() {
        return local;
    }
    match cache_root() {
        Some(root) => {
            let fallback = root.join(spec_path);
            if fallback.exists() {
                fallback
            } else {
                local
            }
        }
        None => local,
    }
}

/// Runs one config end to end and returns its summary plus the process
/// exit code (0 for COMPLETED or EARLY_STOPPED, 1 for DIVERGED). Training
/// errors other than divergence surface as hard errors.
pub fn execute_run(config_path: &Path, verbose: bool) -> Result<(RunSummary, i32), CliError> {
    let spec = RunSpec::from_path(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let corpus_path = find_corpus(config_dir, &spec.corpus);
    let corpus: Corpus = load_cache(&corpus_path)
        .map_err(|e| CliError::Usage(format!("corpus cache {}: {e}", corpus_path.display())))?;

    let (run_id, _) = run_identity(&spec.train);
    let run_dir = match &spec.out {
        Some(out) => resolve(config_dir, out),
        None => config_dir.join("runs").join(&run_id),
    };
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| CliError::Run(format!("creating {}: {e}", run_dir.display())))?;
    let config_bytes = std::fs::read(config_path)
        .map_err(|e| CliError::Run(format!("reading {}: {e}", config_path.display())))?;
    std::fs::write(run_dir.join("config.toml"), config_bytes)
        .map_err(|e| CliError::Run(format!("writing config copy: {e}")))?;

    let mut model = Model::new(spec.model.clone(), derive_seed(spec.train.seed, "init"))
        .map_err(|e| CliError::Usage(format!("model config: {e}")))?;
    let n_train_points: u64 = corpus.train.iter().map(|s| s.real_len() as u64).sum();

    let log_path = run_dir.join("log.jsonl");
    let mut log = BufWriter::new(
        File::create(&log_path).map_err(|e| CliError::Run(format!("creating run log: {e}")))?,
    );
    let started = std::time::Instant::now();
    let outcome: TrainOutcome = train(&mut model, &corpus, &spec.train, |entry| {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        if verbose {
            println!("{line}");
        }
        writeln!(log, "{line}")?;
        // flush per entry so an interrupted run leaves a readable prefix
        log.flush()
    })
    .map_err(|e| CliError::Run(format!("training: {e}")))?;
    log.flush().map_err(|e| CliError::Run(format!("flushing run log: {e}")))?;

    model
        .save(&run_dir.join("model.ckpt"))
        .map_err(|e| CliError::Run(format!("saving final checkpoint: {e}")))?;
    if let Some(best) = &outcome.best {
        best.save(&run_dir.join("best.ckpt"))
            .map_err(|e| CliError::Run(format!("saving best checkpoint: {e}")))?;
    }

    let summary = RunSummary {
        version: SUMMARY_VERSION.into(),
        run_id: outcome.run_id.clone(),
        config_hash: outcome.config_hash.clone(),
        status: outcome.status.to_string(),
        n_params: model.num_parameters(),
        n_train_points,
        l_seq: corpus.l_seq,
        evals: outcome.entries.len(),
        best_step: outcome.best_step,
        min_mse: outcome.min_scores.mse,
        min_crps: outcome.min_scores.crps,
        min_nll: outcome.min_scores.nll,
        final_compute: outcome.final_compute.to_string(),
        diagnostic: outcome.diagnostic.clone(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(run_dir.join("summary.json"), text + "\n")
        .map_err(|e| CliError::Run(format!("writing summary: {e}")))?;

    println!(
        "run {} [{}] evals={} min_mse={:.6e} min_crps={:.6e} min_nll={:.6e} compute={}",
        summary.run_id,
        summary.status,
        summary.evals,
        summary.min_mse,
        summary.min_crps,
        summary.min_nll,
        summary.final_compute,
    );
    if let Some(diag) = &summary.diagnostic {
        println!("  {diag}");
    }
    println!("  run dir: {}", run_dir.display());

    let code = match outcome.status {
        RunStatus::Completed | RunStatus::EarlyStopped => 0,
        RunStatus::Diverged => 1,
    };
    Ok((summary, code))
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let (_, code) = execute_run(&args.config, args.verbose)?;
    Ok(code)
}
