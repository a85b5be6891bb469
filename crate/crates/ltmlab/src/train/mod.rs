//! The training loop: AdamW over the masked Student's-t NLL, linear
//! warmup with cosine decay, periodic subsampled evaluation on the test
//! split, early stopping, divergence detection, compute accounting, and
//! run-log emission.

mod adamw;

pub use adamw::AdamW;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{assemble_windows, eval_windows, Corpus, DataError, PaddedSeries, Sampler};
use crate::metrics::{crps_studentt, nll_loss, studentt_logpdf, MetricError, ScoreTriple};
use crate::model::{Model, ModelError};
use crate::tensor::{Tape, TensorError};
use crate::util::{derive_seed, fnv1a64, hex64};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("step {step} is outside the schedule range 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("gradient for parameter {name} is not finite")]
    BadGradient { name: String },
    #[error("test corpus has no evaluation windows")]
    EmptyTestSet,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything one run needs beyond the model and the corpus. Defaults
/// reproduce the full-scale protocol; smaller studies override the step
/// budget and batch size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_warmup_steps")]
    pub warmup_steps: u64,
    pub lr_max: f64,
    /// Cosine floor as a fraction of `lr_max`; 0 decays to zero.
    #[serde(default)]
    pub lr_min_fraction: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Fraction of test windows scored per evaluation.
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    /// Evaluations without a new best test NLL before stopping; 0 disables
    /// early stopping.
    #[serde(default)]
    pub early_stop_patience: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Global gradient-norm ceiling; absent means no clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_batch_size() -> usize {
    512
}
fn default_total_steps() -> u64 {
    100_000
}
fn default_warmup_steps() -> u64 {
    3000
}
fn default_eval_every() -> u64 {
    200
}
fn default_eval_fraction() -> f64 {
    0.10
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    /// All defaults with the one field that has no sane default.
    pub fn with_lr(lr_max: f64) -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            total_steps: default_total_steps(),
            warmup_steps: default_warmup_steps(),
            lr_max,
            lr_min_fraction: 0.0,
            eval_every: default_eval_every(),
            eval_fraction: default_eval_fraction(),
            early_stop_patience: 0,
            seed: 0,
            weight_decay: 0.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            grad_clip: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.total_steps == 0 {
            return fail("total_steps must be at least 1".into());
        }
        if self.warmup_steps >= self.total_steps {
            return fail(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return fail(format!("lr_max must be positive, got {}", self.lr_max));
        }
        if !(0.0..1.0).contains(&self.lr_min_fraction) {
            return fail(format!(
                "lr_min_fraction must be in [0, 1), got {}",
                self.lr_min_fraction
            ));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction <= 1.0) {
            return fail(format!(
                "eval_fraction must be in (0, 1], got {}",
                self.eval_fraction
            ));
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return fail(format!("{name} must be in [0, 1), got {beta}"));
            }
        }
        if !(self.eps > 0.0) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Stable hash of the full configuration, stamped on every log line.
    pub fn hash(&self) -> String {
        let encoded = serde_json::to_string(self).expect("config serializes");
        hex64(fnv1a64(encoded.as_bytes()))
    }
}

/// `(run_id, config_hash)` as stamped on every log entry. Both depend only
/// on the config, so callers can lay out run directories before training.
pub fn run_identity(cfg: &TrainConfig) -> (String, String) {
    let config_hash = cfg.hash();
    let run_id = hex64(derive_seed(cfg.seed, &format!("run:{config_hash}")));
    (run_id, config_hash)
}

/// Learning rate at `step`: linear ramp to `lr_max` over the warmup, then
/// half-cosine decay to `lr_min_fraction * lr_max` at `total_steps`. The
/// two branches agree at the warmup boundary and the decay midpoint lands
/// exactly halfway between ceiling and floor.
pub fn lr_at_step(cfg: &TrainConfig, step: u64) -> Result<f64, TrainError> {
    if step > cfg.total_steps {
        return Err(TrainError::StepOutOfRange {
            step,
            total: cfg.total_steps,
        });
    }
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        return Ok(cfg.lr_max * step as f64 / cfg.warmup_steps as f64);
    }
    let lr_min = cfg.lr_min_fraction * cfg.lr_max;
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    Ok(lr_min + (cfg.lr_max - lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Cumulative training compute after `step` optimizer steps, using the
/// 6 * batch * params * window cost model per step. Exact integer
/// arithmetic; `u128` keeps every realistic configuration far from
/// overflow.
pub fn compute_at_step(batch_size: u64, n_params: u64, l_seq: u64, step: u64) -> u128 {
    6u128 * batch_size as u128 * n_params as u128 * l_seq as u128 * step as u128
}

/// Terminal state of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    EarlyStopped,
    Diverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunStatus::Completed => "COMPLETED",
            RunStatus::EarlyStopped => "EARLY_STOPPED",
            RunStatus::Diverged => "DIVERGED",
        };
        f.write_str(s)
    }
}

/// One evaluation record, appended to the run log as a JSON line.
/// `compute` is the cumulative figure as a decimal string so 128-bit
/// totals survive JSON readers that only do f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub run_id: String,
    pub config_hash: String,
    pub step: u64,
    pub lr: f64,
    pub train_nll: f64,
    pub test_mse: f64,
    pub test_crps: f64,
    pub test_nll: f64,
    /// Reported variant: `test_nll` shifted by the constant 2.
    pub test_nll_plus2: f64,
    pub compute: String,
    pub wall_clock_s: f64,
}

/// What a finished run hands back: the log, the terminal status, the
/// best-test-NLL checkpoint, and the per-metric minima across all
/// evaluations.
#[derive(Debug)]
pub struct TrainOutcome {
    pub status: RunStatus,
    pub entries: Vec<RunLogEntry>,
    /// Parameters as of the evaluation with the lowest test NLL.
    pub best: Option<Model>,
    pub best_step: u64,
    /// Independent minima over all evaluations, one per metric.
    pub min_scores: ScoreTriple,
    pub final_compute: u128,
    pub run_id: String,
    pub config_hash: String,
    /// Human-readable cause when the run did not complete.
    pub diagnostic: Option<String>,
}

/// Scores a model on the deterministic non-overlapping window grid of the
/// test split, subsampled to `eval_fraction` of the windows. Positions
/// whose target lies in left padding are excluded.
pub fn evaluate(
    model: &Model,
    test: &[PaddedSeries],
    l_seq: usize,
    eval_fraction: f64,
    rng: &mut ChaCha20Rng,
) -> Result<ScoreTriple, TrainError> {
    let mut grid = eval_windows(test, l_seq);
    if grid.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let chosen: Vec<(usize, usize)> = if eval_fraction >= 1.0 {
        grid
    } else {
        let amount = ((grid.len() as f64 * eval_fraction).ceil() as usize).clamp(1, grid.len());
        let (sample, _) = grid.partial_shuffle(rng, amount);
        sample.to_vec()
    };
    let mut sums = [0.0f64; 3];
    let mut count = 0.0f64;
    // chunked so evaluation memory stays bounded regardless of grid size
    for picks in chosen.chunks(64) {
        let wb = assemble_windows(test, picks, l_seq);
        let out = model.predict(&wb.inputs)?;
        let (mu, sigma, nu) = (out.mu.data(), out.sigma.data(), out.nu.data());
        let (targets, mask) = (wb.targets.data(), wb.mask.data());
        for i in 0..targets.len() {
            if mask[i] <= 0.0 {
                continue;
            }
            let d = mu[i] - targets[i];
            sums[0] += d * d;
            sums[1] += crps_studentt(targets[i], mu[i], sigma[i], nu[i])?;
            sums[2] -= studentt_logpdf(targets[i], mu[i], sigma[i], nu[i])?;
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(TrainError::EmptyTestSet);
    }
    Ok(ScoreTriple {
        mse: sums[0] / count,
        crps: sums[1] / count,
        nll: sums[2] / count,
    })
}

/// Runs the full training loop, invoking `on_eval` with each log entry as
/// it is produced (an error from the observer aborts the run). The model
/// is updated in place; the returned outcome additionally carries the
/// best-evaluation snapshot.
///
/// Divergence policy: a non-finite train NLL or gradient halts the run
/// immediately; a train NLL above ten times the magnitude of the initial
/// one for three consecutive evaluations does the same. Both mark the run
/// DIVERGED rather than erroring, so sweeps over aggressive learning
/// rates keep going.
pub fn train<F>(
    model: &mut Model,
    corpus: &Corpus,
    cfg: &TrainConfig,
    mut on_eval: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&RunLogEntry) -> std::io::Result<()>,
{
    cfg.validate()?;
    if model.config().l_seq != corpus.l_seq {
        return Err(TrainError::InvalidConfig(format!(
            "model window length {} does not match corpus window length {}",
            model.config().l_seq,
            corpus.l_seq
        )));
    }
    let (run_id, config_hash) = run_identity(cfg);
    let n_params = model.num_parameters();
    let mut sampler = Sampler::new(&corpus.train, corpus.l_seq, cfg.seed)?;
    let mut eval_rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "eval"));
    let mut opt = AdamW::new(model, cfg);
    let started = Instant::now();

    let mut entries: Vec<RunLogEntry> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut diagnostic = None;
    let mut initial_nll: Option<f64> = None;
    let mut blowup_streak = 0u32;
    let mut best_nll = f64::INFINITY;
    let mut best_step = 0u64;
    let mut best_params: Option<Model> = None;
    let mut min_scores = ScoreTriple {
        mse: f64::INFINITY,
        crps: f64::INFINITY,
        nll: f64::INFINITY,
    };
    let mut evals_since_best = 0u64;
    let mut last_step = 0u64;

    for step in 1..=cfg.total_steps {
        last_step = step;
        let lr = lr_at_step(cfg, step)?;
        let batch = sampler.next_batch(cfg.batch_size);

        let mut tape = Tape::new();
        let tp = model.register(&mut tape, true);
        let out = model.forward(&mut tape, &tp, &batch.inputs)?;
        let loss = nll_loss(&mut tape, out.mu, out.sigma, out.nu, &batch.targets, &batch.mask)?;
        let train_nll = tape.item(loss);
        if initial_nll.is_none() {
            initial_nll = Some(train_nll);
        }
        if !train_nll.is_finite() {
            status = RunStatus::Diverged;
            diagnostic = Some(format!("train NLL became non-finite at step {step}"));
            break;
        }
        tape.backward(loss)?;
        let grads: Vec<Option<&[f64]>> = tp.vars().iter().map(|v| tape.grad(*v)).collect();
        if let Err(err) = opt.step(model, &grads, lr) {
            match err {
                TrainError::BadGradient { name } => {
                    status = RunStatus::Diverged;
                    diagnostic = Some(format!("non-finite gradient for {name} at step {step}"));
                    break;
                }
                other => return Err(other),
            }
        }
        drop(tape);

        if step % cfg.eval_every != 0 && step != cfg.total_steps {
            continue;
        }
        let scores = evaluate(model, &corpus.test, corpus.l_seq, cfg.eval_fraction, &mut eval_rng)?;
        let entry = RunLogEntry {
            run_id: run_id.clone(),
            config_hash: config_hash.clone(),
            step,
            lr,
            train_nll,
            test_mse: scores.mse,
            test_crps: scores.crps,
            test_nll: scores.nll,
            test_nll_plus2: scores.nll + 2.0,
            compute: compute_at_step(cfg.batch_size as u64, n_params, corpus.l_seq as u64, step)
                .to_string(),
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        on_eval(&entry)?;
        entries.push(entry);

        min_scores.mse = min_scores.mse.min(scores.mse);
        min_scores.crps = min_scores.crps.min(scores.crps);
        min_scores.nll = min_scores.nll.min(scores.nll);

        // blowup rule: scale by magnitude so a negative initial NLL (dense
        // predictive densities) still yields a meaningful ceiling
        let ceiling = 10.0 * initial_nll.expect("set on first step").abs();
        if train_nll > ceiling {
            blowup_streak += 1;
            if blowup_streak >= 3 {
                status = RunStatus::Diverged;
                diagnostic = Some(format!(
                    "train NLL above {ceiling:.3} for 3 consecutive evaluations at step {step}"
                ));
                break;
            }
        } else {
            blowup_streak = 0;
        }

        if scores.nll < best_nll {
            best_nll = scores.nll;
            best_step = step;
            best_params = Some(model.clone());
            evals_since_best = 0;
        } else {
            evals_since_best += 1;
            if cfg.early_stop_patience > 0 && evals_since_best >= cfg.early_stop_patience {
                status = RunStatus::EarlyStopped;
                diagnostic = Some(format!(
                    "no test NLL improvement for {} evaluations",
                    cfg.early_stop_patience
                ));
                break;
            }
        }
    }

    Ok(TrainOutcome {
        status,
        entries,
        best: best_params,
        best_step,
        min_scores,
        final_compute: compute_at_step(
            cfg.batch_size as u64,
            n_params,
            corpus.l_seq as u64,
            last_step,
        ),
        run_id,
        config_hash,
        diagnostic,
    })
}
