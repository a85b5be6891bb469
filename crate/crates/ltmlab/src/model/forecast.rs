//! Autoregressive forecasting by sampling.
//!
//! Each trajectory extends the context one step at a time: the model reads
//! the trailing window (left-padded with zeros when history is shorter than
//! the window), and the next value is drawn from the predicted Student's-t
//! at the final position. All trajectories advance together so every step
//! costs one batched forward pass.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Model, ModelError};
use crate::tensor::Tensor;
use crate::util::derive_seed;

pub struct Forecast {
    /// Per-step mean across trajectories.
    pub mean: Vec<f64>,
    /// Per-step 16th percentile.
    pub lo: Vec<f64>,
    /// Per-step 84th percentile.
    pub hi: Vec<f64>,
    /// `n_samples` sampled continuations, each of length `horizon`.
    pub trajectories: Vec<Vec<f64>>,
}

pub fn forecast_rollout(
    model: &Model,
    context: &[f64],
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Forecast, ModelError> {
    if context.is_empty() {
        return Err(ModelError::EmptyContext);
    }
    if n_samples == 0 {
        return Err(ModelError::NoSamples);
    }
    let l = model.config().l_seq;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "forecast"));
    let mut histories: Vec<Vec<f64>> = vec![context.to_vec(); n_samples];
    let mut trajectories: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); n_samples];

    for _ in 0..horizon {
        let mut windows = vec![0.0; n_samples * l];
        for (s, history) in histories.iter().enumerate() {
            let take = history.len().min(l);
            let dst = &mut windows[s * l..(s + 1) * l];
            dst[l - take..].copy_from_slice(&history[history.len() - take..]);
        }
        let batch = Tensor::new(&[n_samples, l], windows).expect("window buffer sized above");
        let params = model.predict(&batch)?;
        for s in 0..n_samples {
            let at = s * l + (l - 1);
            let mu = params.mu.data()[at];
            let sigma = params.sigma.data()[at];
            let nu = params.nu.data()[at];
            let standard = StudentsT::new(0.0, 1.0, nu)
                .expect("head constraints keep nu above 2");
            // clamp keeps the quantile finite at the (measure-zero) endpoints
            let u: f64 = rng.random_range(0.0..1.0);
            let u = u.clamp(1e-12, 1.0 - 1e-12);
            let draw = mu + sigma * standard.inverse_cdf(u);
            histories[s].push(draw);
            trajectories[s].push(draw);
        }
    }

    let mut mean = Vec::with_capacity(horizon);
    let mut lo = Vec::with_capacity(horizon);
    let mut hi = Vec::with_capacity(horizon);
    let mut step_values = vec![0.0; n_samples];
    for t in 0..horizon {
        for s in 0..n_samples {
            step_values[s] = trajectories[s][t];
        }
        mean.push(step_values.iter().sum::<f64>() / n_samples as f64);
        step_values.sort_by(|a, b| a.total_cmp(b));
        lo.push(percentile(&step_values, 0.16));
        hi.push(percentile(&step_values, 0.84));
    }
    Ok(Forecast {
        mean,
        lo,
        hi,
        trajectories,
    })
}

/// Linear-interpolation percentile of an ascending slice, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let below = (pos.floor() as usize).min(sorted.len() - 2);
    let frac = pos - below as f64;
    sorted[below] * (1.0 - frac) + sorted[below + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small_model() -> Model {
        let config = ModelConfig {
            d_m: 4,
            n_heads: 2,
            n_layers: 1,
            l_seq: 8,
            theta_out: 3,
            head_hidden_layers: 2,
            pre_layer_norm: true,
        };
        Model::new(config, 17).unwrap()
    }

    #[test]
    fn zero_horizon_gives_empty_bands() {
        let f = forecast_rollout(&small_model(), &[1.0, 2.0], 0, 4, 9).unwrap();
        assert!(f.mean.is_empty());
        assert!(f.lo.is_empty());
        assert!(f.hi.is_empty());
        assert_eq!(f.trajectories.len(), 4);
        assert!(f.trajectories.iter().all(Vec::is_empty));
    }

    #[test]
    fn single_sample_bands_collapse_onto_the_trajectory() {
        let f = forecast_rollout(&small_model(), &[0.3, -0.4, 1.1], 6, 1, 5).unwrap();
        assert_eq!(f.mean, f.trajectories[0]);
        assert_eq!(f.lo, f.trajectories[0]);
        assert_eq!(f.hi, f.trajectories[0]);
    }

    #[test]
    fn shapes_and_band_ordering() {
        let f = forecast_rollout(&small_model(), &[0.5; 20], 5, 32, 1).unwrap();
        assert_eq!(f.trajectories.len(), 32);
        assert!(f.trajectories.iter().all(|t| t.len() == 5));
        assert_eq!(f.mean.len(), 5);
        for t in 0..5 {
            assert!(f.lo[t] <= f.hi[t], "band inverted at step {t}");
        }
    }

    #[test]
    fn rollout_is_deterministic_in_seed() {
        let model = small_model();
        let a = forecast_rollout(&model, &[1.0, -1.0], 4, 8, 42).unwrap();
        let b = forecast_rollout(&model, &[1.0, -1.0], 4, 8, 42).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        let c = forecast_rollout(&model, &[1.0, -1.0], 4, 8, 43).unwrap();
        assert_ne!(a.trajectories, c.trajectories, "seed must matter");
    }

    #[test]
    fn context_longer_than_window_uses_the_tail() {
        let model = small_model();
        let long: Vec<f64> = (0..30).map(|t| (t as f64 * 0.2).sin()).collect();
        // same tail, different ignored prefix: first draw must agree
        let mut other = vec![99.0; 7];
        other.extend_from_slice(&long[long.len() - 8..]);
        let a = forecast_rollout(&model, &long, 1, 3, 4).unwrap();
        let b = forecast_rollout(&model, &other, 1, 3, 4).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn input_validation() {
        let model = small_model();
        assert!(matches!(
            forecast_rollout(&model, &[], 3, 4, 0),
            Err(ModelError::EmptyContext)
        ));
        assert!(matches!(
            forecast_rollout(&model, &[1.0], 3, 0, 0),
            Err(ModelError::NoSamples)
        ));
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert!((percentile(&v, 0.16) - 1.64).abs() < 1e-12);
        assert!((percentile(&v, 0.84) - 4.36).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 0.16), 7.0);
    }
}
