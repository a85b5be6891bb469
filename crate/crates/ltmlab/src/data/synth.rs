//! Synthetic corpus: ten sources drawn from four process families (AR(2),
//! sinusoid mixtures, random walks, heavy-tailed bursts), each holding an
//! equal tenth of the requested points so the balance rule is satisfied by
//! construction. Every series has its own seeded generator, so the corpus
//! is bit-identical for a given (total, seed) regardless of how much of it
//! a caller consumes.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StudentT};

use super::Series;
use crate::util::derive_seed_indexed;

const MIN_LEN: usize = 100;
const MAX_LEN: usize = 1100;

#[derive(Clone, Copy)]
enum Family {
    /// x_t = a1 x_{t-1} + a2 x_{t-2} + sigma N(0,1)
    Ar2 { a1: f64, a2: f64, sigma: f64 },
    /// sum of `k_min..=k_max` random sinusoids plus noise and per-series drift
    Sines {
        k_min: usize,
        k_max: usize,
        noise: f64,
        max_drift: f64,
    },
    /// x_t = x_{t-1} + N(drift, 1), drift drawn per series
    Walk { max_drift: f64 },
    /// x_t = rho x_{t-1} + sigma N(0,1) + bursts of scaled Student's-t draws
    Bursts {
        rho: f64,
        sigma: f64,
        burst_prob: f64,
        burst_scale: f64,
        nu: f64,
    },
}

/// (source name, generator); shares are equal so each source holds 10%.
const SOURCES: [(&str, Family); 10] = [
    ("ar2-oscillatory", Family::Ar2 { a1: 1.5, a2: -0.9, sigma: 1.0 }),
    ("ar2-persistent", Family::Ar2 { a1: 1.2, a2: -0.3, sigma: 1.0 }),
    ("ar2-noisy", Family::Ar2 { a1: 0.4, a2: 0.25, sigma: 1.0 }),
    ("sin-clean", Family::Sines { k_min: 1, k_max: 3, noise: 0.1, max_drift: 0.0 }),
    ("sin-mix", Family::Sines { k_min: 3, k_max: 6, noise: 0.3, max_drift: 0.0 }),
    ("sin-drift", Family::Sines { k_min: 2, k_max: 4, noise: 0.2, max_drift: 0.02 }),
    ("walk-plain", Family::Walk { max_drift: 0.0 }),
    ("walk-drift", Family::Walk { max_drift: 0.1 }),
    ("burst-sparse", Family::Bursts { rho: 0.8, sigma: 1.0, burst_prob: 0.03, burst_scale: 3.0, nu: 3.0 }),
    ("burst-heavy", Family::Bursts { rho: 0.6, sigma: 0.0, burst_prob: 1.0, burst_scale: 0.5, nu: 2.5 }),
];

/// Generates exactly `total_points` points spread evenly over the ten
/// sources. Series lengths are uniform in `[100, 1100)`; the last series of
/// each source is truncated so per-source budgets are hit exactly.
pub fn synth_corpus(total_points: u64, seed: u64) -> Vec<Series> {
    let n_sources = SOURCES.len() as u64;
    let mut corpus = Vec::new();
    for (si, (name, family)) in SOURCES.iter().enumerate() {
        let mut budget = total_points / n_sources
            + if (si as u64) < total_points % n_sources { 1 } else { 0 };
        let mut idx = 0u64;
        while budget > 0 {
            let mut rng =
                ChaCha20Rng::seed_from_u64(derive_seed_indexed(seed, &format!("synth:{name}"), idx));
            let drawn = rng.random_range(MIN_LEN..MAX_LEN) as u64;
            let len = drawn.min(budget) as usize;
            corpus.push(Series {
                source: (*name).into(),
                id: format!("{name}-{idx:04}"),
                values: generate(*family, len, &mut rng),
            });
            budget -= len as u64;
            idx += 1;
        }
    }
    corpus
}

fn generate(family: Family, len: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(len);
    match family {
        Family::Ar2 { a1, a2, sigma } => {
            let mut prev2 = standard.sample(rng);
            let mut prev = standard.sample(rng);
            for _ in 0..len {
                let x = a1 * prev + a2 * prev2 + sigma * standard.sample(rng);
                out.push(x);
                prev2 = prev;
                prev = x;
            }
        }
        Family::Sines { k_min, k_max, noise, max_drift } => {
            let k = rng.random_range(k_min..=k_max);
            let components: Vec<(f64, f64, f64)> = (0..k)
                .map(|_| {
                    (
                        rng.random_range(0.5..2.0),   // amplitude
                        rng.random_range(0.02..1.5),  // angular frequency
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let drift = if max_drift > 0.0 {
                rng.random_range(-max_drift..max_drift)
            } else {
                0.0
            };
            for t in 0..len {
                let mut x = drift * t as f64 + noise * standard.sample(rng);
                for &(amp, freq, phase) in &components {
                    x += amp * (freq * t as f64 + phase).sin();
                }
                out.push(x);
            }
        }
        Family::Walk { max_drift } => {
            let drift = if max_drift > 0.0 {
                rng.random_range(-max_drift..max_drift)
            } else {
                0.0
            };
            let mut x = 0.0;
            for _ in 0..len {
                x += drift + standard.sample(rng);
                out.push(x);
            }
        }
        Family::Bursts { rho, sigma, burst_prob, burst_scale, nu } => {
            let tales = StudentT::new(nu).expect("nu above zero");
            let mut x = 0.0;
            for _ in 0..len {
                x = rho * x + sigma * standard.sample(rng);
                if rng.random_range(0.0..1.0) < burst_prob {
                    x += burst_scale * tales.sample(rng);
                }
                out.push(x);
            }
        }
    }
    out
}
