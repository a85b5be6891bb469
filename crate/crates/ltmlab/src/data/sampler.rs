//! Window sampling for training and evaluation.
//!
//! Training batches draw series in proportion to their real length
//! (`p_i = t_i / T`) and then a uniformly random start offset, re-drawn on
//! every visit. Evaluation uses the deterministic non-overlapping window
//! grid instead, so repeated evaluations see identical data.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{DataError, PaddedSeries};
use crate::tensor::Tensor;
use crate::util::derive_seed;

/// One training or evaluation batch. All three tensors are
/// `[batch, l_seq]`; `mask` is 1.0 where the target is a real observation
/// and 0.0 where it falls inside the left padding.
pub struct WindowBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub mask: Tensor,
}

/// Length-proportional window sampler over a fixed slice of series.
pub struct Sampler<'a> {
    series: &'a [PaddedSeries],
    l_seq: usize,
    /// cumulative real lengths; the sampling measure
    prefix: Vec<u64>,
    total: u64,
    rng: ChaCha20Rng,
}

impl<'a> Sampler<'a> {
    pub fn new(series: &'a [PaddedSeries], l_seq: usize, seed: u64) -> Result<Self, DataError> {
        let mut prefix = Vec::with_capacity(series.len());
        let mut total = 0u64;
        for s in series {
            total += s.real_len() as u64;
            prefix.push(total);
        }
        if series.is_empty() || total == 0 {
            return Err(DataError::EmptyCorpus);
        }
        Ok(Self {
            series,
            l_seq,
            prefix,
            total,
            rng: ChaCha20Rng::seed_from_u64(derive_seed(seed, "sampler")),
        })
    }

    /// Draws (series index, window start). The series is chosen with
    /// probability `real_len / total`, the start uniformly over valid
    /// offsets; both are re-drawn on every call.
    pub fn draw(&mut self) -> (usize, usize) {
        let r = self.rng.random_range(0..self.total);
        let idx = self.prefix.partition_point(|&c| c <= r);
        let hi = self.series[idx].values.len() - (self.l_seq + 1);
        let start = if hi == 0 {
            0
        } else {
            self.rng.random_range(0..=hi)
        };
        (idx, start)
    }

    /// Assembles a training batch of `batch_size` windows.
    pub fn next_batch(&mut self, batch_size: usize) -> WindowBatch {
        let picks: Vec<(usize, usize)> = (0..batch_size).map(|_| self.draw()).collect();
        assemble_windows(self.series, &picks, self.l_seq)
    }
}

/// Builds the `[batch, l_seq]` input/target/mask tensors for explicit
/// (series index, start) picks.
pub fn assemble_windows(
    series: &[PaddedSeries],
    picks: &[(usize, usize)],
    l_seq: usize,
) -> WindowBatch {
    let b = picks.len();
    let mut inputs = vec![0.0; b * l_seq];
    let mut targets = vec![0.0; b * l_seq];
    let mut mask = vec![0.0; b * l_seq];
    for (row, &(idx, start)) in picks.iter().enumerate() {
        let s = &series[idx];
        for t in 0..l_seq {
            inputs[row * l_seq + t] = s.values[start + t];
            targets[row * l_seq + t] = s.values[start + t + 1];
            if start + t + 1 >= s.pad_len {
                mask[row * l_seq + t] = 1.0;
            }
        }
    }
    WindowBatch {
        inputs: Tensor::new(&[b, l_seq], inputs).expect("sized above"),
        targets: Tensor::new(&[b, l_seq], targets).expect("sized above"),
        mask: Tensor::new(&[b, l_seq], mask).expect("sized above"),
    }
}

/// The deterministic evaluation grid: non-overlapping windows at stride
/// `l_seq` from the start of each series, in corpus order.
pub fn eval_windows(series: &[PaddedSeries], l_seq: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (idx, s) in series.iter().enumerate() {
        let mut start = 0;
        while start + l_seq + 1 <= s.values.len() {
            out.push((idx, start));
            start += l_seq;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn padded(source: &str, id: &str, values: Vec<f64>, pad_len: usize) -> PaddedSeries {
        PaddedSeries {
            source: source.into(),
            id: id.into(),
            values,
            pad_len,
        }
    }

    fn ramp(len: usize) -> Vec<f64> {
        (0..len).map(|v| v as f64).collect()
    }

    #[test]
    fn pick_frequencies_match_length_proportions() {
        let series = vec![
            padded("a", "s100", ramp(100), 0),
            padded("a", "s300", ramp(300), 0),
            padded("a", "s600", ramp(600), 0),
        ];
        let mut sampler = Sampler::new(&series, 32, 4).unwrap();
        let draws = 100_000;
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            counts[sampler.draw().0] += 1;
        }
        for (i, p) in [0.1, 0.3, 0.6].into_iter().enumerate() {
            let freq = counts[i] as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (freq - p).abs() < 3.0 * sigma,
                "series {i}: frequency {freq} outside 3 sigma of {p}"
            );
        }
    }

    #[test]
    fn expected_visits_pass_chi_squared() {
        let lengths = [150usize, 250, 400, 700, 1200];
        let series: Vec<PaddedSeries> = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| padded("a", &format!("s{i}"), ramp(l), 0))
            .collect();
        let total: usize = lengths.iter().sum();
        let l_seq = 32;
        let draws = total / l_seq; // one expected epoch
        let mut sampler = Sampler::new(&series, l_seq, 11).unwrap();
        let mut counts = vec![0.0; lengths.len()];
        for _ in 0..draws {
            counts[sampler.draw().0] += 1.0;
        }
        let mut chi2 = 0.0;
        for (i, &l) in lengths.iter().enumerate() {
            let expected = draws as f64 * l as f64 / total as f64;
            chi2 += (counts[i] - expected).powi(2) / expected;
        }
        let dist = ChiSquared::new((lengths.len() - 1) as f64).unwrap();
        let p = 1.0 - dist.cdf(chi2);
        assert!(p > 0.001, "chi-squared p-value {p} too small (chi2 {chi2})");
    }

    #[test]
    fn single_series_is_always_picked() {
        let series = vec![padded("a", "only", ramp(64), 0)];
        let mut sampler = Sampler::new(&series, 16, 0).unwrap();
        for _ in 0..100 {
            assert_eq!(sampler.draw().0, 0);
        }
    }

    #[test]
    fn start_offsets_stay_in_bounds_and_cover_the_range() {
        let series = vec![padded("a", "s", ramp(100), 0)];
        let l_seq = 16;
        let mut sampler = Sampler::new(&series, l_seq, 2).unwrap();
        let hi = 100 - (l_seq + 1);
        let mut seen_low = false;
        let mut seen_high = false;
        for _ in 0..5_000 {
            let (_, start) = sampler.draw();
            assert!(start <= hi, "start {start} exceeds {hi}");
            if start < 5 {
                seen_low = true;
            }
            if start > hi - 5 {
                seen_high = true;
            }
        }
        assert!(seen_low && seen_high, "offsets do not cover the valid range");
    }

    #[test]
    fn batches_are_shifted_pairs_with_full_mask_on_real_series() {
        let series = vec![padded("a", "s", ramp(64), 0)];
        let mut sampler = Sampler::new(&series, 8, 3).unwrap();
        let batch = sampler.next_batch(4);
        assert_eq!(batch.inputs.shape(), &[4, 8]);
        for row in 0..4 {
            for t in 0..8 {
                let x = batch.inputs.data()[row * 8 + t];
                let y = batch.targets.data()[row * 8 + t];
                assert_eq!(y, x + 1.0, "target must be the next raw element");
                assert_eq!(batch.mask.data()[row * 8 + t], 1.0);
            }
        }
    }

    #[test]
    fn mask_excludes_padded_targets() {
        // real series [7, 8]; padded to length 5 for l_seq = 4
        let series = vec![padded("a", "s", vec![0.0, 0.0, 0.0, 7.0, 8.0], 3)];
        let batch = assemble_windows(&series, &[(0, 0)], 4);
        // targets are values[1..5]; real iff index >= 3
        assert_eq!(batch.mask.data(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(batch.targets.data(), &[0.0, 0.0, 7.0, 8.0]);
        assert_eq!(batch.inputs.data(), &[0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn sampler_is_deterministic_in_seed() {
        let series = vec![
            padded("a", "x", ramp(80), 0),
            padded("a", "y", ramp(120), 0),
        ];
        let mut s1 = Sampler::new(&series, 16, 77).unwrap();
        let mut s2 = Sampler::new(&series, 16, 77).unwrap();
        for _ in 0..200 {
            assert_eq!(s1.draw(), s2.draw());
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            Sampler::new(&[], 16, 0),
            Err(DataError::EmptyCorpus)
        ));
    }

    #[test]
    fn eval_grid_is_non_overlapping_and_exhaustive() {
        let series = vec![
            padded("a", "x", ramp(65), 0),  // exactly two 32-windows: starts 0, 32
            padded("a", "y", ramp(64), 0),  // one window
            padded("a", "z", ramp(33), 0),  // one window
        ];
        let grid = eval_windows(&series, 32);
        assert_eq!(grid, vec![(0, 0), (0, 32), (1, 0), (2, 0)]);
        // target ranges within one series never overlap
        assert!(grid.windows(2).all(|w| w[0].0 != w[1].0 || w[1].1 - w[0].1 >= 32));
    }
}
