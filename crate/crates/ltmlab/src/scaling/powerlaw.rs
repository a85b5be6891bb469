//! Log-log power-law fits, single and broken.
//!
//! The fitted family is L(A) = 10^(B0 * (log10_A0 - log10 A)): a straight
//! line in log-log space with slope -B0. Fitting runs ordinary (optionally
//! weighted) least squares on the log coordinates. The broken variant
//! searches every admissible observed abscissa as a break point, fits two
//! slopes that meet continuously there, and keeps the break only when it
//! buys a real residual improvement.

use super::ScalingError;

/// Minimum fractional RSS improvement a broken fit must deliver over the
/// single fit before the break becomes the headline law.
pub const BREAK_RSS_IMPROVEMENT: f64 = 0.05;

/// Single power law in the 10^(B0 * (log10_A0 - log10 A)) convention.
/// A downward slope in log-log space has B0 > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub b0: f64,
    pub log10_a0: f64,
    /// Residual sum of squares in (ln A, ln L) space.
    pub rss: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    /// The fitted loss at abscissa `a`, straight from the stored
    /// parameters.
    pub fn predict(&self, a: f64) -> f64 {
        10f64.powf(self.b0 * (self.log10_a0 - a.log10()))
    }

    /// Builds the public parameterization from the ln-space regression
    /// line y = slope * x + intercept.
    fn from_line(slope: f64, intercept: f64, rss: f64, n_points: usize) -> Result<Self, ScalingError> {
        let b0 = -slope;
        if b0 == 0.0 {
            return Err(ScalingError::Degenerate(
                "fitted line is exactly flat; the power-law form cannot represent it".into(),
            ));
        }
        Ok(PowerLawFit {
            b0,
            log10_a0: intercept / (b0 * std::f64::consts::LN_10),
            rss,
            n_points,
        })
    }
}

/// Two power-law segments meeting continuously at `a_break`. The post
/// segment is the reported headline law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenPowerLawFit {
    pub a_break: f64,
    pub pre: PowerLawFit,
    pub post: PowerLawFit,
    /// Total RSS of the two-segment model over all points.
    pub rss: f64,
}

/// Result of the break search: the single fit is always present, the
/// broken fit whenever enough points exist, and `break_is_headline` says
/// which one to report.
#[derive(Debug, Clone)]
pub struct BrokenFitOutcome {
    pub single: PowerLawFit,
    pub broken: Option<BrokenPowerLawFit>,
    pub break_is_headline: bool,
    /// 1 - broken RSS / single RSS; zero when no broken fit exists.
    pub rss_improvement: f64,
}

fn validated_logs(
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
    needed: usize,
) -> Result<(Vec<(f64, f64)>, Vec<f64>), ScalingError> {
    if points.len() < needed {
        return Err(ScalingError::TooFewPoints {
            needed,
            got: points.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != points.len() || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(ScalingError::BadWeights);
        }
    }
    let mut rows: Vec<((f64, f64), f64)> = Vec::with_capacity(points.len());
    for (i, &(a, l)) in points.iter().enumerate() {
        if !(a > 0.0 && l > 0.0) || !a.is_finite() || !l.is_finite() {
            return Err(ScalingError::NonPositivePoint { a, l });
        }
        rows.push(((a.ln(), l.ln()), weights.map_or(1.0, |w| w[i])));
    }
    // canonical order makes the fit bit-identical under input permutation
    rows.sort_by(|p, q| p.0 .0.total_cmp(&q.0 .0).then(p.0 .1.total_cmp(&q.0 .1)));
    Ok(rows.into_iter().unzip())
}

fn weighted_line(logs: &[(f64, f64)], weights: &[f64]) -> Result<(f64, f64, f64), ScalingError> {
    let sw: f64 = weights.iter().sum();
    let xb = logs.iter().zip(weights).map(|((x, _), w)| w * x).sum::<f64>() / sw;
    let yb = logs.iter().zip(weights).map(|((_, y), w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&(x, y), &w) in logs.iter().zip(weights) {
        sxx += w * (x - xb) * (x - xb);
        sxy += w * (x - xb) * (y - yb);
    }
    if sxx == 0.0 {
        return Err(ScalingError::Degenerate(
            "all abscissae coincide; slope is undetermined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let rss = logs
        .iter()
        .zip(weights)
        .map(|(&(x, y), &w)| {
            let r = y - (slope * x + intercept);
            w * r * r
        })
        .sum();
    Ok((slope, intercept, rss))
}

/// Least-squares power law through `points = [(A, L)]`, optionally
/// weighted. Residuals are measured in ln space.
pub fn fit_power_law(
    points: &[(f64, f64)],
    weights: Option<&[f64]>,
) -> Result<PowerLawFit, ScalingError> {
    let (logs, w) = validated_logs(points, weights, 2)?;
    let (slope, intercept, rss) = weighted_line(&logs, &w)?;
    PowerLawFit::from_line(slope, intercept, rss, points.len())
}

/// Solves the 3x3 system `m * x = rhs` by Gaussian elimination with
/// partial pivoting. Returns None when the system is singular.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut acc = rhs[col];
        for k in col + 1..3 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

/// Continuous two-segment least squares with the knee fixed at `xb`:
/// y = c + m1 (x - xb) left of the knee, y = c + m2 (x - xb) right of it.
/// Returns (c, m1, m2, rss).
fn fit_hinge(logs: &[(f64, f64)], xb: f64) -> Option<(f64, f64, f64, f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(x, y) in logs {
        let d = x - xb;
        let row = if x <= xb {
            [1.0, d, 0.0]
        } else {
            [1.0, 0.0, d]
        };
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    let [c, m1, m2] = solve3(ata, atb)?;
    let rss = logs
        .iter()
        .map(|&(x, y)| {
            let d = x - xb;
            let fitted = if x <= xb { c + m1 * d } else { c + m2 * d };
            let r = y - fitted;
            r * r
        })
        .sum();
    Some((c, m1, m2, rss))
}

/// Fits both the single power law and the best continuous broken power
/// law, with the break searched over observed abscissae (two endpoints
/// excluded on each side). Fewer than 6 points skips the break search.
/// The break becomes the headline only when it improves RSS by at least
/// [`BREAK_RSS_IMPROVEMENT`]; a near-perfect single fit always wins.
pub fn fit_broken_power_law(points: &[(f64, f64)]) -> Result<BrokenFitOutcome, ScalingError> {
    let single = fit_power_law(points, None)?;
    if points.len() < 6 {
        return Ok(BrokenFitOutcome {
            single,
            broken: None,
            break_is_headline: false,
            rss_improvement: 0.0,
        });
    }
    let (logs, _) = validated_logs(points, None, 6)?;
    let n = logs.len();
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    for i in 2..n - 2 {
        let xb = logs[i].0;
        if xb == logs[i - 1].0 {
            continue; // duplicate abscissa, same candidate
        }
        if let Some((c, m1, m2, rss)) = fit_hinge(&logs, xb) {
            if best.is_none_or(|(_, _, _, _, brss)| rss < brss) {
                best = Some((xb, c, m1, m2, rss));
            }
        }
    }
    let Some((xb, c, m1, m2, rss)) = best else {
        return Ok(BrokenFitOutcome {
            single,
            broken: None,
            break_is_headline: false,
            rss_improvement: 0.0,
        });
    };
    // per-segment views in the public parameterization; each line passes
    // through (xb, c), so its ln-space intercept is c - m * xb
    let seg = |m: f64, pts: usize, seg_rss: f64| {
        PowerLawFit::from_line(m, c - m * xb, seg_rss, pts)
    };
    let pre_count = logs.iter().filter(|&&(x, _)| x <= xb).count();
    let rss_of = |left: bool| {
        logs.iter()
            .filter(|&&(x, _)| (x <= xb) == left)
            .map(|&(x, y)| {
                let m = if left { m1 } else { m2 };
                let r = y - (c + m * (x - xb));
                r * r
            })
            .sum::<f64>()
    };
    let broken = BrokenPowerLawFit {
        a_break: xb.exp(),
        pre: seg(m1, pre_count, rss_of(true))?,
        post: seg(m2, n - pre_count, rss_of(false))?,
        rss,
    };
    // a single fit that is already numerically perfect leaves nothing for
    // a break to explain
    let improvement = if single.rss <= 1e-12 {
        0.0
    } else {
        1.0 - broken.rss / single.rss
    };
    Ok(BrokenFitOutcome {
        single,
        broken: Some(broken),
        break_is_headline: improvement >= BREAK_RSS_IMPROVEMENT,
        rss_improvement: improvement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn law_points(b0: f64, log10_a0: f64, log10_as: &[f64]) -> Vec<(f64, f64)> {
        log10_as
            .iter()
            .map(|&x| (10f64.powf(x), 10f64.powf(b0 * (log10_a0 - x))))
            .collect()
    }

    #[test]
    fn recovers_published_constants_from_noiseless_points() {
        let xs: Vec<f64> = (0..9).map(|i| 3.0 + 0.5 * i as f64).collect();
        let points = law_points(0.042, -19.47, &xs);
        let fit = fit_power_law(&points, None).unwrap();
        assert!((fit.b0 - 0.042).abs() < 1e-9, "B0 {}", fit.b0);
        assert!((fit.log10_a0 + 19.47).abs() < 1e-9, "log10_A0 {}", fit.log10_a0);
        assert!(fit.rss < 1e-18);
        assert_eq!(fit.n_points, 9);

        // prediction straight from the stored parameters
        let at_1e6 = fit.predict(1e6);
        assert_relative_eq!(at_1e6, 10f64.powf(0.042 * (-19.47 - 6.0)), max_relative = 1e-9);
        assert!((at_1e6 - 0.0851).abs() < 5e-4);
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let points = [(1e3, 2.0), (1e5, 0.5)];
        let fit = fit_power_law(&points, None).unwrap();
        assert!(fit.rss < 1e-28);
        for &(a, l) in &points {
            assert_relative_eq!(fit.predict(a), l, max_relative = 1e-12);
        }
    }

    #[test]
    fn matches_normal_equations_oracle() {
        // uncentered Cramer solve as an independent route
        let points: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let x = 2.0 + 0.4 * i as f64;
                let y = -0.3 * x + 1.7 + 0.05 * (i as f64 * 2.3).sin();
                (10f64.powf(x), 10f64.powf(y))
            })
            .collect();
        let (n, mut sx, mut sy, mut sxx, mut sxy) = (points.len() as f64, 0.0, 0.0, 0.0, 0.0);
        for &(a, l) in &points {
            let (x, y) = (a.ln(), l.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / det;
        let intercept = (sxx * sy - sx * sxy) / det;

        let fit = fit_power_law(&points, None).unwrap();
        assert_relative_eq!(-fit.b0, slope, max_relative = 1e-10);
        assert_relative_eq!(
            fit.log10_a0 * fit.b0 * std::f64::consts::LN_10,
            intercept,
            max_relative = 1e-10
        );
    }

    #[test]
    fn weight_two_equals_duplicated_point() {
        let base = [(1e3, 1.0), (1e4, 0.6), (1e5, 0.2)];
        let weighted = fit_power_law(&base, Some(&[1.0, 2.0, 1.0])).unwrap();
        let doubled = [(1e3, 1.0), (1e4, 0.6), (1e4, 0.6), (1e5, 0.2)];
        let duplicated = fit_power_law(&doubled, None).unwrap();
        assert_relative_eq!(weighted.b0, duplicated.b0, max_relative = 1e-12);
        assert_relative_eq!(weighted.log10_a0, duplicated.log10_a0, max_relative = 1e-12);
    }

    #[test]
    fn permutation_of_points_is_bit_identical() {
        let points = [(1e3, 1.1), (1e4, 0.63), (1e5, 0.21), (1e6, 0.11)];
        let mut reversed = points;
        reversed.reverse();
        let a = fit_power_law(&points, None).unwrap();
        let b = fit_power_law(&reversed, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            fit_power_law(&[(1e3, 1.0)], None),
            Err(ScalingError::TooFewPoints { needed: 2, got: 1 })
        ));
        assert!(matches!(
            fit_power_law(&[(1e3, 1.0), (-2.0, 0.5)], None),
            Err(ScalingError::NonPositivePoint { .. })
        ));
        assert!(matches!(
            fit_power_law(&[(1e3, 0.0), (1e4, 0.5)], None),
            Err(ScalingError::NonPositivePoint { .. })
        ));
        assert!(matches!(
            fit_power_law(&[(1e3, 1.0), (1e4, 0.5)], Some(&[1.0])),
            Err(ScalingError::BadWeights)
        ));
        assert!(matches!(
            fit_power_law(&[(1e3, 1.0), (1e4, 0.5)], Some(&[1.0, -1.0])),
            Err(ScalingError::BadWeights)
        ));
        assert!(matches!(
            fit_power_law(&[(1e3, 1.0), (1e3, 0.5)], None),
            Err(ScalingError::Degenerate(_))
        ));
    }

    fn two_slope_points(s_pre: f64, s_post: f64, xb: f64, xs: &[f64]) -> Vec<(f64, f64)> {
        let yb = -1.0;
        xs.iter()
            .map(|&x| {
                let s = if x <= xb { s_pre } else { s_post };
                (10f64.powf(x), 10f64.powf(yb + s * (x - xb)))
            })
            .collect()
    }

    #[test]
    fn break_search_recovers_a_synthetic_knee() {
        let xs: Vec<f64> = (0..17).map(|i| 3.0 + 0.25 * i as f64).collect();
        // log10-log10 slopes are -B0, so B0 goes 0.01 -> 0.05 at A = 1e5
        let points = two_slope_points(-0.01, -0.05, 5.0, &xs);
        let outcome = fit_broken_power_law(&points).unwrap();
        let broken = outcome.broken.expect("break search ran");
        assert!(
            (broken.a_break.log10() - 5.0).abs() < 1e-12,
            "break at {}",
            broken.a_break
        );
        assert!((broken.pre.b0 - 0.01).abs() < 1e-6, "pre slope {}", broken.pre.b0);
        assert!((broken.post.b0 - 0.05).abs() < 1e-6, "post slope {}", broken.post.b0);
        assert!(outcome.break_is_headline);
        assert!(outcome.rss_improvement > BREAK_RSS_IMPROVEMENT);
        // the two segments meet at the break
        assert_relative_eq!(
            broken.pre.predict(broken.a_break),
            broken.post.predict(broken.a_break),
            max_relative = 1e-9
        );
    }

    #[test]
    fn pure_power_law_is_flagged_no_break() {
        // noiseless single law: the single fit is already perfect
        let xs: Vec<f64> = (0..10).map(|i| 3.0 + 0.4 * i as f64).collect();
        let clean = law_points(0.03, -15.0, &xs);
        let outcome = fit_broken_power_law(&clean).unwrap();
        assert!(!outcome.break_is_headline);
        assert_eq!(outcome.rss_improvement, 0.0);

        // alternating jitter that no two-segment line can absorb
        let noisy: Vec<(f64, f64)> = clean
            .iter()
            .enumerate()
            .map(|(i, &(a, l))| (a, l * (1.0 + if i % 2 == 0 { 1e-3 } else { -1e-3 })))
            .collect();
        let outcome = fit_broken_power_law(&noisy).unwrap();
        assert!(!outcome.break_is_headline);
        assert!(
            outcome.rss_improvement < 0.01,
            "improvement {}",
            outcome.rss_improvement
        );
    }

    #[test]
    fn five_points_fall_back_to_single_fit() {
        let xs = [3.0, 3.5, 4.0, 4.5, 5.0];
        let outcome = fit_broken_power_law(&two_slope_points(-0.01, -0.05, 4.0, &xs)).unwrap();
        assert!(outcome.broken.is_none());
        assert!(!outcome.break_is_headline);
    }

    proptest! {
        #[test]
        fn broken_rss_never_exceeds_single_rss(
            ys in proptest::collection::vec(-2.0f64..2.0, 8..20)
        ) {
            let points: Vec<(f64, f64)> = ys
                .iter()
                .enumerate()
                .map(|(i, &y)| (10f64.powf(3.0 + 0.3 * i as f64), 10f64.powf(y)))
                .collect();
            let outcome = fit_broken_power_law(&points);
            prop_assume!(outcome.is_ok());
            let outcome = outcome.unwrap();
            if let Some(broken) = outcome.broken {
                // the single line is inside the broken family
                prop_assert!(broken.rss <= outcome.single.rss * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}
