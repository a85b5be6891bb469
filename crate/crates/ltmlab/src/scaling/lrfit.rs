//! Offset power-law fit for the optimal learning rate as a function of
//! model size: lr*(N) = a * N^(-b) + c.
//!
//! For a fixed offset c the model is log-linear in (ln N, ln(lr - c)), so
//! the outer problem is one-dimensional: golden-section search over c,
//! scoring each candidate by the inner linear fit's log-space residual.

use super::ScalingError;

const GOLDEN_MAX_ITERS: usize = 300;
const INVPHI: f64 = 0.618_033_988_749_894_9;

/// lr*(N) = a * N^(-b) + c with a, b > 0 and c >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetPowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Log-space residual sum of squares of the inner fit at the chosen c.
    pub rss: f64,
    pub n_points: usize,
}

impl OffsetPowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.a * n.powf(-self.b) + self.c
    }
}

/// Linear fit of ln(lr - c) against ln N. Returns (ln a, -b, rss), or
/// None when c swallows one of the learning rates.
fn inner_fit(points: &[(f64, f64)], c: f64) -> Option<(f64, f64, f64)> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, lr) in points {
        let shifted = lr - c;
        if shifted <= 0.0 {
            return None;
        }
        xs.push(n.ln());
        ys.push(shifted.ln());
    }
    let len = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / len;
    let yb = ys.iter().sum::<f64>() / len;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - xb) * (x - xb);
        sxy += (x - xb) * (y - yb);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let rss = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Some((intercept, slope, rss))
}

/// Fits lr*(N) = a * N^(-b) + c to `points = [(N, lr)]` by minimizing the
/// inner log-linear residual over c in [0, min lr). Needs at least 4
/// points so the three parameters are overdetermined.
pub fn fit_optimal_lr(points: &[(f64, f64)]) -> Result<OffsetPowerLawFit, ScalingError> {
    if points.len() < 4 {
        return Err(ScalingError::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    for &(n, lr) in points {
        if !(n > 0.0 && lr > 0.0) || !n.is_finite() || !lr.is_finite() {
            return Err(ScalingError::NonPositivePoint { a: n, l: lr });
        }
    }
    let mut points: Vec<(f64, f64)> = points.to_vec();
    points.sort_by(|p, q| p.0.total_cmp(&q.0));
    let min_lr = points.iter().map(|&(_, lr)| lr).fold(f64::INFINITY, f64::min);

    // infinite inner RSS when c swallows a point keeps the search inside
    // the feasible region
    let score = |c: f64| inner_fit(&points, c).map_or(f64::INFINITY, |(_, _, rss)| rss);

    let mut lo = 0.0f64;
    let mut hi = min_lr * (1.0 - 1e-12);
    let tol = 1e-14 * min_lr;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = score(x1);
    let mut f2 = score(x2);
    for _ in 0..GOLDEN_MAX_ITERS {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = score(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = score(x2);
        }
    }
    if hi - lo > tol.max(1e-9 * min_lr) {
        return Err(ScalingError::NoConvergence(format!(
            "offset bracket still {:.3e} wide after {GOLDEN_MAX_ITERS} iterations",
            hi - lo
        )));
    }
    // candidates at and around the final bracket; c = 0 handled exactly
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for c in [0.0, lo, 0.5 * (lo + hi), hi] {
        if let Some((intercept, slope, rss)) = inner_fit(&points, c) {
            if best.is_none_or(|(_, _, _, brss)| rss < brss) {
                best = Some((c, intercept, slope, rss));
            }
        }
    }
    let (c, intercept, slope, rss) =
        best.ok_or_else(|| ScalingError::Degenerate("no feasible offset found".into()))?;
    let fit = OffsetPowerLawFit {
        a: intercept.exp(),
        b: -slope,
        c,
        rss,
        n_points: points.len(),
    };
    if !(fit.a > 0.0) || !(fit.b > 0.0) {
        return Err(ScalingError::Degenerate(format!(
            "offset power law requires positive a and b, fitted a = {:.3e}, b = {:.3e}",
            fit.a, fit.b
        )));
    }
    Ok(fit)
}
