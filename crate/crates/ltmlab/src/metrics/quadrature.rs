use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricError;

/// CRPS by direct integration of `(F(x) - 1{x >= y})^2` with adaptive
/// Simpson quadrature. The integrand is split at `y`, where it has a kink.
/// `lo`/`hi` must bracket essentially all probability mass; tail truncation
/// is the caller's responsibility.
pub fn crps_quadrature<F>(y: f64, cdf: F, lo: f64, hi: f64, tol: f64) -> Result<f64, MetricError>
where
    F: Fn(f64) -> f64,
{
    let mid = y.clamp(lo, hi);
    let mut forced = 0.0;
    let left = adaptive_simpson(&|x| cdf(x).powi(2), lo, mid, tol / 2.0, &mut forced);
    let right = adaptive_simpson(&|x| (1.0 - cdf(x)).powi(2), mid, hi, tol / 2.0, &mut forced);
    if forced > tol {
        return Err(MetricError::QuadratureDidNotConverge {
            requested: tol,
            achieved: forced,
        });
    }
    Ok(left + right)
}

/// CRPS of the location-scale Student's t by quadrature, with integration
/// bounds wide enough that the truncated tails contribute far less than
/// `tol`. Independent of the closed-form route.
pub fn crps_quadrature_studentt(
    y: f64,
    mu: f64,
    sigma: f64,
    nu: f64,
    tol: f64,
) -> Result<f64, MetricError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MetricError::BadScale(sigma));
    }
    if !(nu.is_finite() && nu > 1.0) {
        return Err(MetricError::CrpsDofTooSmall(nu));
    }
    let standard = StudentsT::new(0.0, 1.0, nu).expect("validated dof");
    // quantiles leave ~1e-8 mass outside; the squared tail integrand makes
    // the truncation error O(1e-16 * width), negligible against tol
    let q = standard.inverse_cdf(1e-8).abs();
    let lo = (mu - sigma * (q + 1.0)).min(y - sigma);
    let hi = (mu + sigma * (q + 1.0)).max(y + sigma);
    let cdf = move |x: f64| standard.cdf((x - mu) / sigma);
    crps_quadrature(y, cdf, lo, hi, tol)
}

/// One level of adaptive Simpson with Richardson correction. Intervals that
/// still disagree at the depth limit are accepted and their residual logged
/// into `forced`.
fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64, forced: &mut f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48, forced)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    forced: &mut f64,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 {
        if depth == 0 && delta.abs() > 15.0 * tol {
            *forced += delta.abs() / 15.0;
        }
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, forced)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, forced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{crps_normal, crps_studentt};
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn point_mass_cdf_gives_absolute_error() {
        // step CDF at 0 is a deterministic forecast of 0: CRPS = |y|
        let step = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
        let got = crps_quadrature(2.0, step, -50.0, 50.0, 1e-9).unwrap();
        assert_relative_eq!(got, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn standard_normal_at_median() {
        let n = Normal::new(0.0, 1.0).unwrap();
        let got = crps_quadrature(0.0, |x| n.cdf(x), -40.0, 40.0, 1e-8).unwrap();
        assert_relative_eq!(got, 0.23369497725510907, epsilon = 1e-6);
    }

    #[test]
    fn matches_normal_closed_form_off_median() {
        let n = Normal::new(1.0, 2.0).unwrap();
        for &y in &[-3.0, 0.5, 4.2] {
            let got = crps_quadrature(y, |x| n.cdf(x), 1.0 - 80.0, 1.0 + 80.0, 1e-8).unwrap();
            let want = crps_normal(y, 1.0, 2.0).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn studentt_wrapper_agrees_with_closed_form() {
        for &nu in &[1.5, 2.5, 7.0, 40.0] {
            for &y in &[-4.0, 0.0, 0.3, 6.0] {
                let q = crps_quadrature_studentt(y, 0.5, 1.5, nu, 1e-8).unwrap();
                let c = crps_studentt(y, 0.5, 1.5, nu).unwrap();
                assert_relative_eq!(q, c, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn wrapper_rejects_undefined_dof() {
        assert!(matches!(
            crps_quadrature_studentt(0.0, 0.0, 1.0, 1.0, 1e-6),
            Err(MetricError::CrpsDofTooSmall(_))
        ));
    }

    #[test]
    fn impossible_tolerance_reports_achieved_accuracy() {
        // tolerance below f64 resolution on a kinked integrand cannot be met
        let step = |x: f64| if x >= 0.33 { 1.0 } else { 0.0 };
        let err = crps_quadrature(5.0, step, -10.0, 10.0, 1e-18).unwrap_err();
        match err {
            MetricError::QuadratureDidNotConverge {
                requested,
                achieved,
            } => {
                assert_eq!(requested, 1e-18);
                assert!(achieved > requested);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
