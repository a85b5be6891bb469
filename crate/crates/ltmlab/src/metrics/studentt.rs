use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use super::MetricError;

fn check_scale_dof(sigma: f64, nu: f64) -> Result<(), MetricError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MetricError::BadScale(sigma));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(MetricError::BadDof(nu));
    }
    Ok(())
}

/// Log-density of the location-scale Student's t at `y`.
pub fn studentt_logpdf(y: f64, mu: f64, sigma: f64, nu: f64) -> Result<f64, MetricError> {
    check_scale_dof(sigma, nu)?;
    let z = (y - mu) / sigma;
    Ok(ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - sigma.ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p())
}

/// Closed-form CRPS of the location-scale Student's t. Finite only for
/// `nu > 1`; smaller `nu` is a domain error.
pub fn crps_studentt(y: f64, mu: f64, sigma: f64, nu: f64) -> Result<f64, MetricError> {
    check_scale_dof(sigma, nu)?;
    if nu <= 1.0 {
        return Err(MetricError::CrpsDofTooSmall(nu));
    }
    let z = (y - mu) / sigma;
    let standard = StudentsT::new(0.0, 1.0, nu).expect("validated dof");
    let cdf = standard.cdf(z);
    let pdf = standard.pdf(z);
    // beta-function ratio B(1/2, nu - 1/2) / B(1/2, nu / 2)^2 via logs
    let ratio = (ln_beta(0.5, nu - 0.5) - 2.0 * ln_beta(0.5, nu / 2.0)).exp();
    Ok(sigma
        * (z * (2.0 * cdf - 1.0) + 2.0 * pdf * (nu + z * z) / (nu - 1.0)
            - 2.0 * nu.sqrt() / (nu - 1.0) * ratio))
}

/// Closed-form CRPS of a normal distribution. Used as the independent
/// large-`nu` limit of the Student's-t score.
pub fn crps_normal(y: f64, mu: f64, sigma: f64) -> Result<f64, MetricError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MetricError::BadScale(sigma));
    }
    let z = (y - mu) / sigma;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(sigma
        * (z * (2.0 * normal.cdf(z) - 1.0) + 2.0 * pdf
            - 1.0 / std::f64::consts::PI.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use serde::Deserialize;

    #[derive(Deserialize)]
    struct GoldenFile {
        entries: Vec<Golden>,
    }

    #[derive(Deserialize)]
    struct Golden {
        nu: f64,
        y: f64,
        mu: f64,
        sigma: f64,
        crps: f64,
        logpdf: f64,
    }

    fn goldens() -> Vec<Golden> {
        let raw = include_str!("../../tests/data/crps_golden.json");
        serde_json::from_str::<GoldenFile>(raw).unwrap().entries
    }

    #[test]
    fn logpdf_matches_reference_values() {
        for g in goldens() {
            let got = studentt_logpdf(g.y, g.mu, g.sigma, g.nu).unwrap();
            assert_relative_eq!(got, g.logpdf, max_relative = 1e-12);
        }
    }

    #[test]
    fn logpdf_cauchy_mode_is_minus_ln_pi() {
        let got = studentt_logpdf(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(got, -std::f64::consts::PI.ln(), max_relative = 1e-15);
        assert_relative_eq!(got, -1.1447298858494002, max_relative = 1e-15);
    }

    #[test]
    fn logpdf_approaches_normal_for_large_dof() {
        for &z in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
            let t = studentt_logpdf(z, 0.0, 1.0, 1e6).unwrap();
            let n = -0.5 * (z * z + (2.0 * std::f64::consts::PI).ln());
            assert_relative_eq!(t, n, epsilon = 1e-4);
        }
    }

    #[test]
    fn logpdf_location_scale_identity() {
        let (y, mu, sigma, nu) = (2.7, -0.3, 1.7, 3.3);
        let full = studentt_logpdf(y, mu, sigma, nu).unwrap();
        let standardized = studentt_logpdf((y - mu) / sigma, 0.0, 1.0, nu).unwrap() - sigma.ln();
        assert_relative_eq!(full, standardized, max_relative = 1e-12);
    }

    #[test]
    fn domain_errors_for_bad_scale_or_dof() {
        assert!(matches!(
            studentt_logpdf(0.0, 0.0, 0.0, 3.0),
            Err(MetricError::BadScale(_))
        ));
        assert!(matches!(
            studentt_logpdf(0.0, 0.0, -1.0, 3.0),
            Err(MetricError::BadScale(_))
        ));
        assert!(matches!(
            studentt_logpdf(0.0, 0.0, 1.0, 0.0),
            Err(MetricError::BadDof(_))
        ));
        assert!(matches!(
            studentt_logpdf(0.0, 0.0, f64::NAN, 3.0),
            Err(MetricError::BadScale(_))
        ));
        assert!(matches!(
            crps_studentt(0.0, 0.0, 1.0, 1.0),
            Err(MetricError::CrpsDofTooSmall(_))
        ));
        assert!(matches!(
            crps_studentt(0.0, 0.0, 1.0, 0.5),
            Err(MetricError::CrpsDofTooSmall(_))
        ));
    }

    #[test]
    fn crps_matches_reference_values() {
        for g in goldens() {
            let got = crps_studentt(g.y, g.mu, g.sigma, g.nu).unwrap();
            assert_relative_eq!(got, g.crps, max_relative = 1e-12);
        }
    }

    #[test]
    fn crps_at_median_nu_three() {
        let got = crps_studentt(0.0, 0.0, 1.0, 3.0).unwrap();
        assert_relative_eq!(got, 0.27566444771089602, max_relative = 1e-13);
    }

    #[test]
    fn crps_approaches_normal_for_large_dof() {
        for &y in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
            let t = crps_studentt(y, 0.0, 1.0, 1e6).unwrap();
            let n = crps_normal(y, 0.0, 1.0).unwrap();
            assert_relative_eq!(t, n, epsilon = 1e-4);
        }
    }

    #[test]
    fn crps_normal_at_median() {
        let got = crps_normal(0.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(got, 0.23369497725510907, max_relative = 1e-12);
    }

    #[test]
    fn crps_tight_scale_approaches_absolute_error() {
        let got = crps_studentt(1.0, 0.0, 1e-9, 5.0).unwrap();
        assert_relative_eq!(got, 1.0, epsilon = 1e-7);
    }

    proptest! {
        #[test]
        fn crps_is_nonnegative(
            y in -20.0f64..20.0,
            mu in -20.0f64..20.0,
            sigma in 0.01f64..10.0,
            nu in 1.1f64..200.0,
        ) {
            let c = crps_studentt(y, mu, sigma, nu).unwrap();
            prop_assert!(c >= 0.0, "crps {c}");
        }

        #[test]
        fn crps_location_scale_equivariance(
            y in -5.0f64..5.0,
            mu in -5.0f64..5.0,
            sigma in 0.1f64..5.0,
            nu in 1.5f64..100.0,
            shift in -10.0f64..10.0,
            scale in 0.1f64..10.0,
        ) {
            let base = crps_studentt(y, mu, sigma, nu).unwrap();
            let moved = crps_studentt(scale * y + shift, scale * mu + shift, scale * sigma, nu).unwrap();
            prop_assert!((moved - scale * base).abs() <= 1e-10 * (1.0 + moved.abs()),
                "equivariance violated: {moved} vs {}", scale * base);
        }
    }
}
