//! Deterministic text rendering of fit results.

use super::BrokenFitOutcome;

pub const REPORT_VERSION: &str = "scaling-fit-report v1";

/// One fitted (axis, metric) pair, ready for rendering.
pub struct ReportSection {
    /// What the abscissa was: "params", "compute", or "data".
    pub axis: String,
    /// Which test metric the losses came from.
    pub metric: String,
    pub outcome: BrokenFitOutcome,
}

/// Renders sections into the versioned report format. Output is a pure
/// function of the inputs so repeated fits diff cleanly.
pub fn render_report(sections: &[ReportSection]) -> String {
    let mut out = String::from(REPORT_VERSION);
    out.push('\n');
    for s in sections {
        let single = &s.outcome.single;
        out.push_str(&format!("\n[axis={} metric={}]\n", s.axis, s.metric));
        out.push_str(&format!("n_points = {}\n", single.n_points));
        out.push_str(&format!(
            "single: B0 = {:.9e}, log10_A0 = {:.9e}, rss = {:.9e}\n",
            single.b0, single.log10_a0, single.rss
        ));
        match &s.outcome.broken {
            Some(b) => {
                out.push_str(&format!(
                    "broken: A_break = {:.9e}, pre B0 = {:.9e}, post B0 = {:.9e}, post log10_A0 = {:.9e}, rss = {:.9e}\n",
                    b.a_break, b.pre.b0, b.post.b0, b.post.log10_a0, b.rss
                ));
                out.push_str(&format!(
                    "rss_improvement = {:.6}\n",
                    s.outcome.rss_improvement
                ));
            }
            None => out.push_str("broken: not attempted (needs at least 6 points)\n"),
        }
        let (label, law) = if s.outcome.break_is_headline {
            ("BREAK", s.outcome.broken.as_ref().map(|b| b.post).unwrap_or(*single))
        } else {
            ("NO_BREAK", *single)
        };
        out.push_str(&format!(
            "headline: {label} L(A) = 10^({:.9e} * ({:.9e} - log10 A))\n",
            law.b0, law.log10_a0
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::{fit_broken_power_law, fit_power_law};

    fn sections() -> Vec<ReportSection> {
        let clean: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 3.0 + 0.5 * i as f64;
                (10f64.powf(x), 10f64.powf(0.042 * (-19.47 - x)))
            })
            .collect();
        vec![ReportSection {
            axis: "params".into(),
            metric: "mse".into(),
            outcome: fit_broken_power_law(&clean).unwrap(),
        }]
    }

    #[test]
    fn report_is_versioned_and_deterministic() {
        let a = render_report(&sections());
        let b = render_report(&sections());
        assert_eq!(a, b);
        assert!(a.starts_with(REPORT_VERSION));
        assert!(a.contains("[axis=params metric=mse]"));
        assert!(a.contains("headline: NO_BREAK"));
    }

    #[test]
    fn short_fits_note_the_missing_break_search() {
        let points = [(1e3, 1.0), (1e4, 0.6), (1e5, 0.3)];
        let outcome = crate::scaling::BrokenFitOutcome {
            single: fit_power_law(&points, None).unwrap(),
            broken: None,
            break_is_headline: false,
            rss_improvement: 0.0,
        };
        let text = render_report(&[ReportSection {
            axis: "data".into(),
            metric: "crps".into(),
            outcome,
        }]);
        assert!(text.contains("not attempted"));
    }
}
