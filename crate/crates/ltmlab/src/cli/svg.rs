//! Standalone SVG emission: log-log scaling plots and forecast overlays.
//!
//! Plain strings, no plotting runtime. Coordinates are formatted at fixed
//! precision so identical inputs give identical bytes. Every file starts
//! with a version comment for downstream tooling.

use crate::scaling::BrokenFitOutcome;

pub const SVG_VERSION: &str = "ltmlab-svg v1";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;

/// Maps a data interval onto a pixel interval. Degenerate data intervals
/// (a single x or y value) are widened so the point lands mid-plot.
struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Scale {
        let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let pad = 0.04 * (hi - lo);
        Scale {
            lo: lo - pad,
            hi: hi + pad,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <!-- {SVG_VERSION} -->\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!("<polyline points=\"{}\" fill=\"none\" {style}/>\n", coords.join(" "))
}

/// Tick positions for a log10 axis: every decade inside the range, or the
/// endpoints when the range spans less than one decade.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if first > last {
        return vec![lo, hi];
    }
    (first..=last).map(|e| e as f64).collect()
}

fn tick_label(log10_v: f64) -> String {
    if log10_v == log10_v.round() {
        format!("1e{}", log10_v.round() as i64)
    } else {
        format!("{:.3e}", 10f64.powf(log10_v))
    }
}

/// Log-log scatter of `(A, loss)` observations with the fitted line(s).
/// When the broken fit is the headline, both segments are drawn and the
/// break abscissa gets a dashed marker; otherwise the single fit is drawn.
pub fn scaling_plot(
    points: &[(f64, f64)],
    outcome: &BrokenFitOutcome,
    axis_label: &str,
    metric_label: &str,
) -> String {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(a, l)| (a.log10(), l.log10()))
        .collect();
    let xmin = logs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = logs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let ymin = logs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let ymax = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let sx = Scale::new(xmin, xmax, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    // y grows downward in pixel space
    let sy = Scale::new(ymin, ymax, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let title = format!("min {metric_label} vs {axis_label} (log-log)");
    let mut out = header(&title);

    for t in log_ticks(sx.lo, sx.hi) {
        let x = sx.map(t);
        out += &format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#ddd\"/>\n",
            MARGIN_TOP,
            HEIGHT - MARGIN_BOTTOM,
        );
        out += &format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 16.0,
            tick_label(t),
        );
    }
    for t in log_ticks(sy.lo, sy.hi) {
        let y = sy.map(t);
        out += &format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
            MARGIN_LEFT,
            WIDTH - MARGIN_RIGHT,
        );
        out += &format!(
            "<text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            tick_label(t),
        );
    }
    out += &format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    );
    out += &format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(axis_label),
    );

    // fitted line(s), evaluated in log space where power laws are straight
    let line_of = |fit: &crate::scaling::PowerLawFit, x0: f64, x1: f64| -> Vec<(f64, f64)> {
        [x0, x1]
            .iter()
            .map(|&x| (sx.map(x), sy.map(fit.b0 * (fit.log10_a0 - x))))
            .collect()
    };
    match (&outcome.broken, outcome.break_is_headline) {
        (Some(b), true) => {
            let xb = b.a_break.log10();
            out += &polyline(&line_of(&b.pre, xmin, xb), "stroke=\"#c33\" stroke-width=\"1.5\"");
            out += &polyline(&line_of(&b.post, xb, xmax), "stroke=\"#c33\" stroke-width=\"1.5\"");
            let x = sx.map(xb);
            out += &format!(
                "<line x1=\"{x:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n",
                HEIGHT - MARGIN_BOTTOM,
            );
            out += &format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#c33\">break {:.3e}</text>\n",
                x + 4.0,
                MARGIN_TOP + 14.0,
                b.a_break,
            );
        }
        _ => {
            out += &polyline(
                &line_of(&outcome.single, xmin, xmax),
                "stroke=\"#36c\" stroke-width=\"1.5\"",
            );
        }
    }

    for (x, y) in &logs {
        out += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"black\"/>\n",
            sx.map(*x),
            sy.map(*y),
        );
    }
    out += "</svg>\n";
    out
}

/// Truth series with the forecast overlaid: the sampled-band polygon
/// (16th to 84th percentile), the mean path, and a marker at the context
/// boundary. Linear axes; indices on x.
pub fn forecast_plot(
    series: &[f64],
    context_len: usize,
    mean: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> String {
    let horizon = mean.len();
    let n = series.len().max(context_len + horizon);
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for v in series.iter().chain(lo).chain(hi).chain(mean) {
        ymin = ymin.min(*v);
        ymax = ymax.max(*v);
    }
    if series.is_empty() && horizon == 0 {
        ymin = 0.0;
        ymax = 1.0;
    }
    let sx = Scale::new(0.0, (n.max(2) - 1) as f64, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let sy = Scale::new(ymin, ymax, HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let mut out = header("forecast");
    out += &format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    );

    if horizon > 0 {
        // band polygon: upper edge left to right, lower edge back
        let mut pts = Vec::with_capacity(2 * horizon);
        for (t, v) in hi.iter().enumerate() {
            pts.push((sx.map((context_len + t) as f64), sy.map(*v)));
        }
        for (t, v) in lo.iter().enumerate().rev() {
            pts.push((sx.map((context_len + t) as f64), sy.map(*v)));
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        out += &format!(
            "<polygon points=\"{}\" fill=\"#cde\" stroke=\"none\"/>\n",
            coords.join(" "),
        );
        let mean_px: Vec<(f64, f64)> = mean
            .iter()
            .enumerate()
            .map(|(t, v)| (sx.map((context_len + t) as f64), sy.map(*v)))
            .collect();
        out += &polyline(&mean_px, "stroke=\"#36c\" stroke-width=\"1.5\"");
    }

    if !series.is_empty() {
        let truth_px: Vec<(f64, f64)> = series
            .iter()
            .enumerate()
            .map(|(t, v)| (sx.map(t as f64), sy.map(*v)))
            .collect();
        out += &polyline(&truth_px, "stroke=\"black\" stroke-width=\"1\"");
    }

    let xb = sx.map(context_len.saturating_sub(1) as f64);
    out += &format!(
        "<line x1=\"{xb:.2}\" y1=\"{MARGIN_TOP}\" x2=\"{xb:.2}\" y2=\"{:.2}\" \
         stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
        HEIGHT - MARGIN_BOTTOM,
    );
    out += "</svg>\n";
    out
}
