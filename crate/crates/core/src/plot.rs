//! Plot artifacts for a diagnosis: the sliced series of the sub-graph
//! metrics as a long-format CSV, and a small self-contained SVG line
//! chart with the anomaly band shaded. Both emitters are pure string
//! builders so reruns are byte-identical.

use crate::dataset::TimeSeriesDataset;
use crate::window::AnomalyWindow;
use crate::{Error, Result};

/// Phase label for a sample index inside a 3n slice whose anomaly
/// occupies `window` (slice coordinates).
fn phase(t: usize, window: &AnomalyWindow) -> &'static str {
    if t < window.start {
        "pre"
    } else if t <= window.end {
        "anomaly"
    } else {
        "post"
    }
}

fn check_metrics(slice: &TimeSeriesDataset, metrics: &[String]) -> Result<()> {
    if metrics.is_empty() {
        return Err(Error::arg("nothing to plot: empty metric list"));
    }
    for m in metrics {
        slice.index_of(m)?;
    }
    Ok(())
}

/// Long-format CSV (`metric,t,value,phase`) of the given metrics over
/// the slice. `window` is the anomaly in slice coordinates; every
/// sample before it is `pre`, inside it `anomaly`, after it `post`.
pub fn plot_csv(
    slice: &TimeSeriesDataset,
    metrics: &[String],
    window: &AnomalyWindow,
) -> Result<String> {
    check_metrics(slice, metrics)?;
    let mut out = String::from("metric,t,value,phase\n");
    for m in metrics {
        let series = slice.series_by_name(m)?;
        for (t, v) in series.iter().enumerate() {
            out.push_str(&format!("{m},{t},{v},{}\n", phase(t, window)));
        }
    }
    Ok(out)
}

const SVG_W: f64 = 1000.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 55.0;
const MARGIN_R: f64 = 175.0;
const MARGIN_T: f64 = 15.0;
const MARGIN_B: f64 = 35.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fixed-size (1000x400) line chart of the given metrics with the
/// anomaly band shaded. One polyline per metric, shared y scale,
/// legend on the right. No external assets.
pub fn plot_svg(
    slice: &TimeSeriesDataset,
    metrics: &[String],
    window: &AnomalyWindow,
) -> Result<String> {
    check_metrics(slice, metrics)?;
    let t_len = slice.len();
    if t_len < 2 {
        return Err(Error::arg("need at least 2 samples to plot"));
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in metrics {
        for &v in slice.series_by_name(m)? {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::arg("non-finite values in plotted series"));
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { 1.0 };
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let x = |t: usize| MARGIN_L + plot_w * t as f64 / (t_len - 1) as f64;
    let y = |v: f64| MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    ));

    // anomaly band, extended half a sample step each side
    let step = plot_w / (t_len - 1) as f64;
    let band_x = (x(window.start) - step / 2.0).max(MARGIN_L);
    let band_end = (x(window.end) + step / 2.0).min(MARGIN_L + plot_w);
    s.push_str(&format!(
        "  <rect x=\"{:.2}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{plot_h}\" \
         fill=\"#fdd\" stroke=\"none\"/>\n",
        band_x,
        band_end - band_x
    ));

    s.push_str(&format!(
        "  <rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#999\"/>\n"
    ));

    for (i, m) in metrics.iter().enumerate() {
        let series = slice.series_by_name(m)?;
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect();
        s.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }

    // axis labels: y extremes and x start/end
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
         font-family=\"sans-serif\">{:.2}</text>\n",
        MARGIN_L - 4.0,
        MARGIN_T + 10.0,
        hi
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
         font-family=\"sans-serif\">{:.2}</text>\n",
        MARGIN_L - 4.0,
        MARGIN_T + plot_h,
        lo
    ));
    s.push_str(&format!(
        "  <text x=\"{MARGIN_L}\" y=\"{:.2}\" font-size=\"11\" \
         font-family=\"sans-serif\">0</text>\n",
        SVG_H - 18.0
    ));
    s.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
         font-family=\"sans-serif\">{}</text>\n",
        MARGIN_L + plot_w,
        SVG_H - 18.0,
        t_len - 1
    ));

    for (i, m) in metrics.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = SVG_W - MARGIN_R + 12.0;
        s.push_str(&format!(
            "  <line x1=\"{lx}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ly - 4.0,
            lx + 16.0,
            ly - 4.0
        ));
        s.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{ly}\" font-size=\"12\" \
             font-family=\"sans-serif\">{}</text>\n",
            lx + 22.0,
            xml_escape(m)
        ));
    }

    s.push_str("</svg>\n");
    Ok(s)
}
