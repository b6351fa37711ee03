//! Text renderers: spider diagrams, the model-comparison table, the LSTM
//! loss curve and grouped prediction bars. All output is plain text and
//! byte-stable for identical input.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CdriError, Result};
use crate::model::{Dimension, ResilienceVector, DIMENSION_COUNT, SCORE_MAX, SCORE_MIN};
use crate::pipeline::{BacktestReport, ModelKind, PredictionReport};

pub const SPIDER_SIZE: (u32, u32) = (600, 600);
pub const SPIDER_CENTER: (f64, f64) = (300.0, 290.0);
pub const SPIDER_RADIUS: f64 = 200.0;
pub const SPIDER_MAX_SERIES: usize = 8;

pub const CHART_SIZE: (u32, u32) = (800, 400);
/// Plot area of the loss curve and bar chart: left, top, right, bottom.
pub const LOSS_PLOT: (f64, f64, f64, f64) = (80.0, 30.0, 770.0, 340.0);
pub const BAR_PLOT: (f64, f64, f64, f64) = (60.0, 30.0, 600.0, 340.0);

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Counts of the meaningful elements in a rendered chart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Inventory {
    pub axes: usize,
    pub polygons: usize,
    pub polylines: usize,
    pub markers: usize,
    pub bars: usize,
    pub labels: usize,
    pub legend_entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    pub width: u32,
    pub height: u32,
    pub text: String,
    pub inventory: Inventory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl FromStr for TableFormat {
    type Err = CdriError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(CdriError::InvalidHyperparameter(format!("unknown table format {other:?}"))),
        }
    }
}

/// Fixed-precision number with `-0` normalised away.
fn num(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn coord(v: f64) -> String {
    num(v, 3)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn open_svg(out: &mut String, (w, h): (u32, u32), title: &str) {
    let _ = writeln!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>");
}

/// Screen position of `score` on the axis of dimension `index`. Axis 0
/// points to 12 o'clock and the rest follow clockwise.
pub fn spider_point(index: usize, score: f64) -> (f64, f64) {
    let angle = -PI / 2.0 + 2.0 * PI * index as f64 / DIMENSION_COUNT as f64;
    let r = SPIDER_RADIUS * (score - SCORE_MIN) / (SCORE_MAX - SCORE_MIN);
    (SPIDER_CENTER.0 + r * angle.cos(), SPIDER_CENTER.1 + r * angle.sin())
}

fn points_attr(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    points
        .into_iter()
        .map(|(x, y)| format!("{},{}", coord(x), coord(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Radar chart of up to eight labelled vectors. The radial scale runs
/// from score 1 at the centre to score 5 on the outer ring.
pub fn render_spider<S: AsRef<str>>(series: &[(S, ResilienceVector)]) -> Result<SvgDocument> {
    if series.is_empty() {
        return Err(CdriError::EmptyInput);
    }
    if series.len() > SPIDER_MAX_SERIES {
        return Err(CdriError::TooManySeries(series.len()));
    }
    for (_, v) in series {
        if let Some(bad) = v.values.iter().find(|s| !(SCORE_MIN..=SCORE_MAX).contains(*s)) {
            return Err(CdriError::ScoreOutOfRange(*bad));
        }
    }

    let mut inv = Inventory::default();
    let mut out = String::new();
    let mut years: Vec<i32> = series.iter().map(|(_, v)| v.year).collect();
    years.sort_unstable();
    years.dedup();
    let years: Vec<String> = years.iter().map(i32::to_string).collect();
    open_svg(&mut out, SPIDER_SIZE, &format!("CDRI spider diagram {}", years.join(", ")));

    out.push_str("<g class=\"grid\" fill=\"none\" stroke=\"#cccccc\">\n");
    for ring in 2..=5 {
        let pts = (0..DIMENSION_COUNT).map(|i| spider_point(i, ring as f64));
        let _ = writeln!(out, "<polygon class=\"ring\" data-score=\"{ring}\" points=\"{}\"/>", points_attr(pts));
    }
    out.push_str("</g>\n<g class=\"axes\" stroke=\"#555555\">\n");
    for d in Dimension::ALL {
        let (x, y) = spider_point(d.index(), SCORE_MAX);
        let _ = writeln!(
            out,
            "<line class=\"axis\" data-dimension=\"{}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
            d.token(),
            coord(SPIDER_CENTER.0),
            coord(SPIDER_CENTER.1),
            coord(x),
            coord(y)
        );
        inv.axes += 1;
    }
    out.push_str("</g>\n<g class=\"axis-labels\" text-anchor=\"middle\">\n");
    for d in Dimension::ALL {
        let (x, y) = spider_point(d.index(), SCORE_MAX + 0.45);
        let _ = writeln!(
            out,
            "<text class=\"axis-label\" x=\"{}\" y=\"{}\">{}</text>",
            coord(x),
            coord(y + 4.0),
            escape(d.label())
        );
        inv.labels += 1;
    }
    for ring in 1..=5 {
        let (x, y) = spider_point(0, ring as f64);
        let _ = writeln!(
            out,
            "<text class=\"ring-label\" x=\"{}\" y=\"{}\" fill=\"#888888\" font-size=\"10\">{ring}</text>",
            coord(x + 8.0),
            coord(y + 4.0)
        );
    }
    out.push_str("</g>\n<g class=\"series\" fill-opacity=\"0.15\" stroke-width=\"2\">\n");
    for (k, (label, v)) in series.iter().enumerate() {
        let colour = PALETTE[k];
        let pts = (0..DIMENSION_COUNT).map(|i| spider_point(i, v.values[i]));
        let _ = writeln!(
            out,
            "<polygon class=\"vector\" data-label=\"{}\" points=\"{}\" fill=\"{colour}\" stroke=\"{colour}\"/>",
            escape(label.as_ref()),
            points_attr(pts)
        );
        inv.polygons += 1;
    }
    out.push_str("</g>\n<g class=\"legend\">\n");
    for (k, (label, _)) in series.iter().enumerate() {
        let y = 560.0 - 18.0 * (series.len() - 1 - k) as f64;
        let _ = writeln!(
            out,
            "<rect class=\"legend-swatch\" x=\"20\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n<text class=\"legend-label\" x=\"38\" y=\"{}\">{}</text>",
            coord(y - 10.0),
            PALETTE[k],
            coord(y),
            escape(label.as_ref())
        );
        inv.legend_entries += 1;
    }
    out.push_str("<text class=\"scale-note\" x=\"580\" y=\"580\" text-anchor=\"end\" fill=\"#888888\" font-size=\"10\">radial scale: 1 (centre) to 5 (outer ring)</text>\n");
    out.push_str("</g>\n</svg>\n");

    Ok(SvgDocument {
        width: SPIDER_SIZE.0,
        height: SPIDER_SIZE.1,
        text: out,
        inventory: inv,
    })
}

/// The model-comparison table: one row per model in the report's order,
/// five value columns, five decimals.
pub fn render_table(report: &PredictionReport, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str("| Model |");
            for d in Dimension::ALL {
                let _ = write!(out, " {} |", d.label());
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(DIMENSION_COUNT));
            out.push('\n');
            for m in &report.models {
                let _ = write!(out, "| {} |", m.kind.label());
                for v in m.prediction {
                    let _ = write!(out, " {} |", num(v, 5));
                }
                out.push('\n');
            }
        }
        TableFormat::Csv => {
            out.push_str("model");
            for d in Dimension::ALL {
                let _ = write!(out, ",{}", d.token());
            }
            out.push('\n');
            for m in &report.models {
                out.push_str(m.kind.label());
                for v in m.prediction {
                    let _ = write!(out, ",{}", num(v, 5));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Backtest errors as a markdown table, one row per model.
pub fn render_backtest_table(report: &BacktestReport) -> String {
    let mut out = format!("Held-out year: {}\n\n| Model |", report.held_out_year);
    for d in Dimension::ALL {
        let _ = write!(out, " {} |", d.label());
    }
    out.push_str(" MAE |\n|---|");
    out.push_str(&"---:|".repeat(DIMENSION_COUNT + 1));
    out.push_str("\n| Actual |");
    for v in report.actual {
        let _ = write!(out, " {} |", num(v, 5));
    }
    out.push_str(" |\n");
    for m in &report.models {
        let _ = write!(out, "| {} |", m.kind.label());
        for e in m.abs_error {
            let _ = write!(out, " {} |", num(e, 5));
        }
        let _ = writeln!(out, " {} |", num(m.mean_abs_error, 5));
    }
    out
}

/// Tick values spanning `[lo, hi]` in `count - 1` equal steps.
fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

/// Vertical range of the loss plot: the data range, widened around a
/// constant history so it still has height.
pub fn loss_range(losses: &[f64]) -> (f64, f64) {
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

/// Screen position of epoch `index` (0-based) with loss `value`.
pub fn loss_point(index: usize, count: usize, value: f64, range: (f64, f64)) -> (f64, f64) {
    let (left, top, right, bottom) = LOSS_PLOT;
    let x = if count > 1 {
        left + (right - left) * index as f64 / (count - 1) as f64
    } else {
        (left + right) / 2.0
    };
    let y = bottom - (bottom - top) * (value - range.0) / (range.1 - range.0);
    (x, y)
}

/// Training-loss curve: epoch on x, loss on y, with a linear tick grid.
pub fn render_loss_curve(losses: &[f64]) -> Result<SvgDocument> {
    if losses.is_empty() {
        return Err(CdriError::EmptyInput);
    }
    if let Some(bad) = losses.iter().find(|v| !v.is_finite()) {
        return Err(CdriError::InvalidHyperparameter(format!("loss value {bad} is not finite")));
    }
    let (left, top, right, bottom) = LOSS_PLOT;
    let range = loss_range(losses);
    let n = losses.len();
    let mut inv = Inventory::default();
    let mut out = String::new();
    open_svg(&mut out, CHART_SIZE, "LSTM training loss");

    let _ = writeln!(
        out,
        "<g class=\"axes\" stroke=\"#333333\">\n<line class=\"axis\" data-axis=\"x\" x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\n<line class=\"axis\" data-axis=\"y\" x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\"/>\n</g>",
        l = coord(left),
        r = coord(right),
        t = coord(top),
        b = coord(bottom)
    );
    inv.axes = 2;

    out.push_str("<g class=\"ticks\" font-size=\"10\">\n");
    for v in ticks(range.0, range.1, 5) {
        let (_, y) = loss_point(0, n, v, range);
        let _ = writeln!(
            out,
            "<line class=\"tick\" x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#333333\"/>\n<text class=\"tick-label\" data-axis=\"y\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            coord(left - 5.0),
            coord(left),
            coord(left - 8.0),
            coord(y + 3.0),
            num(v, 4),
            y = coord(y)
        );
        inv.labels += 1;
    }
    let mut epochs: Vec<usize> = ticks(0.0, (n - 1) as f64, 6.min(n.max(2)))
        .into_iter()
        .map(|v| v.round() as usize)
        .collect();
    epochs.dedup();
    for idx in epochs {
        let (x, _) = loss_point(idx, n, range.0, range);
        let _ = writeln!(
            out,
            "<line class=\"tick\" x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#333333\"/>\n<text class=\"tick-label\" data-axis=\"x\" x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            coord(bottom),
            coord(bottom + 5.0),
            coord(bottom + 18.0),
            idx + 1,
            x = coord(x)
        );
        inv.labels += 1;
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        "<text class=\"axis-title\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n<text class=\"axis-title\" x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">loss (MSE)</text>",
        coord((left + right) / 2.0),
        coord(bottom + 40.0),
        coord((top + bottom) / 2.0),
        coord((top + bottom) / 2.0)
    );
    inv.labels += 2;

    if n == 1 {
        let (x, y) = loss_point(0, 1, losses[0], range);
        let _ = writeln!(
            out,
            "<circle class=\"marker\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>",
            coord(x),
            coord(y),
            PALETTE[0]
        );
        inv.markers = 1;
    } else {
        let pts = losses.iter().enumerate().map(|(i, &v)| loss_point(i, n, v, range));
        let _ = writeln!(
            out,
            "<polyline class=\"loss\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
            PALETTE[0],
            points_attr(pts)
        );
        inv.polylines = 1;
    }
    out.push_str("</svg>\n");

    Ok(SvgDocument {
        width: CHART_SIZE.0,
        height: CHART_SIZE.1,
        text: out,
        inventory: inv,
    })
}

/// Bar height in pixels for a score on the `[0, 5]` bar scale.
pub fn bar_height(score: f64) -> f64 {
    let (_, top, _, bottom) = BAR_PLOT;
    (bottom - top) * score.clamp(0.0, SCORE_MAX) / SCORE_MAX
}

/// Five dimension groups of one bar per model, heights linear over [0, 5].
pub fn render_grouped_bars(report: &PredictionReport) -> SvgDocument {
    let (left, top, right, bottom) = BAR_PLOT;
    let group_width = (right - left) / DIMENSION_COUNT as f64;
    let models = report.models.len().max(1);
    let bar_width = group_width * 0.8 / models as f64;
    let mut inv = Inventory::default();
    let mut out = String::new();
    open_svg(&mut out, CHART_SIZE, &format!("Predicted resilience scores for {}", report.horizon_year));

    let _ = writeln!(
        out,
        "<g class=\"axes\" stroke=\"#333333\">\n<line class=\"axis\" data-axis=\"x\" x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\n<line class=\"axis\" data-axis=\"y\" x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\"/>\n</g>",
        l = coord(left),
        r = coord(right),
        t = coord(top),
        b = coord(bottom)
    );
    inv.axes = 2;
    out.push_str("<g class=\"ticks\" font-size=\"10\">\n");
    for s in 0..=5 {
        let y = bottom - bar_height(s as f64);
        let _ = writeln!(
            out,
            "<line class=\"gridline\" x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n<text class=\"tick-label\" data-axis=\"y\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{s}</text>",
            coord(left),
            coord(right),
            coord(left - 6.0),
            coord(y + 3.0),
            y = coord(y)
        );
        inv.labels += 1;
    }
    out.push_str("</g>\n<g class=\"bars\">\n");
    for d in Dimension::ALL {
        let g0 = left + group_width * d.index() as f64 + group_width * 0.1;
        for (k, m) in report.models.iter().enumerate() {
            let score = m.prediction[d.index()];
            let h = bar_height(score);
            let _ = writeln!(
                out,
                "<rect class=\"bar\" data-model=\"{}\" data-dimension=\"{}\" data-score=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                m.kind.key(),
                d.token(),
                num(score, 5),
                coord(g0 + bar_width * k as f64),
                coord(bottom - h),
                coord(bar_width),
                coord(h),
                PALETTE[k % PALETTE.len()]
            );
            inv.bars += 1;
        }
        let _ = writeln!(
            out,
            "<text class=\"group-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            coord(left + group_width * (d.index() as f64 + 0.5)),
            coord(bottom + 18.0),
            escape(d.label())
        );
        inv.labels += 1;
    }
    out.push_str("</g>\n<g class=\"legend\">\n");
    for (k, m) in report.models.iter().enumerate() {
        let y = top + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            out,
            "<rect class=\"legend-swatch\" data-model=\"{}\" x=\"620\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n<text class=\"legend-label\" x=\"638\" y=\"{}\">{}</text>",
            m.kind.key(),
            coord(y - 10.0),
            PALETTE[k % PALETTE.len()],
            coord(y),
            escape(m.kind.label())
        );
        inv.legend_entries += 1;
    }
    out.push_str("</g>\n</svg>\n");

    SvgDocument {
        width: CHART_SIZE.0,
        height: CHART_SIZE.1,
        text: out,
        inventory: inv,
    }
}

/// Spider series for a report: one polygon per model.
pub fn report_vectors(report: &PredictionReport) -> Vec<(String, ResilienceVector)> {
    report
        .models
        .iter()
        .map(|m| (m.kind.label().to_string(), m.vector(report.horizon_year)))
        .collect()
}

/// Row label lookup for parsed tables.
pub fn kind_from_label(label: &str) -> Option<ModelKind> {
    ModelKind::ALL.into_iter().find(|k| k.label() == label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;

    fn vector(values: [f64; 5]) -> ResilienceVector {
        ResilienceVector::new(2013, values, Provenance::Aggregate).unwrap()
    }

    #[test]
    fn number_formatting_has_no_negative_zero() {
        assert_eq!(num(-0.0001, 3), "0.000");
        assert_eq!(num(-0.5, 3), "-0.500");
        assert_eq!(num(2.0, 5), "2.00000");
    }

    #[test]
    fn spider_limits() {
        assert!(matches!(render_spider::<&str>(&[]), Err(CdriError::EmptyInput)));
        let many: Vec<_> = (0..9).map(|i| (format!("s{i}"), vector([3.0; 5]))).collect();
        assert!(matches!(render_spider(&many), Err(CdriError::TooManySeries(9))));
        let mut bad = vector([3.0; 5]);
        bad.values[2] = 5.5;
        assert!(matches!(render_spider(&[("x", bad)]), Err(CdriError::ScoreOutOfRange(_))));
    }

    #[test]
    fn spider_axes_start_at_top_and_run_clockwise() {
        let (x0, y0) = spider_point(0, 5.0);
        assert!((x0 - SPIDER_CENTER.0).abs() < 1e-9 && (y0 - (SPIDER_CENTER.1 - SPIDER_RADIUS)).abs() < 1e-9);
        let (x1, _) = spider_point(1, 5.0);
        assert!(x1 > SPIDER_CENTER.0, "second axis is to the right of 12 o'clock");
        assert_eq!(spider_point(3, 1.0), SPIDER_CENTER);
    }

    #[test]
    fn labels_are_escaped() {
        let doc = render_spider(&[("A & B <2013>", vector([3.0; 5]))]).unwrap();
        assert!(doc.text.contains("A &amp; B &lt;2013&gt;"));
    }

    #[test]
    fn loss_curve_shapes() {
        assert!(render_loss_curve(&[]).is_err());
        assert!(render_loss_curve(&[1.0, f64::NAN]).is_err());
        let single = render_loss_curve(&[0.3]).unwrap();
        assert_eq!((single.inventory.markers, single.inventory.polylines), (1, 0));
        let flat = render_loss_curve(&[0.2, 0.2]).unwrap();
        assert_eq!(flat.inventory.polylines, 1);
    }

    #[test]
    fn table_formats_parse() {
        assert_eq!("md".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
        assert_eq!("CSV".parse::<TableFormat>().unwrap(), TableFormat::Csv);
        assert!("pdf".parse::<TableFormat>().is_err());
    }
}
