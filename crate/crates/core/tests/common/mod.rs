#![allow(dead_code)]

use std::path::PathBuf;

use cdri::ingest::{generate_synthetic, SynthConfig};
use cdri::pipeline::{ForecastConfig, PredictionReport};
use cdri::report::{render_grouped_bars, render_loss_curve, render_spider, render_table, TableFormat};
use cdri::{aggregate_experts, PanelDataset};

/// Table 2 of the source study: 2025 predictions, rows in model order,
/// columns Physical, Social, Economic, Organizational, Natural/Health.
pub const PUBLISHED_TABLE2: [[f64; 5]; 6] = [
    [4.03092, 4.47864, 2.02203, 2.85259, 2.75703],
    [4.04375, 4.26504, 2.16125, 2.74750, 2.65250],
    [4.08358, 4.24559, 2.16961, 2.75330, 2.71039],
    [4.04375, 4.26499, 2.16125, 2.78749, 2.71249],
    [4.11138, 4.39719, 2.09061, 2.59173, 2.34924],
    [4.20363, 4.50197, 2.13022, 2.79242, 2.46654],
];

pub fn published_report() -> PredictionReport {
    PredictionReport::from_rows(2025, PUBLISHED_TABLE2)
}

/// Forecast settings small enough for debug-build tests.
pub fn fast_config() -> ForecastConfig {
    ForecastConfig::default()
        .with_overrides(&["forest.n_trees=20", "lstm.epochs=200"])
        .unwrap()
}

pub fn constant_panel() -> PanelDataset {
    generate_synthetic(&SynthConfig::default()).unwrap()
}

/// Noisy four-year panel with a mild trend, the fixture for rendering.
pub fn fixture_panel() -> PanelDataset {
    generate_synthetic(&SynthConfig {
        noise: 0.5,
        slope: [0.15, 0.1, -0.2, 0.05, -0.1],
        base: [3.4, 3.8, 2.6, 2.9, 2.8],
        seed: 2013,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn fixture_losses() -> Vec<f64> {
    (0..60).map(|k| 0.25 * 0.95f64.powi(k) + 0.01).collect()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// The rendered fixture outputs, keyed by golden file name.
pub fn golden_renders() -> Vec<(&'static str, String)> {
    let panel = fixture_panel();
    let spider_series: Vec<(String, _)> = panel
        .years()
        .iter()
        .map(|&y| (y.to_string(), aggregate_experts(&panel, y).unwrap()))
        .collect();
    let report = published_report();
    vec![
        ("spider.svg", render_spider(&spider_series).unwrap().text),
        ("loss_curve.svg", render_loss_curve(&fixture_losses()).unwrap().text),
        ("bars.svg", render_grouped_bars(&report).text),
        ("table.md", render_table(&report, TableFormat::Markdown)),
        ("table.csv", render_table(&report, TableFormat::Csv)),
    ]
}

/// Compares `actual` with the stored golden file. With `CDRI_BLESS=1`
/// the golden file is rewritten instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("CDRI_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        Err(format!("{name} differs from golden ({line})"))
    }
}

pub fn parse_xml(text: &str) -> Result<roxmltree::Document<'_>, String> {
    roxmltree::Document::parse(text).map_err(|e| e.to_string())
}
