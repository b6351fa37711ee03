mod common;

use cdri::model::Provenance;
use cdri::pipeline::{ModelKind, PredictionReport};
use cdri::report::{
    render_grouped_bars, render_loss_curve, render_spider, render_table, TableFormat, BAR_PLOT, SPIDER_CENTER,
    SPIDER_RADIUS,
};
use cdri::{CdriError, Dimension, ResilienceVector};
use proptest::prelude::*;

fn vector(values: [f64; 5]) -> ResilienceVector {
    ResilienceVector::new(2013, values, Provenance::Aggregate).unwrap()
}

fn points(attr: &str) -> Vec<(f64, f64)> {
    attr.split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

fn by_class<'a>(doc: &'a roxmltree::Document<'a>, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).collect()
}

fn series_polygons(text: &str) -> Vec<Vec<(f64, f64)>> {
    let doc = common::parse_xml(text).unwrap();
    by_class(&doc, "vector")
        .iter()
        .map(|n| points(n.attribute("points").unwrap()))
        .collect()
}

/// Clockwise from 12 o'clock in screen coordinates (y grows downward).
fn polar_oracle(index: usize, score: f64) -> (f64, f64) {
    let theta = (72.0 * index as f64).to_radians();
    let r = SPIDER_RADIUS * (score - 1.0) / 4.0;
    (SPIDER_CENTER.0 + r * theta.sin(), SPIDER_CENTER.1 - r * theta.cos())
}

#[test]
fn spider_all_five_sits_on_the_outer_ring() {
    let doc = render_spider(&[("max", vector([5.0; 5]))]).unwrap();
    let poly = &series_polygons(&doc.text)[0];
    assert_eq!(poly.len(), 5);
    for &(x, y) in poly {
        let r = ((x - SPIDER_CENTER.0).powi(2) + (y - SPIDER_CENTER.1).powi(2)).sqrt();
        assert!((r - SPIDER_RADIUS).abs() < 1e-3, "radius {r}");
    }
}

#[test]
fn spider_all_one_collapses_to_the_centre() {
    let doc = render_spider(&[("min", vector([1.0; 5]))]).unwrap();
    for &(x, y) in &series_polygons(&doc.text)[0] {
        assert_eq!((x, y), SPIDER_CENTER);
    }
}

#[test]
fn spider_vertices_match_hand_computed_coordinates() {
    let scores = [4.0, 3.0, 2.0, 3.0, 4.0];
    let doc = render_spider(&[("mixed", vector(scores))]).unwrap();
    let poly = &series_polygons(&doc.text)[0];
    for (i, &(x, y)) in poly.iter().enumerate() {
        let (ex, ey) = polar_oracle(i, scores[i]);
        assert!((x - ex).abs() < 1e-3 && (y - ey).abs() < 1e-3, "vertex {i}: ({x}, {y}) vs ({ex}, {ey})");
    }
    // 12 o'clock first, then clockwise: the second vertex is right of centre.
    assert!(poly[0].1 < SPIDER_CENTER.1 && (poly[0].0 - SPIDER_CENTER.0).abs() < 1e-9);
    assert!(poly[1].0 > SPIDER_CENTER.0);
}

#[test]
fn spider_axes_and_labels_follow_canonical_order() {
    let doc = render_spider(&[("a", vector([3.0; 5])), ("b", vector([4.0; 5]))]).unwrap();
    let xml = common::parse_xml(&doc.text).unwrap();
    let axes: Vec<_> = by_class(&xml, "axis").iter().map(|n| n.attribute("data-dimension").unwrap()).collect();
    let tokens: Vec<_> = Dimension::ALL.iter().map(|d| d.token()).collect();
    assert_eq!(axes, tokens);
    let labels: Vec<_> = by_class(&xml, "axis-label").iter().map(|n| n.text().unwrap()).collect();
    assert_eq!(labels, ["Physical", "Social", "Economic", "Organizational", "Natural/Health"]);
    let legend: Vec<_> = by_class(&xml, "legend-label").iter().map(|n| n.text().unwrap()).collect();
    assert_eq!(legend, ["a", "b"]);
    assert_eq!(doc.inventory.axes, 5);
    assert_eq!(doc.inventory.polygons, 2);
    assert_eq!((doc.width, doc.height), (600, 600));
}

#[test]
fn spider_rejects_bad_input() {
    let nine: Vec<_> = (0..9).map(|i| (i.to_string(), vector([2.0; 5]))).collect();
    assert!(matches!(render_spider(&nine), Err(CdriError::TooManySeries(9))));
    let eight = &nine[..8];
    assert_eq!(render_spider(eight).unwrap().inventory.polygons, 8);
    let outside = ResilienceVector {
        year: 2013,
        values: [3.0, 3.0, 0.5, 3.0, 3.0],
        provenance: Provenance::Aggregate,
    };
    assert!(matches!(render_spider(&[("x", outside)]), Err(CdriError::ScoreOutOfRange(_))));
}

fn loss_points(text: &str) -> Vec<(f64, f64)> {
    let doc = common::parse_xml(text).unwrap();
    by_class(&doc, "loss")
        .first()
        .map(|n| points(n.attribute("points").unwrap()))
        .unwrap_or_default()
}

#[test]
fn loss_curve_single_value_is_one_marker() {
    let doc = render_loss_curve(&[0.42]).unwrap();
    let xml = common::parse_xml(&doc.text).unwrap();
    assert_eq!(by_class(&xml, "marker").len(), 1);
    assert!(by_class(&xml, "loss").is_empty());
}

#[test]
fn loss_curve_decreasing_losses_go_down_the_page() {
    let losses: Vec<f64> = (0..40).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let doc = render_loss_curve(&losses).unwrap();
    let pts = loss_points(&doc.text);
    assert_eq!(pts.len(), 40);
    for w in pts.windows(2) {
        assert!(w[1].0 > w[0].0, "x increases with epoch");
        assert!(w[1].1 > w[0].1, "y increases (downward) as loss falls");
    }
    assert_eq!((doc.width, doc.height), (800, 400));
    let xml = common::parse_xml(&doc.text).unwrap();
    let ticks = by_class(&xml, "tick-label");
    assert!(ticks.iter().any(|n| n.attribute("data-axis") == Some("x")));
    assert!(ticks.iter().any(|n| n.attribute("data-axis") == Some("y")));
}

#[test]
fn loss_curve_equal_losses_are_horizontal() {
    let pts = loss_points(&render_loss_curve(&[0.3, 0.3]).unwrap().text);
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0].1, pts[1].1);
}

#[test]
fn loss_curve_needs_values() {
    assert!(matches!(render_loss_curve(&[]), Err(CdriError::EmptyInput)));
}

fn bars(report: &PredictionReport) -> Vec<(String, String, f64)> {
    let doc = render_grouped_bars(report);
    let xml = common::parse_xml(&doc.text).unwrap();
    by_class(&xml, "bar")
        .iter()
        .map(|n| {
            (
                n.attribute("data-model").unwrap().to_string(),
                n.attribute("data-dimension").unwrap().to_string(),
                n.attribute("height").unwrap().parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn bars_equal_report_has_equal_heights() {
    let all = bars(&PredictionReport::from_rows(2025, [[3.3; 5]; 6]));
    assert_eq!(all.len(), 30);
    assert!(all.iter().all(|b| b.2 == all[0].2));
}

#[test]
fn bars_tallest_in_each_group_is_the_high_model() {
    let mut rows = [[1.0; 5]; 6];
    rows[3] = [5.0; 5];
    let all = bars(&PredictionReport::from_rows(2025, rows));
    for d in Dimension::ALL {
        let group: Vec<_> = all.iter().filter(|b| b.1 == d.token()).collect();
        assert_eq!(group.len(), 6);
        let tallest = group.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
        assert_eq!(tallest.0, ModelKind::GradientBoosting.key());
    }
}

#[test]
fn bars_published_social_ordering() {
    let all = bars(&common::published_report());
    let h = |k: ModelKind| all.iter().find(|b| b.0 == k.key() && b.1 == "social").unwrap().2;
    assert!(h(ModelKind::Lstm) > h(ModelKind::LinearRegression));
    assert!(h(ModelKind::LinearRegression) > h(ModelKind::Var));
    assert!(h(ModelKind::Var) > h(ModelKind::DecisionTree));
    assert!((h(ModelKind::DecisionTree) - h(ModelKind::GradientBoosting)).abs() < 0.01);
    assert!(h(ModelKind::GradientBoosting) > h(ModelKind::RandomForest));
    // heights are linear on [0, 5]
    let ratio = h(ModelKind::Lstm) / 4.50197;
    assert!((h(ModelKind::RandomForest) / 4.24559 - ratio).abs() < 1e-3);
}

#[test]
fn bars_legend_lists_models_in_order() {
    let doc = render_grouped_bars(&common::published_report());
    let xml = common::parse_xml(&doc.text).unwrap();
    let legend: Vec<_> = by_class(&xml, "legend-label").iter().map(|n| n.text().unwrap().to_string()).collect();
    let labels: Vec<_> = ModelKind::ALL.iter().map(|k| k.label().to_string()).collect();
    assert_eq!(legend, labels);
    assert_eq!(doc.inventory.bars, 30);
}

#[test]
fn table_reproduces_published_row() {
    let md = render_table(&common::published_report(), TableFormat::Markdown);
    assert!(md.contains("| Linear Regression | 4.03092 | 4.47864 | 2.02203 | 2.85259 | 2.75703 |\n"));
    let rows: Vec<&str> = md.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    for (row, kind) in rows.iter().zip(ModelKind::ALL) {
        assert!(row.starts_with(&format!("| {} |", kind.label())));
    }
}

#[test]
fn table_constant_report() {
    let md = render_table(&PredictionReport::from_rows(2025, [[3.0; 5]; 6]), TableFormat::Markdown);
    for row in md.lines().skip(2) {
        assert!(row.ends_with("| 3.00000 | 3.00000 | 3.00000 | 3.00000 | 3.00000 |"), "{row}");
    }
}

#[test]
fn table_csv_parses_back() {
    let report = common::published_report();
    let text = render_table(&report, TableFormat::Csv);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["model", "physical", "social", "economic", "organizational", "natural_health"]);
    let parsed: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(parsed.len(), 6);
    for (record, expected) in parsed.iter().zip(common::PUBLISHED_TABLE2) {
        let values: Vec<f64> = record.iter().skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(values, expected);
    }
}

#[test]
fn golden_outputs_are_stable() {
    for (name, text) in common::golden_renders() {
        if name.ends_with(".svg") {
            common::parse_xml(&text).unwrap();
        }
        common::check_golden(name, &text).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spider_is_valid_and_bounded(values in prop::collection::vec(prop::array::uniform5(1.0f64..=5.0), 1..=8)) {
        let series: Vec<_> = values.iter().enumerate().map(|(i, v)| (format!("s{i}"), vector(*v))).collect();
        let doc = render_spider(&series).unwrap();
        prop_assert_eq!(&doc.text, &render_spider(&series).unwrap().text);
        let polys = series_polygons(&doc.text);
        prop_assert_eq!(polys.len(), values.len());
        for (poly, v) in polys.iter().zip(&values) {
            prop_assert_eq!(poly.len(), 5);
            for (i, &(x, y)) in poly.iter().enumerate() {
                let (ex, ey) = polar_oracle(i, v[i]);
                prop_assert!((x - ex).abs() < 1e-3 && (y - ey).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn table_keeps_five_decimals(rows in prop::array::uniform6(prop::array::uniform5(1.0f64..=5.0))) {
        let report = PredictionReport::from_rows(2025, rows);
        let text = render_table(&report, TableFormat::Csv);
        for (line, row) in text.lines().skip(1).zip(rows) {
            let cells: Vec<&str> = line.split(',').skip(1).collect();
            for (cell, v) in cells.iter().zip(row) {
                prop_assert_eq!(cell.to_string(), format!("{v:.5}"));
            }
        }
    }

    #[test]
    fn bars_heights_are_linear(rows in prop::array::uniform6(prop::array::uniform5(1.0f64..=5.0))) {
        let report = PredictionReport::from_rows(2025, rows);
        for (model, dim, h) in bars(&report) {
            let k = ModelKind::ALL.iter().position(|k| k.key() == model).unwrap();
            let d = Dimension::ALL.iter().position(|d| d.token() == dim).unwrap();
            prop_assert!((h - (BAR_PLOT.3 - BAR_PLOT.1) * rows[k][d] / 5.0).abs() < 1e-3);
        }
    }
}
