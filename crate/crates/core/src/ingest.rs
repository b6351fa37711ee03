//! Questionnaire ingestion, dataset archives, time-series assembly and the
//! seeded synthetic panel generator.
//!
//! Input CSV has one row per parameter:
//!
//! ```text
//! expert_id,year,dimension,parameter,score,weight
//! E01,2013,physical,1,4,0.3
//! ```
//!
//! Rows may appear in any order. Five rows form one record (expert, year,
//! dimension); five records form one expert-year.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CdriError, Result};
use crate::model::{
    aggregate_experts, AssessmentRecord, Dimension, PanelDataset, ParameterScore, DIMENSION_COUNT,
    PARAMETERS_PER_DIMENSION, SCORE_MAX, SCORE_MIN, WEIGHT_TOLERANCE,
};
use crate::rng::{derive_seed, generator, streams};

pub const CSV_HEADER: [&str; 6] = ["expert_id", "year", "dimension", "parameter", "score", "weight"];
pub const DATASET_SCHEMA: &str = "cdri-dataset/1";

/// Raw weight sums inside this band are rescaled to 1 with a warning.
pub const WEIGHT_NORMALIZE_BAND: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    BadHeader,
    MalformedRow,
    UnknownDimension,
    BadParameter,
    ScoreOutOfRange,
    NonIntegerScore,
    InvalidWeight,
    DuplicateParameter,
    MissingParameters,
    WeightSum,
    WeightsNormalized,
    IncompletePair,
    EmptyDataset,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::BadHeader => "BAD_HEADER",
            IssueCode::MalformedRow => "MALFORMED_ROW",
            IssueCode::UnknownDimension => "UNKNOWN_DIMENSION",
            IssueCode::BadParameter => "BAD_PARAMETER",
            IssueCode::ScoreOutOfRange => "SCORE_OUT_OF_RANGE",
            IssueCode::NonIntegerScore => "NON_INTEGER_SCORE",
            IssueCode::InvalidWeight => "INVALID_WEIGHT",
            IssueCode::DuplicateParameter => "DUPLICATE_PARAMETER",
            IssueCode::MissingParameters => "MISSING_PARAMETERS",
            IssueCode::WeightSum => "WEIGHT_SUM",
            IssueCode::WeightsNormalized => "WEIGHTS_NORMALIZED",
            IssueCode::IncompletePair => "INCOMPLETE_PAIR",
            IssueCode::EmptyDataset => "EMPTY_DATASET",
        }
    }
}

/// One finding. `row` is the 1-based line number in the input (the header
/// is row 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub row: u64,
    pub code: IssueCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub record_count: usize,
    pub expert_count: usize,
    pub years: Vec<i32>,
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, row: u64, code: IssueCode, message: impl Into<String>) {
        self.errors.push(Issue {
            row,
            code,
            message: message.into(),
        });
    }

    fn warn(&mut self, row: u64, code: IssueCode, message: impl Into<String>) {
        self.warnings.push(Issue {
            row,
            code,
            message: message.into(),
        });
    }

    /// Plain-text summary with every issue listed, one per line.
    pub fn summary(&self) -> String {
        self.summary_limited(usize::MAX)
    }

    /// Like [`summary`](Self::summary) but lists at most `per_code` issues
    /// of each code, followed by a count of the rest.
    pub fn summary_limited(&self, per_code: usize) -> String {
        let mut out = format!(
            "records: {}\nexperts: {}\nyears: {}\nerrors: {}\nwarnings: {}\n",
            self.record_count,
            self.expert_count,
            self.years
                .iter()
                .map(|y| y.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.errors.len(),
            self.warnings.len()
        );
        for (kind, issues) in [("error", &self.errors), ("warning", &self.warnings)] {
            let mut seen: Vec<(IssueCode, usize)> = Vec::new();
            for issue in issues.iter() {
                let count = match seen.iter_mut().find(|(c, _)| *c == issue.code) {
                    Some((_, n)) => {
                        *n += 1;
                        *n
                    }
                    None => {
                        seen.push((issue.code, 1));
                        1
                    }
                };
                if count <= per_code {
                    out.push_str(&format!(
                        "{kind}: row {}: {}: {}\n",
                        issue.row,
                        issue.code.as_str(),
                        issue.message
                    ));
                }
            }
            for (code, n) in seen {
                if n > per_code {
                    out.push_str(&format!("{kind}: {} more {}\n", n - per_code, code.as_str()));
                }
            }
        }
        out
    }
}

struct RowEntry {
    row: u64,
    parameter: u8,
    score: f64,
    weight: f64,
}

fn parse_row(record: &csv::StringRecord, row: u64, report: &mut ValidationReport) -> Option<(String, i32, Dimension, RowEntry)> {
    if record.len() != CSV_HEADER.len() {
        report.error(
            row,
            IssueCode::MalformedRow,
            format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
        );
        return None;
    }
    let expert = record[0].trim();
    if expert.is_empty() {
        report.error(row, IssueCode::MalformedRow, "empty expert_id");
        return None;
    }
    let Ok(year) = record[1].trim().parse::<i32>() else {
        report.error(row, IssueCode::MalformedRow, format!("bad year {:?}", &record[1]));
        return None;
    };
    let Ok(dimension) = record[2].parse::<Dimension>() else {
        report.error(
            row,
            IssueCode::UnknownDimension,
            format!("unknown dimension {:?}", record[2].trim()),
        );
        return None;
    };
    let parameter = match record[3].trim().parse::<u8>() {
        Ok(p) if (1..=PARAMETERS_PER_DIMENSION as u8).contains(&p) => p,
        _ => {
            report.error(
                row,
                IssueCode::BadParameter,
                format!("parameter {:?} is not in 1..=5", record[3].trim()),
            );
            return None;
        }
    };
    let Ok(score) = record[4].trim().parse::<f64>() else {
        report.error(row, IssueCode::MalformedRow, format!("bad score {:?}", &record[4]));
        return None;
    };
    if !score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&score) {
        report.error(row, IssueCode::ScoreOutOfRange, format!("score {score} is outside [1, 5]"));
        return None;
    }
    if score.fract() != 0.0 {
        report.warn(row, IssueCode::NonIntegerScore, format!("score {score} is not an integer"));
    }
    let weight = match record[5].trim().parse::<f64>() {
        Ok(w) if w.is_finite() && w >= 0.0 => w,
        _ => {
            report.error(
                row,
                IssueCode::InvalidWeight,
                format!("weight {:?} is not a nonnegative number", record[5].trim()),
            );
            return None;
        }
    };
    Some((
        expert.to_string(),
        year,
        dimension,
        RowEntry {
            row,
            parameter,
            score,
            weight,
        },
    ))
}

/// Parses and validates a questionnaire CSV.
///
/// Returns the dataset together with its (possibly warning-carrying) report,
/// or the report alone when any error was found.
pub fn parse_assessment_csv<R: Read>(input: R) -> std::result::Result<(PanelDataset, ValidationReport), ValidationReport> {
    let mut report = ValidationReport::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    match reader.headers() {
        Ok(h) => {
            let found: Vec<&str> = h.iter().map(str::trim).collect();
            if found != CSV_HEADER {
                report.error(
                    1,
                    IssueCode::BadHeader,
                    format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), found.join(",")),
                );
                return Err(report);
            }
        }
        Err(e) => {
            report.error(1, IssueCode::BadHeader, e.to_string());
            return Err(report);
        }
    }

    let mut groups: BTreeMap<(String, i32, Dimension), Vec<RowEntry>> = BTreeMap::new();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line());
                report.error(row, IssueCode::MalformedRow, e.to_string());
                continue;
            }
        };
        let row = record.position().map_or(0, |p| p.line());
        if let Some((expert, year, dimension, entry)) = parse_row(&record, row, &mut report) {
            let group = groups.entry((expert, year, dimension)).or_default();
            if group.iter().any(|e| e.parameter == entry.parameter) {
                report.error(
                    row,
                    IssueCode::DuplicateParameter,
                    format!("parameter {} repeated", entry.parameter),
                );
            } else {
                group.push(entry);
            }
        }
    }

    let mut records = Vec::new();
    for ((expert, year, dimension), mut entries) in groups {
        let first_row = entries.iter().map(|e| e.row).min().unwrap_or(0);
        if entries.len() != PARAMETERS_PER_DIMENSION {
            let mut present: Vec<u8> = entries.iter().map(|e| e.parameter).collect();
            present.sort_unstable();
            report.error(
                first_row,
                IssueCode::MissingParameters,
                format!("{expert} {year} {dimension}: parameters present {present:?}"),
            );
            continue;
        }
        entries.sort_by_key(|e| e.parameter);
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            if (WEIGHT_NORMALIZE_BAND.0..=WEIGHT_NORMALIZE_BAND.1).contains(&total) {
                report.warn(
                    first_row,
                    IssueCode::WeightsNormalized,
                    format!("{expert} {year} {dimension}: weights summed to {total}, rescaled to 1"),
                );
                for e in &mut entries {
                    e.weight /= total;
                }
            } else {
                report.error(
                    first_row,
                    IssueCode::WeightSum,
                    format!("{expert} {year} {dimension}: weights sum to {total}"),
                );
                continue;
            }
        }
        let parameters = entries
            .iter()
            .map(|e| ParameterScore::new(e.parameter, e.score, e.weight))
            .collect();
        match AssessmentRecord::new(expert, year, dimension, parameters) {
            Ok(r) => records.push((first_row, r)),
            Err(e) => report.error(first_row, IssueCode::MalformedRow, e.to_string()),
        }
    }

    if !report.is_accepted() {
        return Err(report);
    }

    // Drop expert-years that do not cover every dimension.
    let mut coverage: BTreeMap<(String, i32), (usize, u64)> = BTreeMap::new();
    for (row, r) in &records {
        let slot = coverage.entry((r.expert_id.clone(), r.year)).or_insert((0, *row));
        slot.0 += 1;
        slot.1 = slot.1.min(*row);
    }
    for ((expert, year), (count, row)) in &coverage {
        if *count != DIMENSION_COUNT {
            report.warn(
                *row,
                IssueCode::IncompletePair,
                format!("{expert} {year}: only {count} of 5 dimensions present, pair dropped"),
            );
        }
    }
    let complete: Vec<AssessmentRecord> = records
        .into_iter()
        .filter(|(_, r)| coverage[&(r.expert_id.clone(), r.year)].0 == DIMENSION_COUNT)
        .map(|(_, r)| r)
        .collect();

    if complete.is_empty() {
        report.error(0, IssueCode::EmptyDataset, "no complete expert-year remains");
        return Err(report);
    }
    match PanelDataset::new(complete) {
        Ok(dataset) => {
            report.record_count = dataset.records().len();
            report.expert_count = dataset.experts().len();
            report.years = dataset.years().to_vec();
            Ok((dataset, report))
        }
        Err(e) => {
            report.error(0, IssueCode::MalformedRow, e.to_string());
            Err(report)
        }
    }
}

/// Writes the dataset in the ingest CSV schema, one row per parameter in
/// canonical (expert, year, dimension, parameter) order.
pub fn write_assessment_csv<W: Write>(dataset: &PanelDataset, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for record in dataset.records() {
        for p in &record.parameters {
            writer.write_record([
                record.expert_id.clone(),
                record.year.to_string(),
                record.dimension.token().to_string(),
                p.parameter_id.to_string(),
                p.score.to_string(),
                p.weight.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn assessment_csv_string(dataset: &PanelDataset) -> Result<String> {
    let mut buf = Vec::new();
    write_assessment_csv(dataset, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
}

#[derive(Serialize)]
struct ArchiveOut<'a> {
    schema: &'a str,
    years: &'a [i32],
    experts: &'a [String],
    records: &'a [AssessmentRecord],
}

#[derive(Deserialize)]
struct ArchiveIn {
    schema: String,
    records: Vec<AssessmentRecord>,
}

fn archive(dataset: &PanelDataset) -> ArchiveOut<'_> {
    ArchiveOut {
        schema: DATASET_SCHEMA,
        years: dataset.years(),
        experts: dataset.experts(),
        records: dataset.records(),
    }
}

/// Self-describing `cdri-dataset/1` JSON document.
pub fn dataset_to_json(dataset: &PanelDataset) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&archive(dataset))?;
    text.push('\n');
    Ok(text)
}

pub fn dataset_from_json(text: &str) -> Result<PanelDataset> {
    let raw: ArchiveIn = serde_json::from_str(text)?;
    if raw.schema != DATASET_SCHEMA {
        return Err(CdriError::Schema {
            expected: DATASET_SCHEMA.to_string(),
            found: raw.schema,
        });
    }
    PanelDataset::new(raw.records)
}

/// SHA-256 over the compact archive JSON, hex encoded.
pub fn dataset_fingerprint(dataset: &PanelDataset) -> String {
    let bytes = serde_json::to_vec(&archive(dataset)).expect("dataset serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Year-indexed matrices ready for the forecasters.
///
/// Years are re-encoded as `t = (year - first_year) / interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPanel {
    pub years: Vec<i32>,
    pub interval: i32,
    /// One aggregate vector per year.
    pub aggregate: Vec<[f64; DIMENSION_COUNT]>,
    pub experts: Vec<String>,
    /// `expert_panel[e][y]`, `None` where the expert-year was dropped.
    pub expert_panel: Vec<Vec<Option<[f64; DIMENSION_COUNT]>>>,
}

impl SeriesPanel {
    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().expect("series has years")
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn time_index(&self, year: i32) -> f64 {
        f64::from(year - self.first_year()) / f64::from(self.interval)
    }

    /// One column of the aggregate matrix.
    pub fn dimension_series(&self, dimension: Dimension) -> Vec<f64> {
        self.aggregate.iter().map(|row| row[dimension.index()]).collect()
    }

    /// Whole steps between the last observed year and `horizon`.
    pub fn steps_to(&self, horizon: i32) -> Result<usize> {
        let last = self.last_year();
        let gap = horizon - last;
        if gap <= 0 || gap % self.interval != 0 {
            return Err(CdriError::InvalidHorizon {
                horizon,
                last_year: last,
                interval: self.interval,
            });
        }
        Ok((gap / self.interval) as usize)
    }
}

pub fn build_series(dataset: &PanelDataset) -> Result<SeriesPanel> {
    let years = dataset.years().to_vec();
    if years.len() < 2 {
        return Err(CdriError::TooFewYears {
            needed: 2,
            found: years.len(),
        });
    }
    let interval = years[1] - years[0];
    if years.windows(2).any(|w| w[1] - w[0] != interval) {
        return Err(CdriError::IrregularYears(years));
    }
    let aggregate = years
        .iter()
        .map(|&y| aggregate_experts(dataset, y).map(|v| v.values))
        .collect::<Result<Vec<_>>>()?;
    let experts = dataset.experts().to_vec();
    let expert_panel = experts
        .iter()
        .map(|e| {
            years
                .iter()
                .map(|&y| dataset.expert_vector(e, y).map(|v| v.map(|v| v.values)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeriesPanel {
        years,
        interval,
        aggregate,
        experts,
        expert_panel,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub year: i32,
    pub dimensions: Vec<Dimension>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub experts: usize,
    pub years: Vec<i32>,
    /// Score level at the first year, per dimension.
    pub base: [f64; DIMENSION_COUNT],
    /// Change per year step, per dimension.
    pub slope: [f64; DIMENSION_COUNT],
    /// Half-width of the uniform noise added to every parameter score.
    pub noise: f64,
    pub shock: Option<Shock>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            experts: 11,
            years: vec![2013, 2016, 2019, 2022],
            base: [3.0; DIMENSION_COUNT],
            slope: [0.0; DIMENSION_COUNT],
            noise: 0.0,
            shock: None,
            seed: 42,
        }
    }
}

/// Generates a balanced panel.
///
/// Each parameter score is `base + slope * step + noise + shock`, clamped to
/// `[1, 5]`, where `step` is the position of the year in the sorted year
/// list. Weights are fixed per (expert, dimension): five draws from
/// `U(0.5, 1.5)` normalized to sum 1. Weight and noise draws use separate
/// sub-streams and are consumed in a fixed order whatever the amplitudes,
/// so paired runs that differ only in noise, slope or shock share weights.
pub fn generate_synthetic(config: &SynthConfig) -> Result<PanelDataset> {
    let mut years = config.years.clone();
    years.sort_unstable();
    years.dedup();
    if years.is_empty() {
        return Err(CdriError::TooFewYears { needed: 1, found: 0 });
    }
    if config.experts == 0 {
        return Err(CdriError::EmptyDataset);
    }
    if !config.noise.is_finite() || config.noise < 0.0 {
        return Err(CdriError::InvalidHyperparameter(format!("noise {}", config.noise)));
    }

    let mut weight_rng = generator(derive_seed(config.seed, streams::SYNTH_WEIGHTS));
    let mut noise_rng = generator(derive_seed(config.seed, streams::SYNTH_NOISE));
    let width = (config.experts.max(1) as f64).log10().floor() as usize + 1;
    let expert_ids: Vec<String> = (1..=config.experts)
        .map(|i| format!("E{:0w$}", i, w = width.max(2)))
        .collect();

    let weights: Vec<[[f64; PARAMETERS_PER_DIMENSION]; DIMENSION_COUNT]> = expert_ids
        .iter()
        .map(|_| {
            let mut per_dim = [[0.0; PARAMETERS_PER_DIMENSION]; DIMENSION_COUNT];
            for w in per_dim.iter_mut() {
                for x in w.iter_mut() {
                    *x = weight_rng.gen_range(0.5..1.5);
                }
                let total: f64 = w.iter().sum();
                for x in w.iter_mut() {
                    *x /= total;
                }
            }
            per_dim
        })
        .collect();

    let mut records = Vec::with_capacity(expert_ids.len() * years.len() * DIMENSION_COUNT);
    for (e, expert) in expert_ids.iter().enumerate() {
        for (step, &year) in years.iter().enumerate() {
            for d in Dimension::ALL {
                let mut level = config.base[d.index()] + config.slope[d.index()] * step as f64;
                if let Some(shock) = &config.shock {
                    if shock.year == year && shock.dimensions.contains(&d) {
                        level += shock.magnitude;
                    }
                }
                let parameters = (0..PARAMETERS_PER_DIMENSION)
                    .map(|p| {
                        let jitter: f64 = noise_rng.gen_range(-1.0..=1.0);
                        let score = (level + config.noise * jitter).clamp(SCORE_MIN, SCORE_MAX);
                        ParameterScore::new(p as u8 + 1, score, weights[e][d.index()][p])
                    })
                    .collect();
                records.push(AssessmentRecord::new(expert.clone(), year, d, parameters)?);
            }
        }
    }
    PanelDataset::new(records)
}
