//! Domain types and the index arithmetic.
//!
//! A questionnaire answer is an [`AssessmentRecord`]: one expert rating the
//! five weighted parameters of one [`Dimension`] in one year. Records roll up
//! into [`ResilienceVector`]s (one score per dimension) per expert, then per
//! year across experts, and finally into a single overall index.
//!
//! All means sum left to right in canonical order (parameters by id, experts
//! by id, dimensions in [`Dimension::ALL`] order) so results are
//! bit-reproducible regardless of input ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CdriError, Result};

pub const DIMENSION_COUNT: usize = 5;
pub const PARAMETERS_PER_DIMENSION: usize = 5;
pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;
pub const WEIGHT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Physical,
    Social,
    Economic,
    Organizational,
    NaturalHealth,
}

impl Dimension {
    /// Canonical order, shared by vectors, tables and chart axes.
    pub const ALL: [Dimension; DIMENSION_COUNT] = [
        Dimension::Physical,
        Dimension::Social,
        Dimension::Economic,
        Dimension::Organizational,
        Dimension::NaturalHealth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Token used in CSV input and JSON archives.
    pub fn token(self) -> &'static str {
        match self {
            Dimension::Physical => "physical",
            Dimension::Social => "social",
            Dimension::Economic => "economic",
            Dimension::Organizational => "organizational",
            Dimension::NaturalHealth => "natural_health",
        }
    }

    /// Human-readable column label.
    pub fn label(self) -> &'static str {
        match self {
            Dimension::Physical => "Physical",
            Dimension::Social => "Social",
            Dimension::Economic => "Economic",
            Dimension::Organizational => "Organizational",
            Dimension::NaturalHealth => "Natural/Health",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Dimension {
    type Err = CdriError;

    /// Case-insensitive. `institutional` and `natural` are accepted as
    /// synonyms of `organizational` and `natural_health`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "physical" => Ok(Dimension::Physical),
            "social" => Ok(Dimension::Social),
            "economic" => Ok(Dimension::Economic),
            "organizational" | "institutional" => Ok(Dimension::Organizational),
            "natural_health" | "natural" => Ok(Dimension::NaturalHealth),
            _ => Err(CdriError::UnknownDimension(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterScore {
    pub parameter_id: u8,
    pub score: f64,
    pub weight: f64,
}

impl ParameterScore {
    pub fn new(parameter_id: u8, score: f64, weight: f64) -> Self {
        Self {
            parameter_id,
            score,
            weight,
        }
    }
}

fn check_score(score: f64) -> Result<()> {
    if score.is_finite() && (SCORE_MIN..=SCORE_MAX).contains(&score) {
        Ok(())
    } else {
        Err(CdriError::ScoreOutOfRange(score))
    }
}

/// Checks count, ids, ranges and the weight sum; returns the parameters
/// sorted by id.
fn validated_parameters(parameters: &[ParameterScore]) -> Result<Vec<ParameterScore>> {
    if parameters.len() != PARAMETERS_PER_DIMENSION {
        return Err(CdriError::ParameterCount {
            expected: PARAMETERS_PER_DIMENSION,
            found: parameters.len(),
        });
    }
    let mut sorted = parameters.to_vec();
    sorted.sort_by_key(|p| p.parameter_id);
    for (slot, p) in sorted.iter().enumerate() {
        if usize::from(p.parameter_id) != slot + 1 {
            return Err(CdriError::ParameterId(p.parameter_id));
        }
        check_score(p.score)?;
        if !p.weight.is_finite() || p.weight < 0.0 {
            return Err(CdriError::InvalidWeight(p.weight));
        }
    }
    let total: f64 = sorted.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(CdriError::WeightSum(total));
    }
    Ok(sorted)
}

/// Weighted mean written as an offset from the smallest value, so constant
/// inputs come back exactly and the result never leaves `[min, max]`.
fn weighted_mean(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let floor = pairs.clone().map(|(v, _)| v).fold(f64::INFINITY, f64::min);
    let (offset, total) = pairs.fold((0.0, 0.0), |(o, t), (v, w)| (o + w * (v - floor), t + w));
    if total == 0.0 {
        floor
    } else {
        floor + offset / total
    }
}

/// Weighted arithmetic mean of five parameter scores.
pub fn dimension_score(parameters: &[ParameterScore]) -> Result<f64> {
    let sorted = validated_parameters(parameters)?;
    Ok(weighted_mean(sorted.iter().map(|p| (p.score, p.weight))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub expert_id: String,
    pub year: i32,
    pub dimension: Dimension,
    pub parameters: Vec<ParameterScore>,
}

impl AssessmentRecord {
    pub fn new(
        expert_id: impl Into<String>,
        year: i32,
        dimension: Dimension,
        parameters: Vec<ParameterScore>,
    ) -> Result<Self> {
        let parameters = validated_parameters(&parameters)?;
        Ok(Self {
            expert_id: expert_id.into(),
            year,
            dimension,
            parameters,
        })
    }

    pub fn score(&self) -> Result<f64> {
        dimension_score(&self.parameters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExpertLevel,
    Aggregate,
    Predicted,
}

/// One score per dimension, each in `[1, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResilienceVector {
    pub year: i32,
    pub values: [f64; DIMENSION_COUNT],
    pub provenance: Provenance,
}

impl ResilienceVector {
    pub fn new(year: i32, values: [f64; DIMENSION_COUNT], provenance: Provenance) -> Result<Self> {
        for &v in &values {
            check_score(v)?;
        }
        Ok(Self {
            year,
            values,
            provenance,
        })
    }

    /// Projects raw model output into `[1, 5]`. The flags mark components
    /// that fell outside the scale (NaN is clamped to the floor and flagged).
    pub fn clamped(
        year: i32,
        raw: [f64; DIMENSION_COUNT],
        provenance: Provenance,
    ) -> (Self, [bool; DIMENSION_COUNT]) {
        let mut values = raw;
        let mut flags = [false; DIMENSION_COUNT];
        for (v, flag) in values.iter_mut().zip(flags.iter_mut()) {
            if v.is_nan() {
                *v = SCORE_MIN;
                *flag = true;
            } else if *v < SCORE_MIN || *v > SCORE_MAX {
                *v = v.clamp(SCORE_MIN, SCORE_MAX);
                *flag = true;
            }
        }
        (
            Self {
                year,
                values,
                provenance,
            },
            flags,
        )
    }

    pub fn get(&self, dimension: Dimension) -> f64 {
        self.values[dimension.index()]
    }
}

/// Builds an expert-level vector from the five records of one expert-year.
pub fn expert_vector(records: &[&AssessmentRecord]) -> Result<ResilienceVector> {
    let first = records.first().ok_or(CdriError::MissingDimension(Dimension::Physical))?;
    let mut slots: [Option<f64>; DIMENSION_COUNT] = [None; DIMENSION_COUNT];
    for record in records {
        if record.expert_id != first.expert_id || record.year != first.year {
            return Err(CdriError::MixedRecords);
        }
        let slot = &mut slots[record.dimension.index()];
        if slot.is_some() {
            return Err(CdriError::DuplicateDimension(record.dimension));
        }
        *slot = Some(record.score()?);
    }
    let mut values = [0.0; DIMENSION_COUNT];
    for (dimension, (value, slot)) in Dimension::ALL.iter().zip(values.iter_mut().zip(slots)) {
        *value = slot.ok_or(CdriError::MissingDimension(*dimension))?;
    }
    ResilienceVector::new(first.year, values, Provenance::ExpertLevel)
}

/// Validated questionnaire panel.
///
/// Records are kept sorted by (expert, year, dimension) and every
/// (expert, year) pair covers all five dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelDataset {
    records: Vec<AssessmentRecord>,
    years: Vec<i32>,
    experts: Vec<String>,
}

impl PanelDataset {
    pub fn new(records: Vec<AssessmentRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(CdriError::EmptyDataset);
        }
        let mut normalized = Vec::with_capacity(records.len());
        for r in records {
            normalized.push(AssessmentRecord::new(r.expert_id, r.year, r.dimension, r.parameters)?);
        }
        normalized.sort_by(|a, b| {
            (a.expert_id.as_str(), a.year, a.dimension).cmp(&(b.expert_id.as_str(), b.year, b.dimension))
        });

        let mut pairs: BTreeMap<(&str, i32), Vec<Dimension>> = BTreeMap::new();
        for r in &normalized {
            pairs.entry((r.expert_id.as_str(), r.year)).or_default().push(r.dimension);
        }
        for ((expert, year), dims) in &pairs {
            for w in dims.windows(2) {
                if w[0] == w[1] {
                    return Err(CdriError::DuplicateDimension(w[0]));
                }
            }
            if dims.len() != DIMENSION_COUNT {
                return Err(CdriError::IncompletePair {
                    expert: expert.to_string(),
                    year: *year,
                });
            }
        }

        let mut years: Vec<i32> = normalized.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        let mut experts: Vec<String> = normalized.iter().map(|r| r.expert_id.clone()).collect();
        experts.sort();
        experts.dedup();

        Ok(Self {
            records: normalized,
            years,
            experts,
        })
    }

    pub fn records(&self) -> &[AssessmentRecord] {
        &self.records
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn experts(&self) -> &[String] {
        &self.experts
    }

    pub fn records_for<'a>(&'a self, expert: &'a str, year: i32) -> impl Iterator<Item = &'a AssessmentRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.expert_id == expert && r.year == year)
    }

    /// Expert-level vector, or `None` when that expert has no data for `year`.
    pub fn expert_vector(&self, expert: &str, year: i32) -> Result<Option<ResilienceVector>> {
        let records: Vec<&AssessmentRecord> = self.records_for(expert, year).collect();
        if records.is_empty() {
            return Ok(None);
        }
        expert_vector(&records).map(Some)
    }

    /// Keeps only the records for which `keep` holds. Fails if that breaks
    /// the dataset invariants (e.g. nothing left).
    pub fn filtered(&self, keep: impl Fn(&AssessmentRecord) -> bool) -> Result<Self> {
        Self::new(self.records.iter().filter(|r| keep(r)).cloned().collect())
    }
}

impl<'de> Deserialize<'de> for PanelDataset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            records: Vec<AssessmentRecord>,
        }
        let raw = Raw::deserialize(deserializer)?;
        PanelDataset::new(raw.records).map_err(serde::de::Error::custom)
    }
}

/// Unweighted mean of the expert vectors available for `year`.
pub fn aggregate_experts(dataset: &PanelDataset, year: i32) -> Result<ResilienceVector> {
    if !dataset.years().contains(&year) {
        return Err(CdriError::YearAbsent(year));
    }
    let mut sums = [0.0; DIMENSION_COUNT];
    let mut count = 0usize;
    for expert in dataset.experts() {
        if let Some(v) = dataset.expert_vector(expert, year)? {
            for (s, x) in sums.iter_mut().zip(v.values) {
                *s += x;
            }
            count += 1;
        }
    }
    let values = sums.map(|s| s / count as f64);
    ResilienceVector::new(year, values, Provenance::Aggregate)
}

pub const EQUAL_DIMENSION_WEIGHTS: [f64; DIMENSION_COUNT] = [0.2; DIMENSION_COUNT];

/// Weighted mean of the five dimension scores.
pub fn overall_cdri(vector: &ResilienceVector, weights: &[f64; DIMENSION_COUNT]) -> Result<f64> {
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(CdriError::InvalidWeight(w));
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(CdriError::WeightSum(total));
    }
    Ok(weighted_mean(vector.values.iter().copied().zip(weights.iter().copied())))
}
