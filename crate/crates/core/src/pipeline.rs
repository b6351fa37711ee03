//! The temporal CDRI workflow: dataset -> series -> six fitted models ->
//! horizon forecast -> clamped vectors -> [`PredictionReport`].

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CdriError, Result};
use crate::forecast::linear::{fit_ols, fit_var, predict_ols, predict_var, OlsModel, VarModel};
use crate::forecast::neural::{lstm_predict, lstm_train, LstmConfig, LstmWeights};
use crate::forecast::trees::{
    fit_boost, fit_forest, fit_tree, BoostModel, BoostParams, ForestModel, ForestParams, RegressionTree,
    Regressor, TreeParams,
};
use crate::ingest::{build_series, dataset_fingerprint, SeriesPanel};
use crate::model::{
    aggregate_experts, Dimension, PanelDataset, Provenance, ResilienceVector, DIMENSION_COUNT,
    EQUAL_DIMENSION_WEIGHTS, WEIGHT_TOLERANCE,
};
use crate::rng::{derive_seed, streams};

pub const REPORT_SCHEMA: &str = "cdri-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    DecisionTree,
    RandomForest,
    GradientBoosting,
    Var,
    Lstm,
}

impl ModelKind {
    /// Comparison-table row order.
    pub const ALL: [ModelKind; 6] = [
        ModelKind::LinearRegression,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::Var,
        ModelKind::Lstm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::LinearRegression => "Linear Regression",
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::GradientBoosting => "Gradient Boosting",
            ModelKind::Var => "VAR",
            ModelKind::Lstm => "LSTM",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::Var => "var",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = CdriError;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let alias = match wanted.as_str() {
            "ols" | "lr" | "linear" => "linear_regression",
            "tree" | "dt" => "decision_tree",
            "forest" | "rf" => "random_forest",
            "boost" | "gb" | "gbm" => "gradient_boosting",
            other => other,
        };
        ModelKind::ALL
            .into_iter()
            .find(|k| k.key() == alias)
            .ok_or_else(|| CdriError::InvalidHyperparameter(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmSettings {
    pub hidden: usize,
    pub epochs: usize,
    pub step_size: f64,
}

impl Default for LstmSettings {
    fn default() -> Self {
        let base = LstmConfig::default();
        Self {
            hidden: base.hidden,
            epochs: base.epochs,
            step_size: base.step_size,
        }
    }
}

/// Hyperparameters for all six models. Seeds are not part of the config;
/// they are derived from the run's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
    pub var_ridge: f64,
    pub lstm: LstmSettings,
    pub dimension_weights: [f64; DIMENSION_COUNT],
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            var_ridge: 0.5,
            lstm: LstmSettings::default(),
            dimension_weights: EQUAL_DIMENSION_WEIGHTS,
        }
    }
}

/// Keys accepted by [`ForecastConfig::set`].
pub const CONFIG_KEYS: [&str; 17] = [
    "tree.max_depth",
    "tree.min_samples_leaf",
    "forest.n_trees",
    "forest.bootstrap",
    "forest.max_depth",
    "forest.min_samples_leaf",
    "boost.n_stages",
    "boost.learning_rate",
    "boost.max_depth",
    "boost.min_samples_leaf",
    "var.lambda",
    "lstm.hidden",
    "lstm.epochs",
    "lstm.step_size",
    "cdri.dimension_weights",
    "boost.lr",
    "var.ridge",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CdriError::InvalidHyperparameter(format!("{key}={value}")))
}

fn parse_depth(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "none" | "unlimited" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

impl ForecastConfig {
    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "tree.max_depth" => self.tree.max_depth = parse_depth(key, value)?,
            "tree.min_samples_leaf" => self.tree.min_samples_leaf = parse_value(key, value)?,
            "forest.n_trees" => self.forest.n_trees = parse_value(key, value)?,
            "forest.bootstrap" => self.forest.bootstrap = parse_value(key, value)?,
            "forest.max_depth" => self.forest.tree.max_depth = parse_depth(key, value)?,
            "forest.min_samples_leaf" => self.forest.tree.min_samples_leaf = parse_value(key, value)?,
            "boost.n_stages" => self.boost.n_stages = parse_value(key, value)?,
            "boost.learning_rate" | "boost.lr" => self.boost.learning_rate = parse_value(key, value)?,
            "boost.max_depth" => self.boost.tree.max_depth = parse_depth(key, value)?,
            "boost.min_samples_leaf" => self.boost.tree.min_samples_leaf = parse_value(key, value)?,
            "var.lambda" | "var.ridge" => self.var_ridge = parse_value(key, value)?,
            "lstm.hidden" => self.lstm.hidden = parse_value(key, value)?,
            "lstm.epochs" => self.lstm.epochs = parse_value(key, value)?,
            "lstm.step_size" => self.lstm.step_size = parse_value(key, value)?,
            "cdri.dimension_weights" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| parse_value(key, p))
                    .collect::<Result<_>>()?;
                self.dimension_weights = parts
                    .try_into()
                    .map_err(|_| CdriError::InvalidHyperparameter(format!("{key} needs 5 values")))?;
            }
            other => return Err(CdriError::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies overrides written as `key=value`.
    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self> {
        for item in overrides {
            let item = item.as_ref();
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CdriError::InvalidHyperparameter(format!("{item:?} is not key=value")))?;
            self.set(key, value)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CdriError::InvalidHyperparameter(msg));
        if self.forest.n_trees == 0 {
            return bad("forest.n_trees must be at least 1".into());
        }
        if !(self.boost.learning_rate > 0.0 && self.boost.learning_rate <= 1.0) {
            return bad(format!("boost.learning_rate {} is outside (0, 1]", self.boost.learning_rate));
        }
        if !(self.var_ridge.is_finite() && self.var_ridge >= 0.0) {
            return bad(format!("var.lambda {} must be nonnegative", self.var_ridge));
        }
        if self.lstm.hidden == 0 || !(self.lstm.step_size.is_finite() && self.lstm.step_size > 0.0) {
            return bad("lstm.hidden and lstm.step_size must be positive".into());
        }
        let total: f64 = self.dimension_weights.iter().sum();
        if self.dimension_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (total - 1.0).abs() > WEIGHT_TOLERANCE
        {
            return bad("cdri.dimension_weights must be nonnegative and sum to 1".into());
        }
        Ok(())
    }
}

/// Fitted coefficients, disclosed in full in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "per_dimension", rename_all = "snake_case")]
pub enum FittedModel {
    LinearRegression(Vec<OlsModel>),
    DecisionTree(Vec<RegressionTree>),
    RandomForest(Vec<ForestModel>),
    GradientBoosting(Vec<BoostModel>),
    Var(VarModel),
    Lstm(LstmWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub kind: ModelKind,
    /// Clamped into `[1, 5]`.
    pub prediction: [f64; DIMENSION_COUNT],
    /// True where the raw output fell outside `[1, 5]`.
    pub clamped: [bool; DIMENSION_COUNT],
    pub raw_prediction: [f64; DIMENSION_COUNT],
    pub hyperparameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<FittedModel>,
}

impl ModelPrediction {
    pub fn from_raw(kind: ModelKind, raw: [f64; DIMENSION_COUNT], horizon_year: i32) -> Self {
        let (vector, clamped) = ResilienceVector::clamped(horizon_year, raw, Provenance::Predicted);
        Self {
            kind,
            prediction: vector.values,
            clamped,
            raw_prediction: raw,
            hyperparameters: json!({}),
            model: None,
        }
    }

    pub fn vector(&self, horizon_year: i32) -> ResilienceVector {
        ResilienceVector {
            year: horizon_year,
            values: self.prediction,
            provenance: Provenance::Predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub schema: String,
    pub horizon_year: i32,
    pub models: Vec<ModelPrediction>,
    pub lstm_loss: Vec<f64>,
    pub seed: u64,
    pub dataset_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ForecastConfig>,
}

impl PredictionReport {
    /// Report carrying only predictions, one row per [`ModelKind::ALL`]
    /// entry (used for rendering externally supplied tables).
    pub fn from_rows(horizon_year: i32, rows: [[f64; DIMENSION_COUNT]; 6]) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            horizon_year,
            models: ModelKind::ALL
                .iter()
                .zip(rows)
                .map(|(&kind, raw)| ModelPrediction::from_raw(kind, raw, horizon_year))
                .collect(),
            lstm_loss: Vec::new(),
            seed: 0,
            dataset_fingerprint: String::new(),
            config: None,
        }
    }

    pub fn get(&self, kind: ModelKind) -> Option<&ModelPrediction> {
        self.models.iter().find(|m| m.kind == kind)
    }

    /// Re-applies the clamp to the reported values. Flags from the original
    /// clamp are kept.
    pub fn reclamped(&self) -> Self {
        let mut out = self.clone();
        for m in &mut out.models {
            let (v, flags) = ResilienceVector::clamped(self.horizon_year, m.prediction, Provenance::Predicted);
            m.prediction = v.values;
            for (f, g) in m.clamped.iter_mut().zip(flags) {
                *f |= g;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(CdriError::Schema {
                expected: REPORT_SCHEMA.to_string(),
                found: report.schema,
            });
        }
        Ok(report)
    }
}

/// Tree-family training set for one dimension: one sample per expert-year
/// after the first year, features `[t, previous aggregate score]`.
pub fn tree_samples(panel: &SeriesPanel, dimension: Dimension) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = dimension.index();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rows in &panel.expert_panel {
        for (idx, value) in rows.iter().enumerate().skip(1) {
            if let Some(v) = value {
                x.push(vec![panel.time_index(panel.years[idx]), panel.aggregate[idx - 1][d]]);
                y.push(v[d]);
            }
        }
    }
    (x, y)
}

/// Rolls a lag-feature model forward `steps` steps past the last year.
fn roll_forward<M: Regressor>(model: &M, panel: &SeriesPanel, dimension: Dimension, steps: usize) -> f64 {
    let t_last = panel.time_index(panel.last_year());
    let mut lag = panel.aggregate[panel.len() - 1][dimension.index()];
    for s in 1..=steps {
        lag = model.predict(&[t_last + s as f64, lag]);
    }
    lag
}

struct Fit {
    raw: [f64; DIMENSION_COUNT],
    hyperparameters: serde_json::Value,
    model: FittedModel,
    loss: Vec<f64>,
}

fn per_dimension<M, F>(panel: &SeriesPanel, steps: usize, fit: F) -> Result<(Vec<M>, [f64; DIMENSION_COUNT])>
where
    M: Regressor,
    F: Fn(Dimension, &[Vec<f64>], &[f64]) -> Result<M>,
{
    let mut models = Vec::with_capacity(DIMENSION_COUNT);
    let mut raw = [0.0; DIMENSION_COUNT];
    for d in Dimension::ALL {
        let (x, y) = tree_samples(panel, d);
        let model = fit(d, &x, &y)?;
        raw[d.index()] = roll_forward(&model, panel, d, steps);
        models.push(model);
    }
    Ok((models, raw))
}

fn fit_kind(kind: ModelKind, panel: &SeriesPanel, steps: usize, horizon_t: f64, config: &ForecastConfig, seed: u64) -> Result<Fit> {
    let no_loss = Vec::new;
    match kind {
        ModelKind::LinearRegression => {
            let mut models = Vec::with_capacity(DIMENSION_COUNT);
            let mut raw = [0.0; DIMENSION_COUNT];
            for d in Dimension::ALL {
                let points: Vec<(f64, f64)> = panel
                    .years
                    .iter()
                    .zip(&panel.aggregate)
                    .map(|(&y, row)| (panel.time_index(y), row[d.index()]))
                    .collect();
                let m = fit_ols(d, &points)?;
                raw[d.index()] = predict_ols(&m, horizon_t);
                models.push(m);
            }
            Ok(Fit {
                raw,
                hyperparameters: json!({ "fit": "per-dimension OLS on aggregate series", "time_encoding": "t = (year - first_year) / interval" }),
                model: FittedModel::LinearRegression(models),
                loss: no_loss(),
            })
        }
        ModelKind::DecisionTree => {
            let params = config.tree;
            let (models, raw) = per_dimension(panel, steps, |_, x, y| fit_tree(x, y, params))?;
            Ok(Fit {
                raw,
                hyperparameters: json!({ "max_depth": params.max_depth, "min_samples_leaf": params.min_samples_leaf, "features": ["t", "lag1_aggregate"] }),
                model: FittedModel::DecisionTree(models),
                loss: no_loss(),
            })
        }
        ModelKind::RandomForest => {
            let params = config.forest;
            let forest_seed = derive_seed(seed, streams::FOREST);
            let (models, raw) = per_dimension(panel, steps, |d, x, y| {
                fit_forest(x, y, params, derive_seed(forest_seed, d.index() as u64))
            })?;
            Ok(Fit {
                raw,
                hyperparameters: json!({
                    "n_trees": params.n_trees,
                    "bootstrap": params.bootstrap,
                    "max_depth": params.tree.max_depth,
                    "min_samples_leaf": params.tree.min_samples_leaf,
                    "features": ["t", "lag1_aggregate"],
                    "master_seed": forest_seed,
                }),
                model: FittedModel::RandomForest(models),
                loss: no_loss(),
            })
        }
        ModelKind::GradientBoosting => {
            let params = config.boost;
            let (models, raw) = per_dimension(panel, steps, |_, x, y| fit_boost(x, y, params))?;
            Ok(Fit {
                raw,
                hyperparameters: json!({
                    "n_stages": params.n_stages,
                    "learning_rate": params.learning_rate,
                    "max_depth": params.tree.max_depth,
                    "min_samples_leaf": params.tree.min_samples_leaf,
                    "features": ["t", "lag1_aggregate"],
                }),
                model: FittedModel::GradientBoosting(models),
                loss: no_loss(),
            })
        }
        ModelKind::Var => {
            let model = fit_var(&panel.aggregate, config.var_ridge)?;
            let raw = predict_var(&model, &panel.aggregate[panel.len() - 1], steps);
            Ok(Fit {
                raw,
                hyperparameters: json!({ "lag": 1, "lambda": config.var_ridge, "steps": steps }),
                model: FittedModel::Var(model),
                loss: no_loss(),
            })
        }
        ModelKind::Lstm => {
            let lstm_config = LstmConfig {
                hidden: config.lstm.hidden,
                epochs: config.lstm.epochs,
                step_size: config.lstm.step_size,
                seed: derive_seed(seed, streams::LSTM),
            };
            let model = lstm_train(panel, lstm_config)?;
            let raw = lstm_predict(&model, panel, steps)?;
            Ok(Fit {
                raw,
                hyperparameters: json!({
                    "hidden": lstm_config.hidden,
                    "epochs": lstm_config.epochs,
                    "step_size": lstm_config.step_size,
                    "seed": lstm_config.seed,
                    "scaling": "(x - 1) / 4",
                    "steps": steps,
                }),
                loss: model.loss_history,
                model: FittedModel::Lstm(model.weights),
            })
        }
    }
}

/// Fits all six models on `dataset` and forecasts the vector for
/// `horizon_year`.
pub fn run_forecast(dataset: &PanelDataset, horizon_year: i32, config: &ForecastConfig, seed: u64) -> Result<PredictionReport> {
    config.validate()?;
    let panel = build_series(dataset)?;
    let steps = panel.steps_to(horizon_year)?;
    let horizon_t = panel.time_index(horizon_year);
    let fits = ModelKind::ALL
        .par_iter()
        .map(|&kind| fit_kind(kind, &panel, steps, horizon_t, config, seed).map(|f| (kind, f)))
        .collect::<Result<Vec<_>>>()?;

    let mut lstm_loss = Vec::new();
    let models = fits
        .into_iter()
        .map(|(kind, fit)| {
            if kind == ModelKind::Lstm {
                lstm_loss = fit.loss;
            }
            let mut entry = ModelPrediction::from_raw(kind, fit.raw, horizon_year);
            entry.hyperparameters = fit.hyperparameters;
            entry.model = Some(fit.model);
            entry
        })
        .collect();

    Ok(PredictionReport {
        schema: REPORT_SCHEMA.to_string(),
        horizon_year,
        models,
        lstm_loss,
        seed,
        dataset_fingerprint: dataset_fingerprint(dataset),
        config: Some(config.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestEntry {
    pub kind: ModelKind,
    pub prediction: [f64; DIMENSION_COUNT],
    pub abs_error: [f64; DIMENSION_COUNT],
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub held_out_year: i32,
    pub actual: [f64; DIMENSION_COUNT],
    pub models: Vec<BacktestEntry>,
    pub seed: u64,
}

/// Trains on every year but the last, forecasts the last year and scores
/// the (clamped) forecasts against its aggregate vector.
pub fn backtest(dataset: &PanelDataset, config: &ForecastConfig, seed: u64) -> Result<BacktestReport> {
    let years = dataset.years();
    if years.len() < 3 {
        return Err(CdriError::TooFewYears {
            needed: 3,
            found: years.len(),
        });
    }
    let held_out = *years.last().expect("non-empty");
    let training = dataset.filtered(|r| r.year != held_out)?;
    let actual = aggregate_experts(dataset, held_out)?.values;
    let report = run_forecast(&training, held_out, config, seed)?;
    let models = report
        .models
        .iter()
        .map(|m| {
            let abs_error: [f64; DIMENSION_COUNT] = std::array::from_fn(|d| (m.prediction[d] - actual[d]).abs());
            BacktestEntry {
                kind: m.kind,
                prediction: m.prediction,
                abs_error,
                mean_abs_error: abs_error.iter().sum::<f64>() / DIMENSION_COUNT as f64,
            }
        })
        .collect();
    Ok(BacktestReport {
        held_out_year: held_out,
        actual,
        models,
        seed,
    })
}
