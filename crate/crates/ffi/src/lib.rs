//! C ABI over the `cdri` library.
//!
//! Conventions:
//! - every fallible function returns a [`CdriStatus`]; results are written
//!   through out-pointers only on success;
//! - datasets and reports are opaque handles, released with their `_free`
//!   function;
//! - strings returned to the caller are NUL-terminated, UTF-8 and must be
//!   released with [`cdri_string_free`];
//! - after a failure, [`cdri_last_error`] describes it (per thread).
//!
//! Panics never cross the boundary; they are reported as `CDRI_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdri::ingest::{dataset_from_json, generate_synthetic, parse_assessment_csv, SynthConfig};
use cdri::pipeline::{run_forecast, ForecastConfig, PredictionReport};
use cdri::report::{render_grouped_bars, render_loss_curve, render_spider, render_table, report_vectors, TableFormat};
use cdri::{aggregate_experts, dimension_score, overall_cdri, CdriError, PanelDataset, ParameterScore, Provenance, ResilienceVector};

/// Number of resilience dimensions in every vector.
pub const CDRI_DIMENSION_COUNT: usize = 5;
/// Number of models in every forecast report.
pub const CDRI_MODEL_COUNT: usize = 6;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdriStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ValidationFailed = 4,
    InvalidHorizon = 5,
    Numerical = 6,
    OutOfRange = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdriFormat {
    Markdown = 0,
    Csv = 1,
    Spider = 2,
    Bars = 3,
    Loss = 4,
}

/// Immutable assessment panel.
pub struct CdriDataset(PanelDataset);

/// Immutable forecast report.
pub struct CdriReport(PredictionReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(CdriStatus, String);

impl From<CdriError> for Failure {
    fn from(e: CdriError) -> Self {
        let status = match &e {
            CdriError::InvalidHorizon { .. } | CdriError::YearAbsent(_) | CdriError::TooFewYears { .. } => {
                CdriStatus::InvalidHorizon
            }
            CdriError::SingularDesign | CdriError::InvalidRidge(_) => CdriStatus::Numerical,
            CdriError::ScoreOutOfRange(_) | CdriError::TooManySeries(_) => CdriStatus::OutOfRange,
            CdriError::Validation(_)
            | CdriError::IncompletePair { .. }
            | CdriError::EmptyDataset
            | CdriError::Schema { .. }
            | CdriError::Json(_)
            | CdriError::Csv(_)
            | CdriError::IrregularYears(_) => CdriStatus::ValidationFailed,
            _ => CdriStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CdriStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CdriStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            CdriStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CdriStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CdriStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read5(p: *const f64, what: &str) -> Result<[f64; 5], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut out = [0.0; 5];
    out.copy_from_slice(std::slice::from_raw_parts(p, 5));
    Ok(out)
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(text: String) -> Result<*mut c_char, Failure> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Failure(CdriStatus::InvalidArgument, "output contains a NUL byte".into()))
}

fn dataset_handle(dataset: PanelDataset) -> *mut CdriDataset {
    Box::into_raw(Box::new(CdriDataset(dataset)))
}

unsafe fn dataset_ref<'a>(p: *const CdriDataset) -> Result<&'a PanelDataset, Failure> {
    p.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

unsafe fn report_ref<'a>(p: *const CdriReport) -> Result<&'a PredictionReport, Failure> {
    p.as_ref().map(|r| &r.0).ok_or_else(|| null("report"))
}

/// Message for the most recent failure on this thread ("" after a
/// success). The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cdri_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses assessment CSV text into a dataset.
///
/// # Safety
/// `csv_text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_from_csv(csv_text: *const c_char, out: *mut *mut CdriDataset) -> CdriStatus {
    guard(|| {
        let text = read_str(csv_text, "csv_text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        match parse_assessment_csv(text.as_bytes()) {
            Ok((dataset, _)) => write_out(out, dataset_handle(dataset), "out"),
            Err(report) => Err(Failure(CdriStatus::ValidationFailed, report.summary_limited(20))),
        }
    })
}

/// Loads a `cdri-dataset/1` JSON archive.
///
/// # Safety
/// `json_text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_from_json(json_text: *const c_char, out: *mut *mut CdriDataset) -> CdriStatus {
    guard(|| {
        let text = read_str(json_text, "json_text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dataset = dataset_from_json(text)?;
        write_out(out, dataset_handle(dataset), "out")
    })
}

/// Generates a seeded synthetic panel with the same base, slope and noise
/// in every dimension.
///
/// # Safety
/// `years` must point to `year_count` integers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_synthetic(
    experts: usize,
    years: *const i32,
    year_count: usize,
    base: f64,
    slope: f64,
    noise: f64,
    seed: u64,
    out: *mut *mut CdriDataset,
) -> CdriStatus {
    guard(|| {
        if years.is_null() && year_count > 0 {
            return Err(null("years"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let years = if year_count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(years, year_count).to_vec()
        };
        let dataset = generate_synthetic(&SynthConfig {
            experts,
            years,
            base: [base; 5],
            slope: [slope; 5],
            noise,
            shock: None,
            seed,
        })?;
        write_out(out, dataset_handle(dataset), "out")
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from a `cdri_dataset_*` constructor and not have
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_free(dataset: *mut CdriDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of distinct assessment years.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_year_count(dataset: *const CdriDataset, out: *mut usize) -> CdriStatus {
    guard(|| write_out(out, dataset_ref(dataset)?.years().len(), "out"))
}

/// Assessment year at `index` (ascending order).
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dataset_year(dataset: *const CdriDataset, index: usize, out: *mut i32) -> CdriStatus {
    guard(|| {
        let years = dataset_ref(dataset)?.years();
        let year = *years
            .get(index)
            .ok_or_else(|| Failure(CdriStatus::OutOfRange, format!("year index {index} >= {}", years.len())))?;
        write_out(out, year, "out")
    })
}

/// Expert-mean vector for `year`, written to `out[0..5]`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must hold 5 doubles.
#[no_mangle]
pub unsafe extern "C" fn cdri_aggregate(dataset: *const CdriDataset, year: i32, out: *mut f64) -> CdriStatus {
    guard(|| {
        let vector = aggregate_experts(dataset_ref(dataset)?, year)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 5).copy_from_slice(&vector.values);
        Ok(())
    })
}

/// Weighted mean of five parameter scores (weights must sum to 1).
///
/// # Safety
/// `scores` and `weights` must hold 5 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_dimension_score(scores: *const f64, weights: *const f64, out: *mut f64) -> CdriStatus {
    guard(|| {
        let scores = read5(scores, "scores")?;
        let weights = read5(weights, "weights")?;
        let params: Vec<ParameterScore> = (0..5)
            .map(|i| ParameterScore::new(i as u8 + 1, scores[i], weights[i]))
            .collect();
        write_out(out, dimension_score(&params)?, "out")
    })
}

/// Overall index of a dimension vector. `weights` may be null for equal
/// weights.
///
/// # Safety
/// `vector` must hold 5 doubles, `weights` 5 doubles or null; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_overall(vector: *const f64, weights: *const f64, out: *mut f64) -> CdriStatus {
    guard(|| {
        let values = read5(vector, "vector")?;
        let weights = if weights.is_null() { [0.2; 5] } else { read5(weights, "weights")? };
        let v = ResilienceVector::new(0, values, Provenance::Aggregate)?;
        write_out(out, overall_cdri(&v, &weights)?, "out")
    })
}

/// Fits all six models and forecasts `horizon_year`. `overrides` is an
/// optional array of `key=value` hyperparameter strings.
///
/// # Safety
/// `dataset` must be a live handle; `overrides` must point to
/// `override_count` NUL-terminated strings (or be null when the count is
/// 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_forecast(
    dataset: *const CdriDataset,
    horizon_year: i32,
    seed: u64,
    overrides: *const *const c_char,
    override_count: usize,
    out: *mut *mut CdriReport,
) -> CdriStatus {
    guard(|| {
        let dataset = dataset_ref(dataset)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut items = Vec::with_capacity(override_count);
        if override_count > 0 {
            if overrides.is_null() {
                return Err(null("overrides"));
            }
            for &p in std::slice::from_raw_parts(overrides, override_count) {
                items.push(read_str(p, "override")?);
            }
        }
        let config = ForecastConfig::default().with_overrides(&items)?;
        let report = run_forecast(dataset, horizon_year, &config, seed)?;
        write_out(out, Box::into_raw(Box::new(CdriReport(report))), "out")
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from [`cdri_forecast`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cdri_report_free(report: *mut CdriReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Clamped prediction of model `model_index` (table row order) into
/// `out[0..5]`; clamp flags into `clamped[0..5]` when not null.
///
/// # Safety
/// `report` must be a live handle; `out` must hold 5 doubles and
/// `clamped` 5 bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn cdri_report_prediction(
    report: *const CdriReport,
    model_index: usize,
    out: *mut f64,
    clamped: *mut u8,
) -> CdriStatus {
    guard(|| {
        let report = report_ref(report)?;
        let m = report
            .models
            .get(model_index)
            .ok_or_else(|| Failure(CdriStatus::OutOfRange, format!("model index {model_index} >= {}", report.models.len())))?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 5).copy_from_slice(&m.prediction);
        if !clamped.is_null() {
            for (slot, flag) in std::slice::from_raw_parts_mut(clamped, 5).iter_mut().zip(m.clamped) {
                *slot = u8::from(flag);
            }
        }
        Ok(())
    })
}

/// Horizon year of a report.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_report_horizon(report: *const CdriReport, out: *mut i32) -> CdriStatus {
    guard(|| write_out(out, report_ref(report)?.horizon_year, "out"))
}

/// Display label of model `model_index` ("Linear Regression", ...), or
/// null when out of range. The string is static.
#[no_mangle]
pub extern "C" fn cdri_model_label(model_index: usize) -> *const c_char {
    const LABELS: [&CStr; CDRI_MODEL_COUNT] = [
        c"Linear Regression",
        c"Decision Tree",
        c"Random Forest",
        c"Gradient Boosting",
        c"VAR",
        c"LSTM",
    ];
    LABELS.get(model_index).map_or(ptr::null(), |s| s.as_ptr())
}

/// Full `cdri-report/1` JSON. Free the result with [`cdri_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_report_json(report: *const CdriReport, out: *mut *mut c_char) -> CdriStatus {
    guard(|| {
        let text = report_ref(report)?.to_json()?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, into_c_string(text)?, "out")
    })
}

/// Renders a table or SVG chart. Free the result with
/// [`cdri_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdri_report_render(
    report: *const CdriReport,
    format: CdriFormat,
    out: *mut *mut c_char,
) -> CdriStatus {
    guard(|| {
        let report = report_ref(report)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = match format {
            CdriFormat::Markdown => render_table(report, TableFormat::Markdown),
            CdriFormat::Csv => render_table(report, TableFormat::Csv),
            CdriFormat::Spider => render_spider(&report_vectors(report))?.text,
            CdriFormat::Bars => render_grouped_bars(report).text,
            CdriFormat::Loss => render_loss_curve(&report.lstm_loss)?.text,
        };
        write_out(out, into_c_string(text)?, "out")
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cdri_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
