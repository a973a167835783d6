//! Loading daily price files, log returns, z-score normalization and
//! chronological train/validation/test splits.

use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily observations for one instrument, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub close: Vec<f64>,
    pub pre_close: Option<Vec<f64>>,
    pub turnover: Option<Vec<f64>>,
}

impl PriceSeries {
    /// Builds a series from closes alone, checking the invariants.
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        let series = PriceSeries {
            name: name.into(),
            dates,
            close,
            pre_close: None,
            turnover: None,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.close.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.close.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "price series needs at least 2 rows, got {n}"
            )));
        }
        let lens_ok = self.dates.len() == n
            && self.pre_close.as_ref().is_none_or(|v| v.len() == n)
            && self.turnover.as_ref().is_none_or(|v| v.len() == n);
        if !lens_ok {
            return Err(Error::Shape("price series columns differ in length".into()));
        }
        if let Some(i) = self.close.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Input(format!(
                "close at index {i} is {} (must be finite and > 0)",
                self.close[i]
            )));
        }
        if let Some(i) = self.dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "dates not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(())
    }
}

/// Log returns aligned to the later date of each pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub r: Vec<f64>,
}

struct RawRow {
    row: usize,
    date: NaiveDate,
    close: f64,
    pre_close: Option<f64>,
    turnover: Option<f64>,
}

/// Reads a `date,close[,pre_close][,turnover]` CSV with ISO-8601 dates.
///
/// Extra columns are ignored and rows are returned sorted by date. Row
/// numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let load_err = |row: usize, msg: String| Error::Load {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| load_err(0, format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
    };
    let date_col = column("date").ok_or_else(|| load_err(0, "missing `date` column".into()))?;
    let close_col = column("close").ok_or_else(|| load_err(0, "missing `close` column".into()))?;
    let pre_col = column("pre_close");
    let turnover_col = column("turnover");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| load_err(row, e.to_string()))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d")
            .map_err(|e| load_err(row, format!("bad date {:?}: {e}", field(date_col))))?;
        let number = |col: usize, name: &str| -> Result<f64> {
            field(col)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| load_err(row, format!("bad {name} {:?}", field(col))))
        };
        let close = number(close_col, "close")?;
        if close <= 0.0 {
            return Err(load_err(row, format!("non-positive close {close}")));
        }
        let pre_close = pre_col.map(|c| number(c, "pre_close")).transpose()?;
        let turnover = turnover_col.map(|c| number(c, "turnover")).transpose()?;
        rows.push(RawRow { row, date, close, pre_close, turnover });
    }

    rows.sort_by_key(|r| r.date);
    if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(load_err(w[1].row, format!("duplicate date {}", w[1].date)));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = PriceSeries {
        name,
        dates: rows.iter().map(|r| r.date).collect(),
        close: rows.iter().map(|r| r.close).collect(),
        pre_close: pre_col.map(|_| rows.iter().filter_map(|r| r.pre_close).collect()),
        turnover: turnover_col.map(|_| rows.iter().filter_map(|r| r.turnover).collect()),
    };
    series.validate().map_err(|e| load_err(0, e.to_string()))?;
    Ok(series)
}

/// Writes a series in the same schema `load_csv` reads.
pub fn write_csv(series: &PriceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("date,close");
    if series.pre_close.is_some() {
        out.push_str(",pre_close");
    }
    if series.turnover.is_some() {
        out.push_str(",turnover");
    }
    out.push('\n');
    for i in 0..series.len() {
        out.push_str(&format!("{},{}", series.dates[i], series.close[i]));
        if let Some(p) = &series.pre_close {
            out.push_str(&format!(",{}", p[i]));
        }
        if let Some(t) = &series.turnover {
            out.push_str(&format!(",{}", t[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `r_t = ln(P_t / P_{t-1})` for every consecutive pair of closes.
pub fn log_returns(series: &PriceSeries) -> Result<ReturnSeries> {
    let r = log_returns_of(&series.close)?;
    Ok(ReturnSeries {
        dates: series.dates[1..].to_vec(),
        r,
    })
}

pub fn log_returns_of(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "log returns need at least 2 prices, got {}",
            prices.len()
        )));
    }
    let r: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite log return at index {}", i + 1)));
    }
    Ok(r)
}

/// Per-feature z-score parameters plus the clipping threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub clip_sigma: f64,
}

pub const DEFAULT_CLIP_SIGMA: f64 = 3.0;

/// Fits mean and population standard deviation per column over the given
/// (training) rows.
pub fn fit_normalizer(train: ArrayView2<f64>, clip_sigma: f64) -> Result<NormalizationParams> {
    if train.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalizer needs at least 2 rows, got {}",
            train.nrows()
        )));
    }
    if !(clip_sigma > 0.0) {
        return Err(Error::Config(format!("clip_sigma must be > 0, got {clip_sigma}")));
    }
    let n = train.nrows() as f64;
    let mut mean = Vec::with_capacity(train.ncols());
    let mut std = Vec::with_capacity(train.ncols());
    for (j, col) in train.axis_iter(Axis(1)).enumerate() {
        let m = col.sum() / n;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = var.sqrt();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateFeature { index: j });
        }
        mean.push(m);
        std.push(s);
    }
    Ok(NormalizationParams { mean, std, clip_sigma })
}

impl NormalizationParams {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.n_features() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} features, got {width}",
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Z-scores without clipping.
    pub fn standardize_value(&self, feature: usize, x: f64) -> f64 {
        (x - self.mean[feature]) / self.std[feature]
    }

    pub fn denormalize_value(&self, feature: usize, z: f64) -> f64 {
        z * self.std[feature] + self.mean[feature]
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// `(x - mean) / std` per column, then clipped to `±clip_sigma`.
pub fn normalize(features: ArrayView2<f64>, params: &NormalizationParams) -> Result<Array2<f64>> {
    params.check_width(features.ncols())?;
    let lim = params.clip_sigma;
    let mut out = features.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = (params.mean[j], params.std[j]);
        col.mapv_inplace(|x| ((x - m) / s).clamp(-lim, lim));
    }
    Ok(out)
}

pub fn denormalize(z: ArrayView2<f64>, params: &NormalizationParams) -> Result<Array2<f64>> {
    params.check_width(z.ncols())?;
    let mut out = z.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = (params.mean[j], params.std[j]);
        col.mapv_inplace(|v| v * s + m);
    }
    Ok(out)
}

/// Trailing test block and the validation block just before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_len: usize,
    pub val_len: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { test_len: 60, val_len: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split(series_len: usize, spec: SplitSpec) -> Result<Splits> {
    let held_out = spec.val_len + spec.test_len;
    if series_len <= held_out {
        return Err(Error::InsufficientData(format!(
            "{series_len} points leave no training data after {} validation and {} test points",
            spec.val_len, spec.test_len
        )));
    }
    let train_end = series_len - held_out;
    let val_end = train_end + spec.val_len;
    Ok(Splits {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..series_len,
    })
}
