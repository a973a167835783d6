//! On-disk formats exchanged between stages. Floats are written in their
//! shortest round-trip form so every reader recovers the exact bits.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PriceSeries;
use crate::swvmd::{DatasetSample, FeatureLayout, SwVmdConfig, WindowedFeatures};
use crate::vmd::VmdConfig;

fn load_err(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Load { path: path.to_path_buf(), row, msg: msg.into() }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// `date,close,log_return`; the first row has an empty return.
pub fn write_series_csv(series: &PriceSeries, path: &Path) -> Result<()> {
    let mut out = String::from("date,close,log_return\n");
    for i in 0..series.len() {
        out.push_str(&format!("{},{}", series.dates[i], series.close[i]));
        if i == 0 {
            out.push_str(",\n");
        } else {
            out.push_str(&format!(",{}\n", (series.close[i] / series.close[i - 1]).ln()));
        }
    }
    write_text(path, &out)
}

/// Produced by the decomposition stage next to `features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesMeta {
    /// `close` or `log_return`.
    pub source: String,
    pub swvmd: SwVmdConfig,
    pub vmd: VmdConfig,
    pub rows: usize,
    pub width: usize,
    pub unconverged: usize,
}

pub fn feature_columns(config: &SwVmdConfig) -> Vec<String> {
    let k = config.k;
    let mut cols: Vec<String> = match config.layout {
        FeatureLayout::LastSample => (1..=k).map(|m| format!("imf_{m}")).collect(),
        FeatureLayout::FullWindow => (1..=config.window)
            .flat_map(|s| (1..=k).map(move |m| format!("imf_{m}_s{s}")))
            .collect(),
    };
    cols.extend((1..=k).map(|m| format!("omega_{m}")));
    cols
}

/// `date,imf_1..imf_k,omega_1..omega_k` (full-window layout names each
/// value `imf_<mode>_s<sample>`).
pub fn write_features_csv(features: &WindowedFeatures, config: &SwVmdConfig, path: &Path) -> Result<()> {
    let mut out = String::from("date");
    for c in feature_columns(config) {
        out.push(',');
        out.push_str(&c);
    }
    out.push('\n');
    for i in 0..features.len() {
        out.push_str(&features.dates[i].to_string());
        for v in features.features[i].iter().chain(&features.omegas[i]) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Dates, feature rows and omega rows from a features file.
pub fn read_features_csv(
    path: &Path,
    config: &SwVmdConfig,
) -> Result<(Vec<NaiveDate>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| load_err(path, 0, e.to_string()))?;
    let expected = feature_columns(config);
    let headers = reader.headers().map_err(|e| load_err(path, 0, e.to_string()))?.clone();
    if headers.len() != expected.len() + 1 || headers.iter().skip(1).ne(expected.iter().map(String::as_str)) {
        return Err(load_err(path, 0, "feature columns do not match the sliding-window configuration"));
    }
    let width = config.feature_width();
    let (mut dates, mut rows, mut omegas) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| load_err(path, row, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| load_err(path, row, format!("bad date {:?}: {e}", &rec[0])))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().map_err(|e| load_err(path, row, format!("bad value {f:?}: {e}"))))
            .collect::<Result<_>>()?;
        dates.push(date);
        omegas.push(values[width..].to_vec());
        rows.push(values[..width].to_vec());
    }
    Ok((dates, rows, omegas))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// `rows x cols`, row-major, oldest row first.
    pub input: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Model-space target (normalized close or raw log return).
    pub target: f64,
    pub target_date: NaiveDate,
    pub input_end_date: NaiveDate,
    pub split: SplitName,
    /// Unnormalized close or log return on the target date.
    pub actual: f64,
    /// Close on the trading day before the target date.
    pub prior_close: f64,
}

impl DatasetRecord {
    pub fn from_sample(s: &DatasetSample, split: SplitName, actual: f64, prior_close: f64) -> Self {
        DatasetRecord {
            input: s.input.iter().copied().collect(),
            rows: s.input.nrows(),
            cols: s.input.ncols(),
            target: s.target,
            target_date: s.target_date,
            input_end_date: s.input_end_date,
            split,
            actual,
            prior_close,
        }
    }

    pub fn to_sample(&self) -> Result<DatasetSample> {
        let input = Array2::from_shape_vec((self.rows, self.cols), self.input.clone())
            .map_err(|e| Error::Shape(format!("dataset row for {}: {e}", self.target_date)))?;
        Ok(DatasetSample {
            input,
            target: self.target,
            target_date: self.target_date,
            input_end_date: self.input_end_date,
        })
    }
}

pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| load_err(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}
