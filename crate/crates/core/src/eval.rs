//! Trend classification of (predicted) log returns, accuracy reports and
//! model-vs-model comparison documents.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::LossHistory;

/// Returns strictly below this are a down move.
pub const DOWN_BELOW: f64 = -0.01;
/// Returns at or above this are an up move.
pub const UP_FROM: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendLabel {
    Down,
    Flat,
    Up,
}

impl TrendLabel {
    pub const ALL: [TrendLabel; 3] = [TrendLabel::Down, TrendLabel::Flat, TrendLabel::Up];

    /// Row/column index in a confusion matrix.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrendLabel::Down => "down",
            TrendLabel::Flat => "flat",
            TrendLabel::Up => "up",
        }
    }
}

impl fmt::Display for TrendLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrendLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "down" => Ok(TrendLabel::Down),
            "flat" => Ok(TrendLabel::Flat),
            "up" => Ok(TrendLabel::Up),
            other => Err(Error::Input(format!("unknown trend label {other:?}"))),
        }
    }
}

pub fn classify_trend(r: f64) -> Result<TrendLabel> {
    if !r.is_finite() {
        return Err(Error::Input(format!("cannot classify non-finite return {r}")));
    }
    Ok(if r < DOWN_BELOW {
        TrendLabel::Down
    } else if r < UP_FROM {
        TrendLabel::Flat
    } else {
        TrendLabel::Up
    })
}

pub fn classify_returns(r: &[f64]) -> Result<Vec<TrendLabel>> {
    r.iter().map(|&v| classify_trend(v)).collect()
}

/// Labels `ln(predicted_t / prior_actual_t)`.
pub fn price_to_trend(predicted: &[f64], prior_actual: &[f64]) -> Result<Vec<TrendLabel>> {
    if predicted.len() != prior_actual.len() {
        return Err(Error::Alignment(format!(
            "{} predicted prices against {} prior prices",
            predicted.len(),
            prior_actual.len()
        )));
    }
    predicted
        .iter()
        .zip(prior_actual)
        .map(|(&p, &prev)| {
            if !(p > 0.0 && prev > 0.0) || !p.is_finite() || !prev.is_finite() {
                return Err(Error::Input(format!("non-positive price pair ({p}, {prev})")));
            }
            classify_trend((p / prev).ln())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub model_id: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy_pct: f64,
    /// Confusion counts, rows actual and columns predicted, both in
    /// down, flat, up order.
    pub per_class: [[usize; 3]; 3],
}

impl AccuracyReport {
    /// Count of actual labels per class.
    pub fn actual_counts(&self) -> [usize; 3] {
        self.per_class.map(|row| row.iter().sum())
    }

    pub fn trace(&self) -> usize {
        (0..3).map(|i| self.per_class[i][i]).sum()
    }
}

pub fn accuracy(model_id: &str, predicted: &[TrendLabel], actual: &[TrendLabel]) -> Result<AccuracyReport> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::Alignment(format!(
            "accuracy needs equal non-empty label lists, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let mut per_class = [[0usize; 3]; 3];
    for (p, a) in predicted.iter().zip(actual) {
        per_class[a.index()][p.index()] += 1;
    }
    let total = predicted.len();
    let correct = (0..3).map(|i| per_class[i][i]).sum();
    Ok(AccuracyReport {
        model_id: model_id.to_string(),
        total,
        correct,
        accuracy_pct: 100.0 * correct as f64 / total as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub model_id: String,
    /// `train` or `val`.
    pub split: String,
    pub mse: f64,
}

/// Long-format loss rows on a shared 1-based epoch axis; validation rows
/// are omitted for epochs without a validation loss.
pub fn loss_points(model_id: &str, history: &LossHistory) -> Vec<LossPoint> {
    let mut out = Vec::with_capacity(2 * history.epochs());
    for (e, (&t, &v)) in history.train_mse.iter().zip(&history.val_mse).enumerate() {
        let point = |split: &str, mse| LossPoint { epoch: e + 1, model_id: model_id.into(), split: split.into(), mse };
        out.push(point("train", t));
        if !v.is_nan() {
            out.push(point("val", v));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub total: usize,
    pub accuracy_a_pct: f64,
    pub accuracy_b_pct: f64,
    /// `b - a`, percentage points.
    pub accuracy_delta_pct: f64,
    /// `b - a`, samples.
    pub correct_delta: i64,
    pub epochs_a: usize,
    pub epochs_b: usize,
    pub best_epoch_a: usize,
    pub best_epoch_b: usize,
    pub loss_curves: Vec<LossPoint>,
}

/// Both reports must cover the same samples: equal totals and equal
/// actual-label counts.
pub fn compare(a: &AccuracyReport, b: &AccuracyReport, history_a: &LossHistory, history_b: &LossHistory) -> Result<Comparison> {
    if a.total != b.total || a.actual_counts() != b.actual_counts() {
        return Err(Error::Comparison(format!(
            "{} and {} were scored on different samples ({} vs {} rows, actual classes {:?} vs {:?})",
            a.model_id,
            b.model_id,
            a.total,
            b.total,
            a.actual_counts(),
            b.actual_counts()
        )));
    }
    let mut loss_curves = loss_points(&a.model_id, history_a);
    loss_curves.extend(loss_points(&b.model_id, history_b));
    loss_curves.sort_by(|x, y| x.epoch.cmp(&y.epoch));
    Ok(Comparison {
        model_a: a.model_id.clone(),
        model_b: b.model_id.clone(),
        total: a.total,
        accuracy_a_pct: a.accuracy_pct,
        accuracy_b_pct: b.accuracy_pct,
        accuracy_delta_pct: b.accuracy_pct - a.accuracy_pct,
        correct_delta: b.correct as i64 - a.correct as i64,
        epochs_a: history_a.epochs(),
        epochs_b: history_b.epochs(),
        best_epoch_a: history_a.best_epoch + 1,
        best_epoch_b: history_b.best_epoch + 1,
        loss_curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub date: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
    pub actual_label: TrendLabel,
    pub predicted_label: TrendLabel,
}

pub fn write_predictions_csv(rows: &[PredictionRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("date,actual,predicted,actual_label,predicted_label\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.date.format("%Y-%m-%d"),
            r.actual,
            r.predicted,
            r.actual_label,
            r.predicted_label
        ));
    }
    write_text(path.as_ref(), &out)
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        row: 0,
        msg: e.to_string(),
    })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Load { path: path.to_path_buf(), row: i + 1, msg: e.to_string() })
        })
        .collect()
}

pub fn loss_curves_csv(points: &[LossPoint]) -> String {
    let mut out = String::from("epoch,model_id,split,mse\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.epoch, p.model_id, p.split, p.mse));
    }
    out
}

pub fn write_loss_curves_csv(points: &[LossPoint], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &loss_curves_csv(points))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
