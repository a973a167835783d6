//! Sliding-window decomposition features and supervised sample assembly.
//!
//! Every produced day `t` is decomposed from the trailing window ending at
//! `t`, so no feature row ever sees data dated after its own day.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vmd::{vmd_decompose, VmdConfig, VmdOutput};

/// What each decomposed window contributes to its day's feature vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// The most recent sample of each mode: `k` values per day.
    #[default]
    LastSample,
    /// The whole decomposed window, time-major: `window * k` values per day.
    FullWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwVmdConfig {
    pub window: usize,
    pub k: usize,
    pub step: usize,
    pub lookback: usize,
    pub horizon: usize,
    #[serde(default)]
    pub layout: FeatureLayout,
}

impl Default for SwVmdConfig {
    fn default() -> Self {
        SwVmdConfig {
            window: 32,
            k: 5,
            step: 1,
            lookback: 16,
            horizon: 1,
            layout: FeatureLayout::LastSample,
        }
    }
}

impl SwVmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.window < 2 * self.k || self.step == 0 || self.lookback == 0 || self.horizon == 0 {
            return Err(Error::Config(format!("invalid sliding-window configuration {self:?}")));
        }
        Ok(())
    }

    /// Number of feature rows produced from a series of length `n`.
    pub fn row_count(&self, n: usize) -> usize {
        if n < self.window {
            0
        } else {
            (n - self.window) / self.step + 1
        }
    }

    /// Number of supervised samples obtainable from `rows` feature rows.
    pub fn sample_count(&self, rows: usize) -> usize {
        (rows + 1).saturating_sub(self.lookback + self.horizon)
    }

    /// Source index of the last day in the `i`-th window.
    pub fn window_end(&self, i: usize) -> usize {
        self.window - 1 + i * self.step
    }

    pub fn feature_width(&self) -> usize {
        match self.layout {
            FeatureLayout::LastSample => self.k,
            FeatureLayout::FullWindow => self.k * self.window,
        }
    }

    /// The decomposition settings actually used: `k` comes from here.
    pub fn effective_vmd(&self, vmd: &VmdConfig) -> VmdConfig {
        VmdConfig { k: self.k, ..*vmd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedFeatures {
    pub dates: Vec<NaiveDate>,
    /// Index into the source series of each row's day.
    pub source_index: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub omegas: Vec<Vec<f64>>,
    /// Windows that hit the iteration cap before converging.
    pub unconverged: usize,
}

impl WindowedFeatures {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let w = self.width();
        Array2::from_shape_fn((self.len(), w), |(i, j)| self.features[i][j])
    }

    /// Same rows and dates with the feature values replaced.
    pub fn with_features(&self, m: &Array2<f64>) -> Result<Self> {
        if m.nrows() != self.len() {
            return Err(Error::Shape(format!("{} rows for {} feature days", m.nrows(), self.len())));
        }
        Ok(WindowedFeatures {
            features: m.outer_iter().map(|r| r.to_vec()).collect(),
            ..self.clone()
        })
    }
}

type CacheKey = (Vec<u64>, [u64; 8]);

/// Memoizes window decompositions by window contents and configuration.
///
/// Adjacent windows overlap heavily but VMD has no incremental update, so
/// re-running a pipeline on an extended series is where this pays off.
#[derive(Debug, Default)]
pub struct DecompositionCache {
    entries: Mutex<HashMap<CacheKey, Arc<VmdOutput>>>,
}

impl DecompositionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn decompose(&self, window: &[f64], config: &VmdConfig) -> Result<Arc<VmdOutput>> {
        let key = (window.iter().map(|v| v.to_bits()).collect(), config.fingerprint());
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let out = Arc::new(vmd_decompose(window, config)?);
        self.entries.lock().unwrap().insert(key, Arc::clone(&out));
        Ok(out)
    }
}

pub fn sliding_decompose(
    series: &[f64],
    dates: &[NaiveDate],
    config: &SwVmdConfig,
    vmd_config: &VmdConfig,
) -> Result<WindowedFeatures> {
    sliding_decompose_cached(series, dates, config, vmd_config, &DecompositionCache::new())
}

/// Decomposes every trailing window and keeps each mode's features for the
/// window's last day. Windows run on the rayon pool; rows come back in date
/// order regardless of scheduling.
pub fn sliding_decompose_cached(
    series: &[f64],
    dates: &[NaiveDate],
    config: &SwVmdConfig,
    vmd_config: &VmdConfig,
    cache: &DecompositionCache,
) -> Result<WindowedFeatures> {
    config.validate()?;
    if dates.len() != series.len() {
        return Err(Error::Alignment(format!(
            "{} dates for {} values",
            dates.len(),
            series.len()
        )));
    }
    if series.len() < config.window {
        return Err(Error::InsufficientData(format!(
            "series of {} points is shorter than the {}-day window",
            series.len(),
            config.window
        )));
    }
    let vmd = config.effective_vmd(vmd_config);
    vmd.validate()?;
    let rows = config.row_count(series.len());
    let decomposed: Vec<Arc<VmdOutput>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let end = config.window_end(i);
            cache.decompose(&series[end + 1 - config.window..=end], &vmd)
        })
        .collect::<Result<_>>()?;

    let mut out = WindowedFeatures {
        dates: Vec::with_capacity(rows),
        source_index: Vec::with_capacity(rows),
        features: Vec::with_capacity(rows),
        omegas: Vec::with_capacity(rows),
        unconverged: 0,
    };
    for (i, dec) in decomposed.iter().enumerate() {
        let end = config.window_end(i);
        let row = match config.layout {
            FeatureLayout::LastSample => dec.modes.iter().map(|m| m[m.len() - 1]).collect(),
            FeatureLayout::FullWindow => (0..config.window)
                .flat_map(|s| dec.modes.iter().map(move |m| m[s]))
                .collect(),
        };
        if !dec.converged(&vmd) {
            out.unconverged += 1;
        }
        out.dates.push(dates[end]);
        out.source_index.push(end);
        out.features.push(row);
        out.omegas.push(dec.omegas.clone());
    }
    Ok(out)
}

/// The raw series sampled on the same days a sliding decomposition would
/// produce, as a one-column feature set.
pub fn baseline_features(series: &[f64], dates: &[NaiveDate], config: &SwVmdConfig) -> Result<WindowedFeatures> {
    config.validate()?;
    if dates.len() != series.len() {
        return Err(Error::Alignment(format!("{} dates for {} values", dates.len(), series.len())));
    }
    if series.len() < config.window {
        return Err(Error::InsufficientData(format!(
            "series of {} points is shorter than the {}-day window",
            series.len(),
            config.window
        )));
    }
    let rows = config.row_count(series.len());
    let idx: Vec<usize> = (0..rows).map(|i| config.window_end(i)).collect();
    Ok(WindowedFeatures {
        dates: idx.iter().map(|&t| dates[t]).collect(),
        features: idx.iter().map(|&t| vec![series[t]]).collect(),
        omegas: vec![Vec::new(); rows],
        source_index: idx,
        unconverged: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    /// `lookback x width`, oldest row first.
    pub input: Array2<f64>,
    pub target: f64,
    pub target_date: NaiveDate,
    pub input_end_date: NaiveDate,
}

/// Pairs each run of `lookback` consecutive feature rows with the target
/// `horizon` rows after the last one. `targets[i]` belongs to
/// `features.dates[i]`.
pub fn build_dataset(features: &WindowedFeatures, targets: &[f64], config: &SwVmdConfig) -> Result<Vec<DatasetSample>> {
    config.validate()?;
    if targets.len() != features.len() {
        return Err(Error::Alignment(format!(
            "{} targets for {} feature days",
            targets.len(),
            features.len()
        )));
    }
    let width = features.width();
    let count = config.sample_count(features.len());
    let mut samples = Vec::with_capacity(count);
    for s in 0..count {
        let end = s + config.lookback - 1;
        let target_row = end + config.horizon;
        let input = Array2::from_shape_fn((config.lookback, width), |(r, c)| features.features[s + r][c]);
        samples.push(DatasetSample {
            input,
            target: targets[target_row],
            target_date: features.dates[target_row],
            input_end_date: features.dates[end],
        });
    }
    Ok(samples)
}

pub fn build_baseline_dataset(
    series: &[f64],
    dates: &[NaiveDate],
    targets: &[f64],
    config: &SwVmdConfig,
) -> Result<Vec<DatasetSample>> {
    let features = baseline_features(series, dates, config)?;
    build_dataset(&features, targets, config)
}
