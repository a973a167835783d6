//! The batch experiment: ingest, diagnose, decompose, build datasets,
//! train both models and evaluate them. Each stage reads its predecessors'
//! files from the run directory and writes its own, so running the stages
//! one by one yields the same bytes as [`run`].

mod config;
mod files;
mod manifest;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use config::{DiagnosticsConfig, Preset, RunConfig};
pub use files::{
    feature_columns, read_dataset, read_features_csv, read_json, write_dataset, write_features_csv,
    write_series_csv, DatasetRecord, FeaturesMeta, SplitName,
};
pub use manifest::{hash_artifacts, hash_file, sha256_hex, write_manifest, Artifact, Manifest, Seeds, MANIFEST_FILE};

use crate::diagnostics::{adf_test, hurst_rs, AdfResult, HurstResult};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, classify_returns, classify_trend, compare, price_to_trend, write_json, write_loss_curves_csv,
    write_predictions_csv, Comparison, PredictionRow,
};
use crate::ingest::{fit_normalizer, load_csv, log_returns_of, normalize, split, NormalizationParams, PriceSeries};
use crate::lstm::checkpoint::{load_checkpoint, save_checkpoint};
use crate::lstm::{predict, train, LossHistory};
use crate::swvmd::{baseline_features, build_dataset, sliding_decompose, DatasetSample, WindowedFeatures};

pub const SERIES_FILE: &str = "series.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURES_META_FILE: &str = "features.json";
pub const TARGET_NORMALIZATION_FILE: &str = "normalization_target.json";
pub const MODELS_DIR: &str = "models";
pub const ACCURACY_FILE: &str = "accuracy.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const LOSS_CURVES_FILE: &str = "loss_curves.csv";

/// Environment variable that caps the decomposition worker pool.
pub const WORKERS_ENV: &str = "SWVMD_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Baseline,
    Swvmd,
}

impl ModelId {
    pub const BOTH: [ModelId; 2] = [ModelId::Baseline, ModelId::Swvmd];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Baseline => "baseline",
            ModelId::Swvmd => "swvmd",
        }
    }

    pub fn dataset_file(self) -> String {
        format!("dataset_{}.jsonl", self.as_str())
    }

    pub fn normalization_file(self) -> String {
        format!("normalization_{}.json", self.as_str())
    }

    pub fn predictions_file(self) -> String {
        format!("predictions_{}.csv", self.as_str())
    }

    pub fn model_dir(self, run_dir: &Path) -> PathBuf {
        run_dir.join(MODELS_DIR).join(self.as_str())
    }
}

/// Runs `f` on a rayon pool sized by `SWVMD_WORKERS` when set.
fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(f());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {n}-thread worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// The series a preset models: closes, or log returns dated by their later
/// day. `close_offset` maps an index here to the index of the same day's
/// close.
struct ModelSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    close: Vec<f64>,
    close_offset: usize,
    source: &'static str,
}

fn model_series(series: &PriceSeries, preset: Preset) -> Result<ModelSeries> {
    Ok(match preset {
        Preset::Price => ModelSeries {
            dates: series.dates.clone(),
            values: series.close.clone(),
            close: series.close.clone(),
            close_offset: 0,
            source: "close",
        },
        Preset::Return => ModelSeries {
            dates: series.dates[1..].to_vec(),
            values: log_returns_of(&series.close)?,
            close: series.close.clone(),
            close_offset: 1,
            source: "log_return",
        },
    })
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}

fn read_series(config: &RunConfig) -> Result<PriceSeries> {
    load_csv(out_path(config, SERIES_FILE))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Copies the input into `series.csv` with its log returns.
pub fn stage_ingest(config: &RunConfig) -> Result<PriceSeries> {
    let inner = || -> Result<_> {
        config.validate()?;
        let series = load_csv(&config.input)?;
        create_dir(&config.output_dir)?;
        write_series_csv(&series, &out_path(config, SERIES_FILE))?;
        Ok(series)
    };
    inner().map_err(|e| e.in_stage("ingest"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub name: String,
    pub n: usize,
    pub adf: Option<AdfResult>,
    pub adf_error: Option<String>,
    pub hurst: Option<HurstResult>,
    pub hurst_error: Option<String>,
}

fn diagnose_series(name: &str, values: &[f64], config: &DiagnosticsConfig) -> SeriesDiagnostics {
    let (adf, adf_error) = match adf_test(values, config.adf_max_lags) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (hurst, hurst_error) = match hurst_rs(values, config.hurst_min_window) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SeriesDiagnostics { name: name.into(), n: values.len(), adf, adf_error, hurst, hurst_error }
}

/// ADF and Hurst reports for the close and log-return series. Tests that
/// cannot run on the data are reported with their error instead.
pub fn stage_diagnose(config: &RunConfig) -> Result<Vec<SeriesDiagnostics>> {
    let inner = || -> Result<_> {
        config.validate_settings()?;
        let series = read_series(config)?;
        let r = log_returns_of(&series.close)?;
        let report = vec![
            diagnose_series("close", &series.close, &config.diagnostics),
            diagnose_series("log_return", &r, &config.diagnostics),
        ];
        write_json(&report, &out_path(config, DIAGNOSTICS_FILE))?;
        Ok(report)
    };
    inner().map_err(|e| e.in_stage("diagnose"))
}

/// Sliding-window decomposition of the preset's series into `features.csv`.
pub fn stage_decompose(config: &RunConfig) -> Result<FeaturesMeta> {
    let inner = || -> Result<_> {
        config.validate_settings()?;
        let ms = model_series(&read_series(config)?, config.preset)?;
        let vmd = config.swvmd.effective_vmd(&config.vmd);
        let wf = with_workers(|| sliding_decompose(&ms.values, &ms.dates, &config.swvmd, &vmd))??;
        write_features_csv(&wf, &config.swvmd, &out_path(config, FEATURES_FILE))?;
        let meta = FeaturesMeta {
            source: ms.source.into(),
            swvmd: config.swvmd,
            vmd,
            rows: wf.len(),
            width: wf.width(),
            unconverged: wf.unconverged,
        };
        write_json(&meta, &out_path(config, FEATURES_META_FILE))?;
        Ok(meta)
    };
    inner().map_err(|e| e.in_stage("decompose"))
}

fn load_features(config: &RunConfig, ms: &ModelSeries) -> Result<WindowedFeatures> {
    let meta: FeaturesMeta = read_json(&out_path(config, FEATURES_META_FILE))?;
    let vmd = config.swvmd.effective_vmd(&config.vmd);
    if meta.swvmd != config.swvmd || meta.vmd != vmd || meta.source != ms.source {
        return Err(Error::Config(
            "features.csv was produced with a different decomposition configuration or preset".into(),
        ));
    }
    let (dates, features, omegas) = read_features_csv(&out_path(config, FEATURES_FILE), &config.swvmd)?;
    let source_index: Vec<usize> = (0..config.swvmd.row_count(ms.values.len()))
        .map(|i| config.swvmd.window_end(i))
        .collect();
    let expected: Vec<NaiveDate> = source_index.iter().map(|&t| ms.dates[t]).collect();
    if dates != expected || meta.rows != dates.len() {
        return Err(Error::Alignment("features.csv dates do not match the series windows".into()));
    }
    Ok(WindowedFeatures { dates, source_index, features, omegas, unconverged: meta.unconverged })
}

fn fit_rows(m: &Array2<f64>, rows: usize, clip: f64) -> Result<NormalizationParams> {
    fit_normalizer(m.slice(ndarray::s![..rows, ..]), clip)
}

/// Normalized SW-VMD and baseline datasets with identical sample geometry.
/// Normalizers are fitted on the feature rows seen by training inputs and,
/// for the price preset, on training targets.
pub fn stage_build_dataset(config: &RunConfig) -> Result<[Vec<DatasetRecord>; 2]> {
    let inner = || -> Result<_> {
        config.validate_settings()?;
        let ms = model_series(&read_series(config)?, config.preset)?;
        let sw = load_features(config, &ms)?;
        let base = baseline_features(&ms.values, &ms.dates, &config.swvmd)?;
        let cfg = &config.swvmd;
        let n_samples = cfg.sample_count(sw.len());
        let splits = split(n_samples, config.split)?;
        let input_rows = splits.train.end - 1 + cfg.lookback;
        let target_row = |s: usize| s + cfg.lookback - 1 + cfg.horizon;

        let raw: Vec<f64> = sw.source_index.iter().map(|&t| ms.values[t]).collect();
        let targets: Vec<f64> = match config.preset {
            Preset::Price => {
                let train_targets = Array2::from_shape_fn((splits.train.len(), 1), |(s, _)| raw[target_row(s)]);
                let tn = fit_normalizer(train_targets.view(), config.clip_sigma)?;
                tn.save_json(out_path(config, TARGET_NORMALIZATION_FILE))?;
                raw.iter().map(|&v| tn.standardize_value(0, v)).collect()
            }
            Preset::Return => raw.clone(),
        };

        let mut out: [Vec<DatasetRecord>; 2] = [Vec::new(), Vec::new()];
        for (slot, (id, wf)) in ModelId::BOTH.into_iter().zip([&base, &sw]).enumerate() {
            let m = wf.to_matrix();
            let norm = fit_rows(&m, input_rows, config.clip_sigma)?;
            norm.save_json(out_path(config, &id.normalization_file()))?;
            let samples = build_dataset(&wf.with_features(&normalize(m.view(), &norm)?)?, &targets, cfg)?;
            let records: Vec<DatasetRecord> = samples
                .iter()
                .enumerate()
                .map(|(s, sample)| {
                    let split = if splits.train.contains(&s) {
                        SplitName::Train
                    } else if splits.val.contains(&s) {
                        SplitName::Val
                    } else {
                        SplitName::Test
                    };
                    let t = wf.source_index[target_row(s)] + ms.close_offset;
                    DatasetRecord::from_sample(sample, split, raw[target_row(s)], ms.close[t - 1])
                })
                .collect();
            write_dataset(&records, &out_path(config, &id.dataset_file()))?;
            out[slot] = records;
        }
        let geometry = |r: &[DatasetRecord]| r.iter().map(|x| (x.input_end_date, x.target_date)).collect::<Vec<_>>();
        if geometry(&out[0]) != geometry(&out[1]) {
            return Err(Error::Alignment("baseline and SW-VMD datasets differ in sample dates".into()));
        }
        Ok(out)
    };
    inner().map_err(|e| e.in_stage("build-dataset"))
}

fn samples_of(records: &[DatasetRecord], split: SplitName) -> Result<Vec<DatasetSample>> {
    records.iter().filter(|r| r.split == split).map(DatasetRecord::to_sample).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_id: ModelId,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs: usize,
    /// 1-based.
    pub best_epoch: usize,
    pub best_train_mse: f64,
    pub best_val_mse: Option<f64>,
    /// Learning rate used in each epoch.
    pub lr: Vec<f64>,
}

fn train_one(config: &RunConfig, id: ModelId) -> Result<TrainSummary> {
    let records = read_dataset(&out_path(config, &id.dataset_file()))?;
    let train_set = samples_of(&records, SplitName::Train)?;
    let val_set = samples_of(&records, SplitName::Val)?;
    let tc = config.effective().train;
    let (model, history) = train(&train_set, &val_set, &config.network, &tc).map_err(|e| match e {
        Error::Divergence { epoch, msg } => Error::Divergence { epoch, msg: format!("{} model: {msg}", id.as_str()) },
        e => e,
    })?;
    let dir = id.model_dir(&config.output_dir);
    create_dir(&dir)?;
    save_checkpoint(&model, Some(&tc), &dir, "model")?;
    history.write_csv(dir.join("loss_history.csv"))?;
    let best = history.best_epoch;
    let summary = TrainSummary {
        model_id: id,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        epochs: history.epochs(),
        best_epoch: best + 1,
        best_train_mse: history.train_mse[best],
        best_val_mse: Some(history.val_mse[best]).filter(|v| !v.is_nan()),
        lr: history.lr.clone(),
    };
    write_json(&summary, &dir.join("train_summary.json"))?;
    Ok(summary)
}

/// Trains the baseline and SW-VMD models concurrently.
pub fn stage_train(config: &RunConfig) -> Result<[TrainSummary; 2]> {
    let inner = || -> Result<_> {
        config.validate_settings()?;
        let (a, b) = std::thread::scope(|s| {
            let handle = s.spawn(|| train_one(config, ModelId::Swvmd));
            let a = train_one(config, ModelId::Baseline);
            (a, handle.join().expect("training thread panicked"))
        });
        Ok([a?, b?])
    };
    inner().map_err(|e| e.in_stage("train"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub comparison: Comparison,
    pub predictions: [Vec<PredictionRow>; 2],
}

fn predict_model(config: &RunConfig, id: ModelId) -> Result<Vec<PredictionRow>> {
    let records = read_dataset(&out_path(config, &id.dataset_file()))?;
    let test: Vec<&DatasetRecord> = records.iter().filter(|r| r.split == SplitName::Test).collect();
    if test.is_empty() {
        return Err(Error::InsufficientData("no test samples to evaluate".into()));
    }
    let (model, _) = load_checkpoint(&id.model_dir(&config.output_dir).join("model.json"))?;
    let inputs: Vec<Array2<f64>> = test.iter().map(|r| r.to_sample().map(|s| s.input)).collect::<Result<_>>()?;
    let views: Vec<ArrayView2<f64>> = inputs.iter().map(|a| a.view()).collect();
    let z = predict(&views, &model, config.train.batch)?;
    let actual: Vec<f64> = test.iter().map(|r| r.actual).collect();
    let prior: Vec<f64> = test.iter().map(|r| r.prior_close).collect();
    let (predicted, predicted_labels, actual_labels) = match config.preset {
        Preset::Price => {
            let tn = NormalizationParams::load_json(out_path(config, TARGET_NORMALIZATION_FILE))?;
            let p: Vec<f64> = z.iter().map(|&v| tn.denormalize_value(0, v)).collect();
            let pl = price_to_trend(&p, &prior)?;
            let al = price_to_trend(&actual, &prior)?;
            (p, pl, al)
        }
        Preset::Return => {
            let pl = classify_returns(&z)?;
            let al = actual.iter().map(|&r| classify_trend(r)).collect::<Result<Vec<_>>>()?;
            (z, pl, al)
        }
    };
    Ok((0..test.len())
        .map(|i| PredictionRow {
            date: test[i].target_date,
            actual: actual[i],
            predicted: predicted[i],
            actual_label: actual_labels[i],
            predicted_label: predicted_labels[i],
        })
        .collect())
}

/// Test-split predictions, accuracy reports and the baseline-vs-SW-VMD
/// comparison (deltas are SW-VMD minus baseline).
pub fn stage_evaluate(config: &RunConfig) -> Result<Evaluation> {
    let inner = || -> Result<_> {
        config.validate_settings()?;
        let rows = ModelId::BOTH.map(|id| predict_model(config, id));
        let [base_rows, sw_rows] = rows;
        let (base_rows, sw_rows) = (base_rows?, sw_rows?);
        if base_rows.iter().map(|r| r.date).ne(sw_rows.iter().map(|r| r.date)) {
            return Err(Error::Alignment("models were evaluated on different test dates".into()));
        }
        let mut reports = Vec::new();
        let mut histories = Vec::new();
        for (id, rows) in ModelId::BOTH.into_iter().zip([&base_rows, &sw_rows]) {
            write_predictions_csv(rows, out_path(config, &id.predictions_file()))?;
            let p: Vec<_> = rows.iter().map(|r| r.predicted_label).collect();
            let a: Vec<_> = rows.iter().map(|r| r.actual_label).collect();
            reports.push(accuracy(id.as_str(), &p, &a)?);
            histories.push(LossHistory::read_csv(id.model_dir(&config.output_dir).join("loss_history.csv"))?);
        }
        let comparison = compare(&reports[0], &reports[1], &histories[0], &histories[1])?;
        write_json(&reports, out_path(config, ACCURACY_FILE))?;
        write_json(&comparison, out_path(config, COMPARISON_FILE))?;
        write_loss_curves_csv(&comparison.loss_curves, out_path(config, LOSS_CURVES_FILE))?;
        Ok(Evaluation { comparison, predictions: [base_rows, sw_rows] })
    };
    inner().map_err(|e| e.in_stage("evaluate"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub diagnostics: Vec<SeriesDiagnostics>,
    pub features: FeaturesMeta,
    pub training: [TrainSummary; 2],
    pub evaluation: Evaluation,
}

/// Every stage in order, then the manifest. A failing stage aborts the run
/// but the partial outputs are still listed in a manifest.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let config = config.effective();
    config.validate().map_err(|e| e.in_stage("config"))?;
    let stages = || -> Result<_> {
        stage_ingest(&config)?;
        let diagnostics = stage_diagnose(&config)?;
        let features = stage_decompose(&config)?;
        stage_build_dataset(&config)?;
        let training = stage_train(&config)?;
        let evaluation = stage_evaluate(&config)?;
        Ok((diagnostics, features, training, evaluation))
    };
    match stages() {
        Ok((diagnostics, features, training, evaluation)) => Ok(RunOutcome {
            manifest: write_manifest(&config)?,
            diagnostics,
            features,
            training,
            evaluation,
        }),
        Err(e) => {
            if config.output_dir.is_dir() {
                let _ = write_manifest(&config);
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rerun {
    pub original: Manifest,
    pub outcome: RunOutcome,
    /// Artifact paths whose hashes differ between the two runs.
    pub differences: Vec<String>,
}

/// Re-executes the run recorded in a manifest into `output_dir` (the
/// manifest's own directory when `None`) and compares artifact hashes.
pub fn rerun(manifest_path: &Path, output_dir: Option<&Path>) -> Result<Rerun> {
    let original = Manifest::load(manifest_path)?;
    let mut config = original.config.clone();
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    config.validate()?;
    if let Some(expected) = &original.input_sha256 {
        let actual = hash_file(&config.input)?.sha256;
        if &actual != expected {
            return Err(Error::Input(format!(
                "input {} changed since the manifest was written",
                config.input.display()
            )));
        }
    }
    let outcome = run(&config)?;
    let differences = original.artifact_differences(&outcome.manifest);
    Ok(Rerun { original, outcome, differences })
}
