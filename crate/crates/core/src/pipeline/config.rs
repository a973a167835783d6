use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SplitSpec;
use crate::lstm::{NetworkConfig, TrainConfig};
use crate::swvmd::SwVmdConfig;
use crate::vmd::VmdConfig;

/// Which quantity the models forecast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Decompose closes; targets are z-scored next-horizon closes.
    #[default]
    Price,
    /// Decompose log returns; targets are raw next-horizon log returns.
    Return,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Price => "price",
            Preset::Return => "return",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "price" => Ok(Preset::Price),
            "return" => Ok(Preset::Return),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected price or return)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    /// `None` selects the Schwert ceiling.
    pub adf_max_lags: Option<usize>,
    pub hurst_min_window: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { adf_max_lags: None, hurst_min_window: 8 }
    }
}

/// Everything a run needs; the effective copy is echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: PathBuf,
    pub preset: Preset,
    pub swvmd: SwVmdConfig,
    pub vmd: VmdConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Outlier threshold for input features, in training standard deviations.
    pub clip_sigma: f64,
    pub diagnostics: DiagnosticsConfig,
    pub output_dir: PathBuf,
    /// Training seed for both models; overrides `train.seed`.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            preset: Preset::Price,
            swvmd: SwVmdConfig::default(),
            vmd: VmdConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            clip_sigma: 3.0,
            diagnostics: DiagnosticsConfig::default(),
            output_dir: PathBuf::from("run"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The config as actually executed: the run seed drives training and
    /// the decomposition uses the sliding-window `k`.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        c.train.seed = c.seed;
        c.vmd = c.swvmd.effective_vmd(&c.vmd);
        c
    }

    /// Checks nested configs and the output directory; not the input file.
    pub fn validate_settings(&self) -> Result<()> {
        self.swvmd.validate()?;
        self.swvmd.effective_vmd(&self.vmd).validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if !(self.clip_sigma > 0.0) {
            return Err(Error::Config(format!("clip_sigma must be > 0, got {}", self.clip_sigma)));
        }
        if self.diagnostics.hurst_min_window < 2 {
            return Err(Error::Config("hurst_min_window must be at least 2".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("no input file given".into()));
        }
        if !self.input.is_file() {
            return Err(Error::Config(format!("input file {} does not exist", self.input.display())));
        }
        Ok(())
    }
}
