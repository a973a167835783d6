//! Seeded synthetic price series for fixtures and calibration runs.
//!
//! Every generator produces a log-price path `x_t`; closes are
//! `base * exp(x_t)`, so log returns are the increments of `x`.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PriceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    WhiteNoise,
    RandomWalk,
    Ar1,
    TwoTone,
    TrendCycle,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::WhiteNoise,
        SynthKind::RandomWalk,
        SynthKind::Ar1,
        SynthKind::TwoTone,
        SynthKind::TrendCycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::WhiteNoise => "white-noise",
            SynthKind::RandomWalk => "random-walk",
            SynthKind::Ar1 => "ar1",
            SynthKind::TwoTone => "two-tone",
            SynthKind::TrendCycle => "trend-cycle",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic series kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// Price at `x = 0`.
    pub base: f64,
    /// Innovation standard deviation.
    pub sigma: f64,
    /// AR(1) coefficient, used by `ar1` and the noise of `trend-cycle`.
    pub phi: f64,
    /// Two-tone frequencies in cycles per sample.
    pub freqs: [f64; 2],
    pub amplitudes: [f64; 2],
    /// Trend-cycle period in samples.
    pub period: f64,
    /// Trend-cycle amplitude.
    pub cycle_amplitude: f64,
    /// Trend-cycle linear drift per sample.
    pub drift: f64,
    pub start: NaiveDate,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            base: 100.0,
            sigma: 0.01,
            phi: 0.5,
            freqs: [0.05, 0.25],
            amplitudes: [0.05, 0.025],
            period: 120.0,
            cycle_amplitude: 0.3,
            drift: 0.0,
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

/// `n` consecutive weekdays from `start` (moved forward to a weekday).
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn noise(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn ar1(eps: &[f64], phi: f64) -> Vec<f64> {
    let mut x = 0.0;
    eps.iter()
        .map(|e| {
            x = phi * x + e;
            x
        })
        .collect()
}

/// The log-price path of length `n`.
pub fn log_path(kind: SynthKind, n: usize, seed: u64, p: &SynthParams) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    match kind {
        SynthKind::WhiteNoise => noise(&mut rng, n, p.sigma),
        SynthKind::RandomWalk => {
            let mut acc = 0.0;
            noise(&mut rng, n, p.sigma)
                .into_iter()
                .map(|e| {
                    acc += e;
                    acc
                })
                .collect()
        }
        SynthKind::Ar1 => ar1(&noise(&mut rng, n, p.sigma), p.phi),
        SynthKind::TwoTone => (0..n)
            .map(|t| {
                let t = t as f64;
                p.amplitudes[0] * (tau * p.freqs[0] * t).sin() + p.amplitudes[1] * (tau * p.freqs[1] * t).sin()
            })
            .collect(),
        SynthKind::TrendCycle => ar1(&noise(&mut rng, n, p.sigma), p.phi)
            .into_iter()
            .enumerate()
            .map(|(t, e)| {
                let t = t as f64;
                p.cycle_amplitude * (tau * t / p.period).sin() + p.drift * t + e
            })
            .collect(),
    }
}

pub fn generate(kind: SynthKind, n: usize, seed: u64, params: &SynthParams) -> Result<PriceSeries> {
    if n < 2 {
        return Err(Error::Config(format!("synthetic series length must be at least 2, got {n}")));
    }
    if !(params.base > 0.0 && params.sigma >= 0.0 && params.period > 0.0) {
        return Err(Error::Config(format!("invalid synthetic parameters {params:?}")));
    }
    let close = log_path(kind, n, seed, params)
        .into_iter()
        .map(|x| params.base * x.exp())
        .collect();
    PriceSeries::new(kind.as_str(), weekdays(params.start, n), close)
}
