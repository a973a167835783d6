//! Variational mode decomposition of a single window.
//!
//! The signal is mirror-extended, moved to the frequency domain, and split
//! into `k` modes by alternating three updates until the modes stop moving:
//! a Wiener-filter update of each mode's analytic spectrum around its center
//! frequency, a power-weighted centroid update of that center frequency, and
//! a dual-ascent step on the reconstruction constraint.

pub mod spectrum;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How center frequencies are seeded before the first sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum OmegaInit {
    /// `omega_k = 0.5 * k / K` for `k = 0..K`.
    Uniform,
    Zero,
    /// Log-uniform draws in `[1/N, 0.5]`, sorted.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VmdConfig {
    pub k: usize,
    pub alpha: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: OmegaInit,
    /// Pin mode 1 at zero frequency.
    pub dc_mode: bool,
}

impl Default for VmdConfig {
    fn default() -> Self {
        VmdConfig {
            k: 5,
            alpha: 2000.0,
            tau: 0.0,
            tol: 1e-7,
            max_iter: 500,
            init: OmegaInit::Uniform,
            dc_mode: false,
        }
    }
}

impl VmdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k >= 1
            && self.alpha > 0.0
            && self.alpha.is_finite()
            && self.tau >= 0.0
            && self.tau.is_finite()
            && self.tol > 0.0
            && self.tol < 1.0
            && self.max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid VMD configuration {self:?}")))
        }
    }

    /// Bit-level identity of the configuration, usable as a hash key.
    pub fn fingerprint(&self) -> [u64; 8] {
        let (tag, seed) = match self.init {
            OmegaInit::Uniform => (0, 0),
            OmegaInit::Zero => (1, 0),
            OmegaInit::Random { seed } => (2, seed),
        };
        [
            self.k as u64,
            self.alpha.to_bits(),
            self.tau.to_bits(),
            self.tol.to_bits(),
            self.max_iter as u64,
            tag,
            seed,
            self.dc_mode as u64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmdOutput {
    /// `k` modes, each as long as the input, in ascending-frequency order.
    pub modes: Vec<Vec<f64>>,
    /// Center frequencies in cycles per sample, ascending.
    pub omegas: Vec<f64>,
    pub iterations: usize,
    pub final_delta: f64,
}

impl VmdOutput {
    pub fn converged(&self, config: &VmdConfig) -> bool {
        self.final_delta < config.tol
    }
}

fn head_len(n: usize) -> usize {
    n / 2
}

/// Reflects the first `N/2` samples in front of the signal and the last
/// `N - N/2` behind it, giving length `2N`.
pub fn mirror_extend(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "mirror extension needs at least 2 samples, got {n}"
        )));
    }
    let head = head_len(n);
    let mut out = Vec::with_capacity(2 * n);
    out.extend(signal[..head].iter().rev());
    out.extend_from_slice(signal);
    out.extend(signal[head..].iter().rev());
    Ok(out)
}

/// Inverse of [`mirror_extend`]: the middle half of an even-length signal.
pub fn de_extend(extended: &[f64]) -> Result<Vec<f64>> {
    if extended.len() % 2 != 0 || extended.len() < 4 {
        return Err(Error::Shape(format!(
            "extended signal must have even length >= 4, got {}",
            extended.len()
        )));
    }
    let n = extended.len() / 2;
    let head = head_len(n);
    Ok(extended[head..head + n].to_vec())
}

fn initial_omegas(config: &VmdConfig, n: usize) -> Vec<f64> {
    let k = config.k;
    let mut omegas: Vec<f64> = match config.init {
        OmegaInit::Uniform => (0..k).map(|i| 0.5 * i as f64 / k as f64).collect(),
        OmegaInit::Zero => vec![0.0; k],
        OmegaInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = (1.0 / n as f64).ln();
            let hi = 0.5f64.ln();
            let mut w: Vec<f64> = (0..k)
                .map(|_| (lo + (hi - lo) * rng.random::<f64>()).exp())
                .collect();
            w.sort_by(f64::total_cmp);
            w
        }
    };
    if config.dc_mode {
        omegas[0] = 0.0;
    }
    omegas
}

/// Decomposes `signal` into `config.k` band-limited modes.
///
/// Hitting `max_iter` is not an error; the returned `final_delta` records the
/// last change so callers can audit convergence.
pub fn vmd_decompose(signal: &[f64], config: &VmdConfig) -> Result<VmdOutput> {
    config.validate()?;
    let n = signal.len();
    if n < 2 * config.k || n < 2 {
        return Err(Error::InsufficientData(format!(
            "VMD with k={} needs at least {} samples, got {n}",
            config.k,
            (2 * config.k).max(2)
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite sample at index {i}")));
    }

    let extended = mirror_extend(signal)?;
    let t = extended.len();
    let full = spectrum::forward_real(&extended);
    // Analytic half: DC through Nyquist.
    let half = t / 2 + 1;
    let f_plus: Vec<Complex64> = full[..half].to_vec();
    let freqs: Vec<f64> = (0..half).map(|j| j as f64 / t as f64).collect();
    let signal_energy: f64 = f_plus.iter().map(|c| c.norm_sqr()).sum();

    let k = config.k;
    let two_alpha = 2.0 * config.alpha;
    let mut omegas = initial_omegas(config, n);
    let mut modes = vec![vec![Complex64::new(0.0, 0.0); half]; k];
    let mut total = vec![Complex64::new(0.0, 0.0); half];
    let mut lambda = vec![Complex64::new(0.0, 0.0); half];

    let mut iterations = 0;
    let mut final_delta = f64::INFINITY;
    while iterations < config.max_iter {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for m in 0..k {
            let omega = omegas[m];
            let mode = &mut modes[m];
            let mut change = 0.0;
            let mut power = 0.0;
            let mut weighted = 0.0;
            for j in 0..half {
                let others = total[j] - mode[j];
                let d = freqs[j] - omega;
                let updated = (f_plus[j] - others - lambda[j] * 0.5) / (1.0 + two_alpha * d * d);
                change += (updated - mode[j]).norm_sqr();
                let p = updated.norm_sqr();
                power += p;
                weighted += freqs[j] * p;
                mode[j] = updated;
                total[j] = others + updated;
            }
            if !(config.dc_mode && m == 0) && power > 0.0 {
                omegas[m] = weighted / power;
            }
            delta = delta.max(change);
        }
        if config.tau > 0.0 {
            for j in 0..half {
                lambda[j] += (total[j] - f_plus[j]) * config.tau;
            }
        }
        final_delta = if signal_energy > 0.0 { delta / signal_energy } else { 0.0 };
        if final_delta < config.tol {
            break;
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| omegas[a].total_cmp(&omegas[b]));

    let mut out_modes = Vec::with_capacity(k);
    for &m in &order {
        let mut spec = vec![Complex64::new(0.0, 0.0); t];
        for j in 0..half {
            spec[j] = modes[m][j];
        }
        for j in 1..t - half + 1 {
            spec[t - j] = modes[m][j].conj();
        }
        spec[0].im = 0.0;
        spec[t / 2].im = 0.0;
        let time: Vec<f64> = spectrum::inverse(&spec).iter().map(|c| c.re).collect();
        out_modes.push(de_extend(&time)?);
    }
    Ok(VmdOutput {
        modes: out_modes,
        omegas: order.iter().map(|&m| omegas[m]).collect(),
        iterations,
        final_delta,
    })
}

/// Sample-wise sum of all modes.
pub fn reconstruct(output: &VmdOutput) -> Vec<f64> {
    let len = output.modes.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; len];
    for mode in &output.modes {
        for (s, v) in sum.iter_mut().zip(mode) {
            *s += v;
        }
    }
    sum
}
