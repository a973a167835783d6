//! Stationarity and long-memory checks run before modeling: the augmented
//! Dickey-Fuller test (constant, no trend) and a rescaled-range Hurst
//! estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MacKinnon (2010) response-surface coefficients for the constant-only
/// ADF regression, one row per level (1%, 5%, 10%):
/// `c(T) = b0 + b1/T + b2/T^2 + b3/T^3`.
const ADF_CONSTANT_SURFACE: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.040],
    [-2.56677, -1.5384, -2.809, 0.0],
];

/// Minimum regression sample the test accepts.
pub const ADF_MIN_OBS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignificanceLevel {
    OnePercent,
    FivePercent,
    TenPercent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub critical_1: f64,
    pub critical_5: f64,
    pub critical_10: f64,
    pub lags: usize,
    pub n_obs: usize,
}

impl AdfResult {
    pub fn critical(&self, level: SignificanceLevel) -> f64 {
        match level {
            SignificanceLevel::OnePercent => self.critical_1,
            SignificanceLevel::FivePercent => self.critical_5,
            SignificanceLevel::TenPercent => self.critical_10,
        }
    }

    /// True when the unit-root null is rejected at `level`.
    pub fn rejects(&self, level: SignificanceLevel) -> bool {
        self.statistic < self.critical(level)
    }
}

/// Critical values `(1%, 5%, 10%)` for a regression with `n_obs` rows.
pub fn adf_critical_values(n_obs: usize) -> (f64, f64, f64) {
    let t = n_obs as f64;
    let eval = |b: &[f64; 4]| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t);
    (
        eval(&ADF_CONSTANT_SURFACE[0]),
        eval(&ADF_CONSTANT_SURFACE[1]),
        eval(&ADF_CONSTANT_SURFACE[2]),
    )
}

/// Schwert's rule of thumb, `floor(12 * (n/100)^(1/4))`.
pub fn schwert_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

struct OlsFit {
    ssr: f64,
    n_obs: usize,
    n_params: usize,
    /// t-ratio of the lagged-level coefficient (column 1).
    level_t: f64,
}

impl OlsFit {
    fn aic(&self) -> f64 {
        let n = self.n_obs as f64;
        n * (self.ssr / n).ln() + 2.0 * self.n_params as f64
    }
}

/// Fits `dy_t = c + g*y_{t-1} + sum_i b_i*dy_{t-i}` over rows whose index in
/// `dy` starts at `first`.
fn fit_adf_regression(y: &[f64], dy: &[f64], lags: usize, first: usize) -> Result<OlsFit> {
    let n_obs = dy.len() - first;
    let k = 2 + lags;
    if n_obs <= k {
        return Err(Error::InsufficientData(format!(
            "{n_obs} observations for a {k}-parameter ADF regression"
        )));
    }
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    let fill = |row: &mut [f64], i: usize| {
        row[0] = 1.0;
        row[1] = y[i];
        for l in 1..=lags {
            row[1 + l] = dy[i - l];
        }
    };
    for i in first..dy.len() {
        fill(&mut row, i);
        for a in 0..k {
            xty[a] += row[a] * dy[i];
            for b in a..k {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Diagnostic("singular ADF design matrix".into()))?;
    let beta = chol.solve(&xty);
    let mut ssr = 0.0;
    for i in first..dy.len() {
        fill(&mut row, i);
        let fitted: f64 = row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
        ssr += (dy[i] - fitted).powi(2);
    }
    let sigma2 = ssr / (n_obs - k) as f64;
    let inv = chol.inverse();
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::Diagnostic("degenerate ADF regression (zero residual variance)".into()));
    }
    Ok(OlsFit { ssr, n_obs, n_params: k, level_t: beta[1] / se })
}

fn validate_series(series: &[f64]) -> Result<()> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite value at index {i}")));
    }
    if series.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Diagnostic("constant series".into()));
    }
    Ok(())
}

/// Augmented Dickey-Fuller test with a constant and no trend.
///
/// The lag order is chosen by AIC over `0..=max_lags` on a common sample;
/// `None` uses Schwert's rule. The chosen order is then refitted on the
/// largest available sample.
pub fn adf_test(series: &[f64], max_lags: Option<usize>) -> Result<AdfResult> {
    validate_series(series)?;
    let n = series.len();
    if n < ADF_MIN_OBS + 2 {
        return Err(Error::InsufficientData(format!(
            "ADF test needs at least {} points, got {n}",
            ADF_MIN_OBS + 2
        )));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let cap = (dy.len() / 2).saturating_sub(2);
    let max_lags = max_lags.unwrap_or_else(|| schwert_max_lags(n)).min(cap);
    let max_lags = max_lags.min(dy.len().saturating_sub(ADF_MIN_OBS));

    let mut best = (f64::INFINITY, 0);
    for lags in 0..=max_lags {
        let fit = fit_adf_regression(series, &dy, lags, max_lags)?;
        let aic = fit.aic();
        if aic < best.0 {
            best = (aic, lags);
        }
    }
    let lags = best.1;
    let fit = fit_adf_regression(series, &dy, lags, lags)?;
    if fit.n_obs < ADF_MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "{} observations after lagging, need {ADF_MIN_OBS}",
            fit.n_obs
        )));
    }
    let (c1, c5, c10) = adf_critical_values(fit.n_obs);
    Ok(AdfResult {
        statistic: fit.level_t,
        critical_1: c1,
        critical_5: c5,
        critical_10: c10,
        lags,
        n_obs: fit.n_obs,
    })
}

/// Same regression with a fixed lag order.
pub fn adf_test_fixed_lag(series: &[f64], lags: usize) -> Result<AdfResult> {
    validate_series(series)?;
    if series.len() < lags + 3 {
        return Err(Error::InsufficientData(format!("{} points for {lags} lags", series.len())));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let fit = fit_adf_regression(series, &dy, lags, lags)?;
    if fit.n_obs < ADF_MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "{} observations after lagging, need {ADF_MIN_OBS}",
            fit.n_obs
        )));
    }
    let (c1, c5, c10) = adf_critical_values(fit.n_obs);
    Ok(AdfResult {
        statistic: fit.level_t,
        critical_1: c1,
        critical_5: c5,
        critical_10: c10,
        lags,
        n_obs: fit.n_obs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstResult {
    pub h: f64,
    /// `(ln window, ln mean R/S)` regression points.
    pub points: Vec<(f64, f64)>,
    pub r2: f64,
}

pub const HURST_MIN_POINTS: usize = 4;

/// Rescaled range of one window, or `None` when the window is flat.
fn rescaled_range(window: &[f64]) -> Option<f64> {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let mut cum = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ss = 0.0;
    for x in window {
        let d = x - mean;
        ss += d * d;
        cum += d;
        lo = lo.min(cum);
        hi = hi.max(cum);
    }
    let s = (ss / n).sqrt();
    (s > 0.0).then(|| (hi - lo) / s)
}

/// Least-squares slope, intercept and R^2.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Classical R/S Hurst estimate over power-of-two window sizes from
/// `min_window` up to `n/2`.
pub fn hurst_rs(series: &[f64], min_window: usize) -> Result<HurstResult> {
    if min_window < 2 {
        return Err(Error::Config(format!("min_window must be >= 2, got {min_window}")));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite value at index {i}")));
    }
    let n = series.len();
    if n < 4 * min_window {
        return Err(Error::InsufficientData(format!(
            "Hurst estimate needs at least {} points, got {n}",
            4 * min_window
        )));
    }
    let mut points = Vec::new();
    let mut size = min_window.next_power_of_two();
    while size <= n / 2 {
        let ratios: Vec<f64> = series.chunks_exact(size).filter_map(rescaled_range).collect();
        if !ratios.is_empty() {
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            points.push(((size as f64).ln(), mean.ln()));
        }
        size *= 2;
    }
    if points.len() < HURST_MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "only {} usable window sizes, need {HURST_MIN_POINTS}",
            points.len()
        )));
    }
    let (h, _, r2) = linear_fit(&points);
    Ok(HurstResult { h, points, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn surface_reproduces_printed_large_sample_criticals() {
        // The three-decimal triple (-3.437, -2.864, -2.568) is the constant
        // surface evaluated near T = 1000.
        let (c1, c5, c10) = adf_critical_values(1000);
        assert_eq!(format!("{c1:.3}"), "-3.437");
        assert_eq!(format!("{c5:.3}"), "-2.864");
        assert_eq!(format!("{c10:.3}"), "-2.568");
        for n in [25, 100, 500, 10_000] {
            let (a, b, c) = adf_critical_values(n);
            assert!(a < b && b < c && c < 0.0);
        }
    }

    #[test]
    fn schwert_rule() {
        assert_eq!(schwert_max_lags(100), 12);
        assert_eq!(schwert_max_lags(1000), 21);
    }

    #[test]
    fn fixed_lag_zero_matches_closed_form_dickey_fuller() {
        // With no augmentation the statistic is the plain OLS t-ratio, which
        // a scalar oracle can compute from centered moments.
        let e = noise(3, 300);
        let mut y = vec![0.0];
        for v in &e {
            let last = *y.last().unwrap();
            y.push(0.8 * last + v);
        }
        let res = adf_test_fixed_lag(&y, 0).unwrap();
        let x: Vec<f64> = y[..y.len() - 1].to_vec();
        let d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let md = d.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxd: f64 = x.iter().zip(&d).map(|(a, b)| (a - mx) * (b - md)).sum();
        let g = sxd / sxx;
        let c = md - g * mx;
        let ssr: f64 = x.iter().zip(&d).map(|(a, b)| (b - c - g * a).powi(2)).sum();
        let se = (ssr / (n - 2.0) / sxx).sqrt();
        assert!((res.statistic - g / se).abs() < 1e-9, "{} vs {}", res.statistic, g / se);
        assert_eq!(res.n_obs, 300);
    }

    #[test]
    fn adf_rejects_stationary_and_keeps_random_walk() {
        let e = noise(17, 1000);
        let mut walk = vec![0.0];
        for v in &e {
            walk.push(walk.last().unwrap() + v);
        }
        let rw = adf_test(&walk, None).unwrap();
        assert!(!rw.rejects(SignificanceLevel::OnePercent));
        let st = adf_test(&e, None).unwrap();
        assert!(st.rejects(SignificanceLevel::OnePercent));
        assert!(st.critical_1 < st.critical_5 && st.critical_5 < st.critical_10);
    }

    #[test]
    fn adf_errors() {
        assert!(matches!(adf_test(&[1.0; 100], None), Err(Error::Diagnostic(_))));
        assert!(matches!(adf_test(&noise(1, 20), None), Err(Error::InsufficientData(_))));
        let mut bad = noise(1, 100);
        bad[4] = f64::NAN;
        assert!(matches!(adf_test(&bad, None), Err(Error::Input(_))));
    }

    #[test]
    fn decision_is_monotone_in_statistic() {
        let base = adf_test(&noise(2, 200), None).unwrap();
        let levels = [
            SignificanceLevel::OnePercent,
            SignificanceLevel::FivePercent,
            SignificanceLevel::TenPercent,
        ];
        for level in levels {
            for shift in [0.0, 0.5, 3.0] {
                let mut r = base.clone();
                r.statistic -= shift;
                if base.rejects(level) {
                    assert!(r.rejects(level));
                }
            }
        }
    }

    #[test]
    fn hurst_points_reproduce_slope() {
        let x = noise(4, 4096);
        let res = hurst_rs(&x, 8).unwrap();
        assert_eq!(res.points.len(), 9);
        let (slope, _, r2) = linear_fit(&res.points);
        assert!((slope - res.h).abs() < 1e-12);
        assert!((r2 - res.r2).abs() < 1e-12);
        assert!(res.h > 0.4 && res.h < 0.7, "{}", res.h);
    }

    #[test]
    fn hurst_of_ramp_is_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..4096)
            .map(|i| i as f64 * 0.01 + 0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        assert!(hurst_rs(&x, 8).unwrap().h > 0.85);
    }

    #[test]
    fn hurst_scaling_by_power_of_two_is_bitwise() {
        let x = noise(6, 2048);
        let y: Vec<f64> = x.iter().map(|v| v * 4.0).collect();
        assert_eq!(hurst_rs(&x, 8).unwrap(), hurst_rs(&y, 8).unwrap());
    }

    #[test]
    fn hurst_affine_invariance() {
        let x = noise(7, 2048);
        let y: Vec<f64> = x.iter().map(|v| 3.7 * v - 12.5).collect();
        let (a, b) = (hurst_rs(&x, 8).unwrap(), hurst_rs(&y, 8).unwrap());
        assert!((a.h - b.h).abs() < 1e-12);
    }

    #[test]
    fn hurst_flat_windows_dropped() {
        // first half flat: small windows there are excluded, not fatal
        let mut x = vec![1.0; 1024];
        x.extend(noise(9, 1024));
        let res = hurst_rs(&x, 8).unwrap();
        assert!(res.h.is_finite());
        assert!(matches!(hurst_rs(&[2.0; 1024], 8), Err(Error::InsufficientData(_))));
        assert!(matches!(hurst_rs(&noise(1, 31), 8), Err(Error::InsufficientData(_))));
        // 4*min_window points is not enough for four window sizes
        assert!(matches!(hurst_rs(&noise(1, 32), 8), Err(Error::InsufficientData(_))));
    }
}
