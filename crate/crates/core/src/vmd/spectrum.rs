//! Discrete Fourier transforms of arbitrary length, backed by `rustfft`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT: `X[k] = sum_n x[n] exp(-2πi kn/N)`.
pub fn forward(signal: &[Complex64]) -> Vec<Complex64> {
    let mut buf = signal.to_vec();
    if buf.is_empty() {
        return buf;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    buf
}

pub fn forward_real(signal: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&buf)
}

/// Inverse DFT including the `1/N` factor, so `inverse(forward(x)) == x`.
pub fn inverse(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    if buf.is_empty() {
        return buf;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Signed frequency of bin `j` in cycles per sample, in `(-0.5, 0.5]`.
pub fn bin_frequency(j: usize, len: usize) -> f64 {
    if 2 * j <= len {
        j as f64 / len as f64
    } else {
        (j as f64 - len as f64) / len as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_odd_length() {
        let x: Vec<Complex64> = (0..37).map(|i| Complex64::new(i as f64 * 0.3, -(i as f64))).collect();
        let back = inverse(&forward(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        for v in forward_real(&x) {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn bin_frequencies() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(4, 8), 0.5);
        assert_eq!(bin_frequency(5, 8), -0.375);
        assert_eq!(bin_frequency(3, 7), 3.0 / 7.0);
        assert_eq!(bin_frequency(4, 7), -3.0 / 7.0);
    }
}
