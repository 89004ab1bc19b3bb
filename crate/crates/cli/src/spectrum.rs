// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Discrete Fourier magnitude of sampled drive signals.
//!
//! No window is applied. Magnitudes are those of the unnormalized transform
//! `X_k = Σ_n x_n e^{−2πi kn/M}`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Full unnormalized DFT of a real signal.
pub fn dft(samples: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Bins `0..=M/2` as `(frequency in GHz, |X_k|)` for sample spacing `h` in ns.
pub fn one_sided_spectrum(samples: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len();
    let x = dft(samples);
    let bins = if m == 0 { 0 } else { m / 2 + 1 };
    let freqs = (0..bins).map(|k| k as f64 / (m as f64 * h)).collect();
    let mags = x.iter().take(bins).map(|z| z.norm()).collect();
    (freqs, mags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn peak(mags: &[f64]) -> usize {
        mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn matches_direct_sum() {
        let x: Vec<f64> = (0..37).map(|n| ((n * n) as f64 * 0.37).sin()).collect();
        let fast = dft(&x);
        for (k, zk) in fast.iter().enumerate() {
            let direct: Complex<f64> = x
                .iter()
                .enumerate()
                .map(|(n, &v)| Complex::from_polar(v, -2.0 * PI * (k * n) as f64 / x.len() as f64))
                .sum();
            assert!((zk - direct).norm() < 1e-10);
        }
    }

    #[test]
    fn parseval() {
        let x: Vec<f64> = (0..1000).map(|n| (0.013 * n as f64).cos() + 0.3 * (0.71 * n as f64).sin()).collect();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = dft(&x).iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((time - freq).abs() <= 1e-8 * time);
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let h = 0.05;
        let f = 4.0;
        let x: Vec<f64> = (0..2000).map(|n| (2.0 * PI * f * n as f64 * h).cos()).collect();
        let (freqs, mags) = one_sided_spectrum(&x, h);
        assert!((freqs[peak(&mags)] - f).abs() <= freqs[1]);
    }
}
