//! Radix-2 FFT and top-K amplitude signatures of real signals.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain_err, shape_err, Result};

/// Default number of retained spectral components.
pub const DEFAULT_K: usize = 10;

/// Forward DFT, `X_j = Σ x_n e^{-2πi jn/N}`, unnormalised.
pub fn fft(signal: &[f64]) -> Result<Vec<Complex64>> {
    check_len(signal.len())?;
    if signal.iter().any(|v| !v.is_finite()) {
        return domain_err("fft input contains non-finite samples");
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(&mut buf, false);
    Ok(buf)
}

/// Forward transform of complex data.
pub fn fft_complex(data: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(data.len())?;
    let mut buf = data.to_vec();
    transform(&mut buf, false);
    Ok(buf)
}

/// Inverse transform including the `1/N` factor.
pub fn ifft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(spectrum.len())?;
    let mut buf = spectrum.to_vec();
    transform(&mut buf, true);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return shape_err(format!("fft length must be a power of two >= 2, got {n}"));
    }
    Ok(())
}

fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles computed directly per index rather than by repeated
        // multiplication, so rounding error does not grow with `len`.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// One retained spectral line: `amplitude · cos(2π·frequency·t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSignature {
    /// Sorted by amplitude, descending; ties broken by lower frequency.
    pub entries: Vec<SpectralComponent>,
    pub sample_rate: f64,
    pub k: usize,
}

impl SpectralSignature {
    /// Flattens to `[f_1, a_1, φ_1, f_2, a_2, φ_2, ...]`.
    pub fn to_features(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| [e.frequency, e.amplitude, e.phase])
            .collect()
    }

    /// Inverse of [`to_features`](Self::to_features). Predicted values are not
    /// re-sorted; the entry order is whatever the feature vector carries.
    pub fn from_features(features: &[f64], sample_rate: f64) -> Result<Self> {
        if !features.len().is_multiple_of(3) || features.is_empty() {
            return shape_err(format!(
                "signature features must be a non-empty multiple of 3, got {}",
                features.len()
            ));
        }
        let entries = features
            .chunks(3)
            .map(|c| SpectralComponent {
                frequency: c[0],
                amplitude: c[1],
                phase: c[2],
            })
            .collect::<Vec<_>>();
        Ok(Self {
            k: entries.len(),
            entries,
            sample_rate,
        })
    }

    /// Evaluates the retained lines at the given times.
    pub fn reconstruct(&self, times: &[f64]) -> Vec<f64> {
        reconstruct_from_signature(self, times)
    }
}

/// Top-`k` one-sided amplitude spectrum of `signal`.
///
/// The signal is zero-padded to the next power of two `N`. Amplitudes are
/// normalised by the number of real samples `L` (`2|X_j|/L`, or `|X_j|/L` for
/// DC and Nyquist), which reduces to the usual `2|X_j|/N` when no padding is
/// needed. Phases are those of the cosine representation, in `(−π, π]`.
pub fn extract_signature(signal: &[f64], sample_rate: f64, k: usize) -> Result<SpectralSignature> {
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return domain_err(format!("sample rate must be positive, got {sample_rate}"));
    }
    if k == 0 {
        return domain_err("k must be at least 1");
    }
    if signal.len() < 2 * k {
        return shape_err(format!(
            "signal of length {} is too short for k = {k} (need >= {})",
            signal.len(),
            2 * k
        ));
    }
    let len = signal.len();
    let n = len.next_power_of_two().max(2);
    let bins = n / 2 + 1;
    if k > bins {
        return domain_err(format!("k = {k} exceeds the {bins} one-sided bins"));
    }
    let mut padded = signal.to_vec();
    padded.resize(n, 0.0);
    let spectrum = fft(&padded)?;

    let mut lines: Vec<SpectralComponent> = (0..bins)
        .map(|j| {
            let x = spectrum[j];
            let edge = j == 0 || j == n / 2;
            let amplitude = if edge { x.norm() } else { 2.0 * x.norm() } / len as f64;
            SpectralComponent {
                frequency: j as f64 * sample_rate / n as f64,
                amplitude,
                phase: wrap_phase(x.im.atan2(x.re)),
            }
        })
        .collect();
    lines.sort_by(|a, b| {
        b.amplitude
            .total_cmp(&a.amplitude)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    lines.truncate(k);
    Ok(SpectralSignature {
        entries: lines,
        sample_rate,
        k,
    })
}

/// `Σ amplitude · cos(2π·frequency·t + phase)` at each `t`.
pub fn reconstruct_from_signature(sig: &SpectralSignature, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            sig.entries
                .iter()
                .map(|e| e.amplitude * (2.0 * PI * e.frequency * t + e.phase).cos())
                .sum()
        })
        .collect()
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}
