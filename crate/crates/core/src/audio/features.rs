//! Per-frame time-domain and spectral descriptors.

use crate::error::{Error, Result};

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Zero-crossing rate: `sum |sign(x_n) - sign(x_{n-1})| / (2L)`.
pub fn zcr(frame: &[f64]) -> f64 {
    let l = frame.len();
    if l < 2 {
        return 0.0;
    }
    let changes: f64 = frame.windows(2).map(|w| (sign(w[1]) - sign(w[0])).abs()).sum();
    changes / (2.0 * l as f64)
}

/// Mean squared sample value.
pub fn energy(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
}

/// Shannon entropy (bits) of a set of non-negative masses; zero total
/// mass gives zero.
pub(crate) fn entropy_of(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &m in masses {
        let p = m / total;
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

fn band_energies(values: &[f64], n_sub: usize, what: &str) -> Result<Vec<f64>> {
    if n_sub == 0 || values.len() < n_sub {
        return Err(Error::InvalidArgument(format!(
            "{what}: {} values cannot be split into {n_sub} sub-blocks",
            values.len()
        )));
    }
    let width = values.len() / n_sub;
    Ok(values
        .chunks_exact(width)
        .take(n_sub)
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect())
}

/// Entropy of the normalized energies of `n_sub` equal sub-frames
/// (trailing remainder dropped).
pub fn energy_entropy(frame: &[f64], n_sub: usize) -> Result<f64> {
    Ok(entropy_of(&band_energies(frame, n_sub, "energy_entropy")?))
}

/// Centroid and spread over normalized bin positions `(k+1)/K`, weighted
/// by magnitude. A silent spectrum yields `(0.5, 0)`.
pub fn spectral_centroid_spread(spectrum: &[f64]) -> (f64, f64) {
    let k = spectrum.len() as f64;
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 || spectrum.is_empty() {
        return (0.5, 0.0);
    }
    let pos = |i: usize| (i + 1) as f64 / k;
    let centroid: f64 = spectrum.iter().enumerate().map(|(i, &x)| pos(i) * x / total).sum();
    let var: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(i, &x)| (pos(i) - centroid).powi(2) * x / total)
        .sum();
    (centroid, var.sqrt())
}

/// Entropy of squared magnitudes pooled into `n_sub` equal bands.
pub fn spectral_entropy(spectrum: &[f64], n_sub: usize) -> Result<f64> {
    Ok(entropy_of(&band_energies(spectrum, n_sub, "spectral_entropy")?))
}

/// Squared distance between the sum-normalized current and previous spectra.
pub fn spectral_flux(current: &[f64], previous: &[f64]) -> f64 {
    let sc: f64 = current.iter().sum();
    let sp: f64 = previous.iter().sum();
    let norm = |x: f64, s: f64| if s > 0.0 { x / s } else { 0.0 };
    current
        .iter()
        .zip(previous)
        .map(|(&a, &b)| (norm(a, sc) - norm(b, sp)).powi(2))
        .sum()
}

/// Smallest bin `m` whose cumulative squared magnitude reaches
/// `fraction` of the total, as `m / K`. Silent spectra give 0.
pub fn spectral_rolloff(spectrum: &[f64], fraction: f64) -> f64 {
    let total: f64 = spectrum.iter().map(|x| x * x).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let threshold = fraction * total;
    let mut acc = 0.0;
    for (m, &x) in spectrum.iter().enumerate() {
        acc += x * x;
        if acc >= threshold {
            return m as f64 / spectrum.len() as f64;
        }
    }
    (spectrum.len() - 1) as f64 / spectrum.len() as f64
}
