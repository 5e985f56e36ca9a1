use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Magnitude spectrum of fixed-length frames, optionally Hamming-windowed.
pub struct SpectrumAnalyzer {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Option<Vec<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(frame_len: usize, hamming: bool) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        let window = hamming.then(|| hamming_window(frame_len));
        SpectrumAnalyzer {
            len: frame_len,
            fft,
            window,
        }
    }

    /// `|X_k|` for `k = 0 .. floor(L/2)`.
    pub fn magnitudes(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.len, "frame length");
        let mut buf: Vec<Complex<f64>> = match &self.window {
            Some(w) => frame.iter().zip(w).map(|(&x, &w)| Complex::new(x * w, 0.0)).collect(),
            None => frame.iter().map(|&x| Complex::new(x, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        buf[..self.len / 2].iter().map(|c| c.norm()).collect()
    }
}

fn hamming_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Magnitudes of the first `floor(L/2)` DFT bins of a rectangular frame.
pub fn magnitude_spectrum(frame: &[f64]) -> Vec<f64> {
    if frame.is_empty() {
        return Vec::new();
    }
    SpectrumAnalyzer::new(frame.len(), false).magnitudes(frame)
}
