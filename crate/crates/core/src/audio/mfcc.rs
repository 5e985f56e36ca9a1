use serde::{Deserialize, Serialize};

/// Edge frequencies of a triangular mel-like filterbank: a run of linearly
/// spaced filters followed by log-spaced ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterbankSpec {
    pub low_hz: f64,
    pub linear_spacing_hz: f64,
    pub log_ratio: f64,
    pub n_linear: usize,
    pub n_log: usize,
}

impl Default for FilterbankSpec {
    fn default() -> Self {
        FilterbankSpec {
            low_hz: 133.3333,
            linear_spacing_hz: 200.0 / 3.0,
            log_ratio: 1.0711703,
            n_linear: 13,
            n_log: 27,
        }
    }
}

impl FilterbankSpec {
    pub fn n_filters(&self) -> usize {
        self.n_linear + self.n_log
    }

    /// The `n_filters + 2` triangle corner frequencies.
    pub fn edges(&self) -> Vec<f64> {
        let mut f: Vec<f64> = (0..self.n_linear)
            .map(|i| self.low_hz + i as f64 * self.linear_spacing_hz)
            .collect();
        let last = f[self.n_linear - 1];
        f.extend((1..=self.n_log + 2).map(|p| last * self.log_ratio.powi(p as i32)));
        f
    }
}

pub const N_MFCC: usize = 13;

/// Filterbank weights for one (frame length, sample rate) pair plus the
/// orthonormal DCT-II basis.
#[derive(Clone, Debug)]
pub struct Mfcc {
    /// `weights[m]` is a sparse list of `(bin, weight)`.
    weights: Vec<Vec<(usize, f64)>>,
    dct: Vec<Vec<f64>>,
}

impl Mfcc {
    /// `n_bins` spectrum bins of a `2 * n_bins`-sample frame.
    pub fn new(spec: &FilterbankSpec, n_bins: usize, sample_rate: u32) -> Self {
        let edges = spec.edges();
        let frame_len = 2 * n_bins;
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / frame_len as f64;
        let weights = (0..spec.n_filters())
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let height = 2.0 / (hi - lo);
                (0..n_bins)
                    .filter_map(|k| {
                        let f = bin_hz(k);
                        let w = if f > lo && f <= mid {
                            height * (f - lo) / (mid - lo)
                        } else if f > mid && f <= hi {
                            height * (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let m = spec.n_filters();
        let dct = (0..N_MFCC)
            .map(|n| {
                let scale = if n == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
                (0..m)
                    .map(|j| {
                        scale
                            * (std::f64::consts::PI * n as f64 * (2 * j + 1) as f64 / (2 * m) as f64)
                                .cos()
                    })
                    .collect()
            })
            .collect();
        Mfcc { weights, dct }
    }

    /// log10 filterbank energies of the power spectrum, floored at 1e-10.
    pub fn log_energies(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|ws| {
                let e: f64 = ws.iter().map(|&(k, w)| w * spectrum[k] * spectrum[k]).sum();
                e.max(1e-10).log10()
            })
            .collect()
    }

    /// First 13 DCT-II (orthonormal) coefficients of the log energies.
    pub fn coefficients(&self, spectrum: &[f64]) -> [f64; N_MFCC] {
        let le = self.log_energies(spectrum);
        let mut out = [0.0; N_MFCC];
        for (o, basis) in out.iter_mut().zip(&self.dct) {
            *o = basis.iter().zip(&le).map(|(b, e)| b * e).sum();
        }
        out
    }
}

/// MFCCs of a magnitude spectrum with the default filterbank.
pub fn mfcc(spectrum: &[f64], sample_rate: u32) -> [f64; N_MFCC] {
    Mfcc::new(&FilterbankSpec::default(), spectrum.len(), sample_rate).coefficients(spectrum)
}
