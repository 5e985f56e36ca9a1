//! Hand-crafted audio descriptors: 34 short-term features per frame,
//! summarized per partition by mean and standard deviation (68 values).

mod chroma;
mod features;
mod mfcc;
mod spectrum;
mod wav;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub use chroma::{chroma, pitch_class};
pub use features::{
    energy, energy_entropy, spectral_centroid_spread, spectral_entropy, spectral_flux,
    spectral_rolloff, zcr,
};
pub use mfcc::{mfcc, FilterbankSpec, Mfcc, N_MFCC};
pub use spectrum::{magnitude_spectrum, SpectrumAnalyzer};
pub use wav::{load_wav, write_wav};

/// Short-term features per frame.
pub const N_FRAME_FEATURES: usize = 34;
/// Mean and standard deviation of every short-term feature.
pub const N_PARTITION_FEATURES: usize = 2 * N_FRAME_FEATURES;

/// Column names of the 34 short-term features, in storage order.
pub const FRAME_FEATURE_NAMES: [&str; N_FRAME_FEATURES] = [
    "zcr",
    "energy",
    "energy_entropy",
    "spectral_centroid",
    "spectral_spread",
    "spectral_entropy",
    "spectral_flux",
    "spectral_rolloff",
    "mfcc_1",
    "mfcc_2",
    "mfcc_3",
    "mfcc_4",
    "mfcc_5",
    "mfcc_6",
    "mfcc_7",
    "mfcc_8",
    "mfcc_9",
    "mfcc_10",
    "mfcc_11",
    "mfcc_12",
    "mfcc_13",
    "chroma_1",
    "chroma_2",
    "chroma_3",
    "chroma_4",
    "chroma_5",
    "chroma_6",
    "chroma_7",
    "chroma_8",
    "chroma_9",
    "chroma_10",
    "chroma_11",
    "chroma_12",
    "chroma_deviation",
];

/// Mono PCM audio.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Splits a clip into `n` contiguous pieces: the first `n - 1` hold
/// `floor(len / n)` samples and the last takes the rest.
pub fn partition_audio(clip: &AudioClip, n: usize) -> Result<Vec<AudioClip>> {
    if n == 0 {
        return Err(Error::InvalidArgument("partition count must be >= 1".into()));
    }
    let len = clip.len();
    if len < n {
        return Err(Error::InvalidArgument(format!(
            "clip of {len} samples cannot be split into {n} partitions"
        )));
    }
    let size = len / n;
    Ok((0..n)
        .map(|i| {
            let end = if i + 1 == n { len } else { (i + 1) * size };
            AudioClip {
                samples: clip.samples[i * size..end].to_vec(),
                sample_rate: clip.sample_rate,
            }
        })
        .collect())
}

fn seconds_to_samples(s: f64, rate: u32, what: &str) -> Result<usize> {
    if s.is_nan() || s <= 0.0 {
        return Err(Error::InvalidArgument(format!("{what} must be positive, got {s}")));
    }
    let n = (s * rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{what} of {s} s is shorter than one sample")));
    }
    Ok(n)
}

/// Windows of `round(window_s * rate)` samples every `round(step_s * rate)`
/// samples; trailing samples that cannot fill a window are dropped.
pub fn frame_signal(clip: &AudioClip, window_s: f64, step_s: f64) -> Result<Vec<&[f64]>> {
    let win = seconds_to_samples(window_s, clip.sample_rate, "window")?;
    let step = seconds_to_samples(step_s, clip.sample_rate, "step")?;
    let len = clip.len();
    if win > len {
        return Ok(Vec::new());
    }
    Ok((0..=(len - win) / step)
        .map(|i| &clip.samples[i * step..i * step + win])
        .collect())
}

/// The 34 short-term descriptors of one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameFeatures(pub [f64; N_FRAME_FEATURES]);

impl FrameFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        FRAME_FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.0[i])
    }
}

/// Feature-extraction settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_partitions: usize,
    pub window_s: f64,
    pub step_s: f64,
    pub hamming: bool,
    /// Sub-frames / sub-bands for the two entropy features.
    pub entropy_blocks: usize,
    pub rolloff_fraction: f64,
    pub filterbank: FilterbankSpec,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_partitions: 6,
            window_s: 0.050,
            step_s: 0.025,
            hamming: false,
            entropy_blocks: 10,
            rolloff_fraction: 0.90,
            filterbank: FilterbankSpec::default(),
        }
    }
}

/// Reusable per-frame-length state (FFT plan, filterbank weights).
pub struct FrameAnalyzer {
    spectrum: SpectrumAnalyzer,
    mfcc: Mfcc,
    sample_rate: u32,
    entropy_blocks: usize,
    rolloff_fraction: f64,
}

impl FrameAnalyzer {
    pub fn new(cfg: &FeatureConfig, frame_len: usize, sample_rate: u32) -> Self {
        FrameAnalyzer {
            spectrum: SpectrumAnalyzer::new(frame_len, cfg.hamming),
            mfcc: Mfcc::new(&cfg.filterbank, frame_len / 2, sample_rate),
            sample_rate,
            entropy_blocks: cfg.entropy_blocks,
            rolloff_fraction: cfg.rolloff_fraction,
        }
    }

    pub fn spectrum(&self, frame: &[f64]) -> Vec<f64> {
        self.spectrum.magnitudes(frame)
    }

    /// Features of `frame`, with flux measured against `previous` (pass the
    /// frame's own spectrum for the first frame of a partition).
    pub fn features(&self, frame: &[f64], spec: &[f64], previous: &[f64]) -> Result<FrameFeatures> {
        let mut f = [0.0; N_FRAME_FEATURES];
        f[0] = zcr(frame);
        f[1] = energy(frame);
        f[2] = energy_entropy(frame, self.entropy_blocks)?;
        let (c, s) = spectral_centroid_spread(spec);
        f[3] = c;
        f[4] = s;
        f[5] = spectral_entropy(spec, self.entropy_blocks)?;
        f[6] = spectral_flux(spec, previous);
        f[7] = spectral_rolloff(spec, self.rolloff_fraction);
        f[8..21].copy_from_slice(&self.mfcc.coefficients(spec));
        let (ch, dev) = chroma(spec, self.sample_rate);
        f[21..33].copy_from_slice(&ch);
        f[33] = dev;
        Ok(FrameFeatures(f))
    }
}

/// Short-term features of every frame of a clip, flux chained within it.
pub fn frame_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<FrameFeatures>> {
    let frames = frame_signal(clip, cfg.window_s, cfg.step_s)?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let analyzer = FrameAnalyzer::new(cfg, first.len(), clip.sample_rate);
    let mut out = Vec::with_capacity(frames.len());
    let mut prev: Option<Vec<f64>> = None;
    for frame in frames {
        let spec = analyzer.spectrum(frame);
        let p = prev.as_deref().unwrap_or(&spec);
        out.push(analyzer.features(frame, &spec, p)?);
        prev = Some(spec);
    }
    Ok(out)
}

/// Per-partition `[mean(34) | population std(34)]` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedAudioFeatures {
    rows: Vec<[f64; N_PARTITION_FEATURES]>,
}

impl PartitionedAudioFeatures {
    pub fn new(rows: Vec<[f64; N_PARTITION_FEATURES]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("no partitions".into()));
        }
        Ok(PartitionedAudioFeatures { rows })
    }

    pub fn rows(&self) -> &[[f64; N_PARTITION_FEATURES]] {
        &self.rows
    }

    pub fn n_partitions(&self) -> usize {
        self.rows.len()
    }

    /// `[N, 68]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.rows.iter().flat_map(|r| r.iter().map(|&v| T::of(v))).collect();
        Tensor::new(&[self.rows.len(), N_PARTITION_FEATURES], data).expect("row width")
    }

    /// CSV header `f00_mean..f33_mean,f00_std..f33_std`.
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = (0..N_FRAME_FEATURES).map(|i| format!("f{i:02}_mean")).collect();
        h.extend((0..N_FRAME_FEATURES).map(|i| format!("f{i:02}_std")));
        h
    }
}

/// Mean and population standard deviation of each column.
pub fn summarize(frames: &[FrameFeatures]) -> [f64; N_PARTITION_FEATURES] {
    let n = frames.len() as f64;
    let mut out = [0.0; N_PARTITION_FEATURES];
    for j in 0..N_FRAME_FEATURES {
        let mean = frames.iter().map(|f| f.0[j]).sum::<f64>() / n;
        let var = frames.iter().map(|f| (f.0[j] - mean).powi(2)).sum::<f64>() / n;
        out[j] = mean;
        out[N_FRAME_FEATURES + j] = var.sqrt();
    }
    out
}

/// Splits the clip into `cfg.n_partitions` pieces and summarizes each.
/// Partitions are processed in parallel; the result does not depend on
/// scheduling.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<PartitionedAudioFeatures> {
    let parts = partition_audio(clip, cfg.n_partitions)?;
    let rows = parts
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let frames = frame_features(part, cfg)?;
            if frames.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "partition {} has {} samples ({:.3} s), too short for two {} s frames",
                    i + 1,
                    part.len(),
                    part.duration_s(),
                    cfg.window_s
                )));
            }
            Ok(summarize(&frames))
        })
        .collect::<Result<Vec<_>>>()?;
    PartitionedAudioFeatures::new(rows)
}
