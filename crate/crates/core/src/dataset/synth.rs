//! Deterministic synthetic videos whose traits are recoverable only by
//! combining both modalities.
//!
//! Per video, four generating parameters in [0.05, 0.95] are drawn on a
//! 1/1000 grid:
//! - trait 1: frame background brightness,
//! - trait 2: horizontal position of a red square that drifts downwards,
//! - trait 3: tone frequency (200 to 800 Hz),
//! - trait 4: amplitude-modulation rate (2 to 16 Hz),
//! - trait 5: the mean of traits 1 and 3.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ppm::{write_ppm, FRAME_SIZE};
use crate::audio::{write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::models::TraitScores;
use crate::sampler::derive_seed;

pub const SYNTH_FRAMES: usize = 36;
pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
const DURATION_S: f64 = 15.0;
const SQUARE: usize = 20;

/// Generating parameters of one synthetic video.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub brightness: f64,
    pub square_x: f64,
    pub tone: f64,
    pub modulation: f64,
}

impl SyntheticVideo {
    /// Video `index` of the set generated from `seed`.
    pub fn new(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, index as u64, 0]));
        let mut draw = || 0.05 + 0.9 * rng.gen_range(0..=1000u32) as f64 / 1000.0;
        SyntheticVideo {
            video_id: format!("synth_{index:03}"),
            brightness: draw(),
            square_x: draw(),
            tone: draw(),
            modulation: draw(),
        }
    }

    pub fn traits(&self) -> TraitScores {
        TraitScores::from_array([
            self.brightness,
            self.square_x,
            self.tone,
            self.modulation,
            0.5 * (self.brightness + self.tone),
        ])
    }

    pub fn tone_hz(&self) -> f64 {
        200.0 + 600.0 * self.tone
    }

    pub fn modulation_hz(&self) -> f64 {
        2.0 + 14.0 * self.modulation
    }

    /// Interleaved RGB bytes of frame `f`.
    pub fn render_frame(&self, seed: u64, index: usize, f: usize) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, index as u64, 1, f as u64]));
        let bg = 0.15 + 0.7 * self.brightness + rng.gen_range(-0.03..0.03);
        let travel = (FRAME_SIZE - SQUARE - 12) as f64;
        let x0 = (6.0 + self.square_x * travel).round() as i64 + rng.gen_range(-2..=2);
        let x0 = x0.clamp(0, (FRAME_SIZE - SQUARE) as i64) as usize;
        let y0 = 10 + f * (FRAME_SIZE - SQUARE - 20) / (SYNTH_FRAMES - 1);
        let mut rgb = Vec::with_capacity(FRAME_SIZE * FRAME_SIZE * 3);
        for y in 0..FRAME_SIZE {
            for x in 0..FRAME_SIZE {
                let inside = (x0..x0 + SQUARE).contains(&x) && (y0..y0 + SQUARE).contains(&y);
                let px = if inside { [0.95, 0.1, 0.1] } else { [bg; 3] };
                for v in px {
                    let v = (v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
                    rgb.push((v * 255.0).round() as u8);
                }
            }
        }
        rgb
    }

    /// 15 s of an amplitude-modulated tone with a little noise.
    pub fn render_audio(&self, seed: u64, index: usize) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, index as u64, 2]));
        let phase_tone = rng.gen_range(0.0..TAU);
        let phase_mod = rng.gen_range(0.0..TAU);
        let (f0, fm) = (self.tone_hz(), self.modulation_hz());
        let fs = SYNTH_SAMPLE_RATE as f64;
        let n = (DURATION_S * fs) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let env = 0.4 * (1.0 + 0.9 * (TAU * fm * t + phase_mod).sin());
                env * (TAU * f0 * t + phase_tone).sin() + rng.gen_range(-0.01..0.01)
            })
            .collect();
        AudioClip::new(samples, SYNTH_SAMPLE_RATE).expect("non-empty clip")
    }
}

fn write_video(out_dir: &Path, seed: u64, index: usize) -> Result<(SyntheticVideo, PathBuf, PathBuf)> {
    let v = SyntheticVideo::new(seed, index);
    let rel_frames = PathBuf::from("videos").join(&v.video_id);
    let dir = out_dir.join(&rel_frames);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for f in 0..SYNTH_FRAMES {
        let rgb = v.render_frame(seed, index, f);
        write_ppm(dir.join(format!("frame_{f:03}.ppm")), FRAME_SIZE, FRAME_SIZE, &rgb)?;
    }
    let rel_audio = rel_frames.join("audio.wav");
    write_wav(out_dir.join(&rel_audio), &v.render_audio(seed, index))?;
    Ok((v, rel_frames, rel_audio))
}

/// Writes `n_videos` videos plus `manifest.csv` under `out_dir` and returns
/// the manifest path. Output is byte-identical for a given seed.
pub fn generate_synthetic_dataset(n_videos: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    if n_videos == 0 {
        return Err(Error::InvalidArgument("n_videos must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let written: Vec<Result<_>> = (0..n_videos)
        .into_par_iter()
        .map(|i| write_video(out_dir, seed, i))
        .collect();
    let manifest = out_dir.join("manifest.csv");
    let csv_err = |e: csv::Error| Error::Malformed {
        path: manifest.clone(),
        detail: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&manifest).map_err(csv_err)?;
    w.write_record(["video_id", "frames_dir", "audio_path", "e", "a", "c", "n", "o"])
        .map_err(csv_err)?;
    for r in written {
        let (v, frames, audio) = r?;
        let mut rec = vec![
            v.video_id.clone(),
            frames.to_string_lossy().replace('\\', "/"),
            audio.to_string_lossy().replace('\\', "/"),
        ];
        rec.extend(v.traits().as_array().iter().map(|t| t.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
