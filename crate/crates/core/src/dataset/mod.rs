//! On-disk dataset layout: a CSV manifest, one directory of PPM frames and
//! one WAV file per video.

mod ppm;
mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::{extract_features, load_wav, FeatureConfig, PartitionedAudioFeatures, N_PARTITION_FEATURES};
use crate::error::{Error, Result};
use crate::models::{ParamSet, TraitScores, TRAIT_NAMES};
use crate::tensor::{Real, Tensor};

pub use ppm::{
    decode_ppm, encode_ppm, load_frame, load_frame_sized, rgb_to_tensor, write_ppm, FRAME_SIZE,
};
pub use synth::{generate_synthetic_dataset, SyntheticVideo, SYNTH_FRAMES, SYNTH_SAMPLE_RATE};

const BASE_COLUMNS: [&str; 3] = ["video_id", "frames_dir", "audio_path"];
const TRAIT_COLUMNS: [&str; 5] = ["e", "a", "c", "n", "o"];

/// One manifest row with paths resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub video_id: String,
    pub frames_dir: PathBuf,
    pub audio_path: PathBuf,
    pub traits: Option<TraitScores>,
}

fn invalid(path: &Path, detail: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Reads and validates a `video_id,frames_dir,audio_path[,e,a,c,n,o]` manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| invalid(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_traits = if header == BASE_COLUMNS {
        false
    } else if header.len() == 8 && header[..3] == BASE_COLUMNS && header[3..] == TRAIT_COLUMNS {
        true
    } else {
        return Err(invalid(
            path,
            format!(
                "header must be video_id,frames_dir,audio_path[,e,a,c,n,o], got {}",
                header.join(",")
            ),
        ));
    };

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| invalid(path, format!("row {row}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let video_id = field(0).to_string();
        if video_id.is_empty() {
            return Err(invalid(path, format!("row {row}: empty video_id")));
        }
        if !seen.insert(video_id.clone()) {
            return Err(invalid(path, format!("row {row}: duplicate video_id {video_id}")));
        }
        let frames_dir = base.join(field(1));
        if !frames_dir.is_dir() {
            return Err(invalid(
                path,
                format!("row {row} ({video_id}): frames_dir {} is not a directory", frames_dir.display()),
            ));
        }
        let audio_path = base.join(field(2));
        if !audio_path.is_file() {
            return Err(invalid(
                path,
                format!("row {row} ({video_id}): audio_path {} does not exist", audio_path.display()),
            ));
        }
        let traits = if has_traits {
            let mut v = [0.0; 5];
            for (j, slot) in v.iter_mut().enumerate() {
                let cell = field(3 + j);
                let x: f64 = cell.parse().map_err(|_| {
                    invalid(path, format!("row {row} ({video_id}): {} = {cell:?} is not a number", TRAIT_COLUMNS[j]))
                })?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(invalid(
                        path,
                        format!("row {row} ({video_id}): {} = {x} is outside [0, 1]", TRAIT_NAMES[j]),
                    ));
                }
                *slot = x;
            }
            Some(TraitScores::from_array(v))
        } else {
            None
        };
        out.push(SampleRecord {
            video_id,
            frames_dir,
            audio_path,
            traits,
        });
    }
    Ok(out)
}

/// Frame files (`*.ppm`) of a directory in lexicographic, i.e. temporal, order.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "ppm") {
            frames.push(p);
        }
    }
    frames.sort();
    Ok(frames)
}

/// A video ready for training or prediction: its frame files and the
/// partition audio features. Frames are decoded on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub video_id: String,
    pub frames: Vec<PathBuf>,
    pub audio: PartitionedAudioFeatures,
    pub traits: Option<TraitScores>,
}

impl VideoSample {
    pub fn load_frame<T: Real>(&self, i: usize, size: usize) -> Result<Tensor<T>> {
        load_frame_sized(&self.frames[i], size)
    }
}

/// Lists frames and extracts audio features for every record. A video with
/// fewer frames than partitions is rejected with its id.
pub fn load_samples(records: &[SampleRecord], features: &FeatureConfig) -> Result<Vec<VideoSample>> {
    let n = features.n_partitions;
    let loaded: Vec<Result<VideoSample>> = records
        .par_iter()
        .map(|r| {
            let frames = list_frames(&r.frames_dir)?;
            if frames.len() < n {
                return Err(invalid(
                    &r.frames_dir,
                    format!("video {} has {} frames, needs at least {n}", r.video_id, frames.len()),
                ));
            }
            let clip = load_wav(&r.audio_path)?;
            let audio = extract_features(&clip, features).map_err(|e| {
                invalid(&r.audio_path, format!("video {}: {e}", r.video_id))
            })?;
            Ok(VideoSample {
                video_id: r.video_id.clone(),
                frames,
                audio,
                traits: r.traits,
            })
        })
        .collect();
    loaded.into_iter().collect()
}

pub fn load_dataset(manifest: impl AsRef<Path>, features: &FeatureConfig) -> Result<Vec<VideoSample>> {
    load_samples(&load_manifest(manifest)?, features)
}

/// Per-column standardization of the 68 audio statistics, fitted on a
/// training set. Columns with zero spread are only centred.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub const MEAN_KEY: &'static str = "audio_norm.mean";
    pub const STD_KEY: &'static str = "audio_norm.std";

    pub fn identity() -> Self {
        FeatureScaler {
            mean: vec![0.0; N_PARTITION_FEATURES],
            std: vec![1.0; N_PARTITION_FEATURES],
        }
    }

    /// Mean and population std over every partition row of every sample.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a PartitionedAudioFeatures>) -> Result<Self> {
        let rows: Vec<&[f64; N_PARTITION_FEATURES]> = features.into_iter().flat_map(|f| f.rows()).collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a scaler on zero samples".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..N_PARTITION_FEATURES)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let std = (0..N_PARTITION_FEATURES)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 1e-12 * mean[j].abs().max(1.0) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureScaler { mean, std })
    }

    /// `[N, 68]` standardized tensor.
    pub fn apply<T: Real>(&self, f: &PartitionedAudioFeatures) -> Tensor<T> {
        let rows = f.rows();
        Tensor::from_fn(&[rows.len(), N_PARTITION_FEATURES], |i| {
            let (r, j) = (i / N_PARTITION_FEATURES, i % N_PARTITION_FEATURES);
            T::of((rows[r][j] - self.mean[j]) / self.std[j])
        })
    }

    pub fn insert_into<T: Real>(&self, set: &mut ParamSet<T>) {
        let to = |v: &[f64]| Tensor::vector(v.iter().map(|&x| T::of(x)).collect());
        set.insert(Self::MEAN_KEY, to(&self.mean));
        set.insert(Self::STD_KEY, to(&self.std));
    }

    /// Reads the scaler back from a tensor set (e.g. a checkpoint).
    pub fn from_set<T: Real>(set: &ParamSet<T>) -> Result<Self> {
        let read = |k: &str| -> Result<Vec<f64>> {
            let t = set.get(k)?;
            if t.shape() != [N_PARTITION_FEATURES] {
                return Err(Error::shape("FeatureScaler", k, format!("expected [68], got {:?}", t.shape())));
            }
            Ok(t.data().iter().map(|v| v.as_f64()).collect())
        };
        Ok(FeatureScaler {
            mean: read(Self::MEAN_KEY)?,
            std: read(Self::STD_KEY)?,
        })
    }
}
