//! 16-bit PCM WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

fn map_err(path: &Path, e: hound::Error) -> Error {
    match e {
        // the file is already open, so read failures mean truncation
        hound::Error::IoError(source) => Error::Malformed {
            path: path.into(),
            detail: format!("truncated or unreadable data: {source}"),
        },
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.into(),
            detail: "encoding not supported (only integer PCM is read)".into(),
        },
        other => Error::Malformed {
            path: path.into(),
            detail: other.to_string(),
        },
    }
}

/// Reads a 16-bit PCM mono or stereo file. Samples are scaled by 1/32768
/// and stereo frames are averaged to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!(
                "{:?} {}-bit samples; only 16-bit integer PCM is supported",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!("{} channels; only mono or stereo is supported", spec.channels),
        });
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<i16>, _>>()
        .map_err(|e| map_err(path, e))?;
    let scale = 1.0 / 32768.0;
    let samples: Vec<f64> = if spec.channels == 2 {
        if raw.len() % 2 != 0 {
            return Err(Error::Malformed {
                path: path.into(),
                detail: "stereo data ends mid-frame".into(),
            });
        }
        raw.chunks_exact(2)
            .map(|lr| (lr[0] as f64 * scale + lr[1] as f64 * scale) / 2.0)
            .collect()
    } else {
        raw.iter().map(|&s| s as f64 * scale).collect()
    };
    AudioClip::new(samples, spec.sample_rate).map_err(|e| Error::Validation {
        path: path.into(),
        detail: e.to_string(),
    })
}

fn map_write_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => map_err(path, other),
    }
}

/// Writes a mono clip as 16-bit PCM, rounding to the nearest level.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = WavWriter::new(std::io::BufWriter::new(file), spec).map_err(|e| map_write_err(path, e))?;
    for &s in clip.samples() {
        w.write_sample(quantize(s)).map_err(|e| map_write_err(path, e))?;
    }
    w.finalize().map_err(|e| map_write_err(path, e))
}

pub(crate) fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
