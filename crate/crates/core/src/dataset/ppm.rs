//! Binary PPM (P6, maxval 255) frames.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Side length of every face-aligned frame.
pub const FRAME_SIZE: usize = 112;

fn malformed(path: &Path, detail: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Parses a P6 image into `(width, height, rgb bytes)`.
pub fn decode_ppm<'a>(bytes: &'a [u8], path: &Path) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: "expected binary PPM magic P6".into(),
        });
    }
    let mut at = 2;
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        loop {
            match bytes.get(at) {
                Some(b) if b.is_ascii_whitespace() => at += 1,
                Some(b'#') => {
                    while bytes.get(at).is_some_and(|&b| b != b'\n') {
                        at += 1;
                    }
                }
                _ => break,
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(u8::is_ascii_digit) {
            at += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..at])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(path, format!("header field {name} is not a number")))?;
    }
    if !bytes.get(at).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed(path, "header must end with one whitespace byte"));
    }
    at += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            detail: format!("maxval {maxval}, only 255 is supported"),
        });
    }
    let need = w * h * 3;
    let payload = &bytes[at..];
    if payload.len() < need {
        return Err(malformed(
            path,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    Ok((w, h, &payload[..need]))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3, "rgb payload size");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Interleaved RGB bytes to a channel-major `[3, H, W]` tensor in [0, 1].
pub fn rgb_to_tensor<T: Real>(width: usize, height: usize, rgb: &[u8]) -> Tensor<T> {
    let plane = width * height;
    let scale = T::one() / T::of(255.0);
    Tensor::from_fn(&[3, height, width], |i| {
        let (c, p) = (i / plane, i % plane);
        T::of(rgb[p * 3 + c] as f64) * scale
    })
}

/// Loads a `FRAME_SIZE`-square P6 frame as `[3, 112, 112]` in [0, 1].
pub fn load_frame<T: Real>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    load_frame_sized(path, FRAME_SIZE)
}

pub fn load_frame_sized<T: Real>(path: impl AsRef<Path>, size: usize) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, rgb) = decode_ppm(&bytes, path)?;
    if (w, h) != (size, size) {
        return Err(Error::Validation {
            path: path.into(),
            detail: format!("frame is {w}x{h}, expected {size}x{size}"),
        });
    }
    Ok(rgb_to_tensor(w, h, rgb))
}

pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(width, height, rgb)).map_err(|e| Error::io(path, e))
}
