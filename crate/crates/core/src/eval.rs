//! Average Accuracy per trait and Mean Average Accuracy.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{TraitScores, TRAIT_NAMES};

/// Per-trait Average Accuracy and their mean over `n_videos` videos.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub n_videos: usize,
    pub average_accuracy: TraitScores,
    pub mean_average_accuracy: f64,
}

fn validate(targets: &[TraitScores], predictions: &[TraitScores]) -> Result<()> {
    if targets.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets but {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no videos to evaluate".into()));
    }
    for (what, set) in [("target", targets), ("prediction", predictions)] {
        for (i, row) in set.iter().enumerate() {
            for (j, &v) in row.as_array().iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "{what} {i} {} = {v} is outside [0, 1]",
                        TRAIT_NAMES[j]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `(1/N) * sum_i (1 - |target_ij - y_ij|)` for trait index `j` (0-based).
pub fn average_accuracy(targets: &[TraitScores], predictions: &[TraitScores], j: usize) -> Result<f64> {
    if j >= 5 {
        return Err(Error::InvalidArgument(format!("trait index {j} out of range")));
    }
    validate(targets, predictions)?;
    let sum: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(t, y)| 1.0 - (t.as_array()[j] - y.as_array()[j]).abs())
        .sum();
    Ok(sum / targets.len() as f64)
}

pub fn mean_average_accuracy(targets: &[TraitScores], predictions: &[TraitScores]) -> Result<MetricReport> {
    let mut acc = [0.0; 5];
    for (j, a) in acc.iter_mut().enumerate() {
        *a = average_accuracy(targets, predictions, j)?;
    }
    Ok(MetricReport {
        n_videos: targets.len(),
        average_accuracy: TraitScores::from_array(acc),
        mean_average_accuracy: acc.iter().sum::<f64>() / 5.0,
    })
}

/// Reads a `video_id,e,a,c,n,o` CSV.
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<(String, TraitScores)>> {
    let path = path.as_ref();
    let malformed = |detail: String| Error::Malformed {
        path: path.into(),
        detail,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => malformed(format!("{other:?}")),
    })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != ["video_id", "e", "a", "c", "n", "o"] {
        return Err(malformed(format!("expected header video_id,e,a,c,n,o, got {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let id = rec.get(0).unwrap_or_default().trim().to_string();
        let mut v = [0.0; 5];
        for (j, slot) in v.iter_mut().enumerate() {
            let cell = rec.get(j + 1).unwrap_or_default().trim();
            *slot = cell.parse().map_err(|_| {
                malformed(format!("row {}: {} = {cell:?} is not a number", line + 2, TRAIT_NAMES[j]))
            })?;
        }
        out.push((id, TraitScores::from_array(v)));
    }
    Ok(out)
}

pub fn write_scores_csv(path: impl AsRef<Path>, rows: &[(String, TraitScores)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Malformed {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let io = |e: csv::Error| Error::Malformed {
        path: path.into(),
        detail: e.to_string(),
    };
    w.write_record(["video_id", "e", "a", "c", "n", "o"]).map_err(io)?;
    for (id, s) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(s.as_array().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pairs targets and predictions by video id. Every target needs a
/// prediction; extra predictions are an error.
pub fn align_by_id(
    targets: &[(String, TraitScores)],
    predictions: &[(String, TraitScores)],
) -> Result<(Vec<TraitScores>, Vec<TraitScores>)> {
    let mut by_id = std::collections::HashMap::new();
    for (id, s) in predictions {
        if by_id.insert(id.as_str(), *s).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate prediction for {id}")));
        }
    }
    if by_id.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets but {} predictions",
            targets.len(),
            by_id.len()
        )));
    }
    let mut t = Vec::with_capacity(targets.len());
    let mut p = Vec::with_capacity(targets.len());
    for (id, s) in targets {
        let y = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("no prediction for video {id}")))?;
        t.push(*s);
        p.push(*y);
    }
    Ok((t, p))
}
