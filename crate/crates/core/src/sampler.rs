//! Stochastic one-frame-per-partition selection.
//!
//! Every draw is a pure function of its seed. Seeds are derived by hashing
//! `(base seed, video id, epoch or draw index)` with SplitMix64 and feed a
//! ChaCha8 stream, so a plan does not depend on the order in which videos
//! are visited.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `n` contiguous, time-ordered frame ranges covering `0..total_frames`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePartitioning {
    total_frames: usize,
    boundaries: Vec<Range<usize>>,
}

impl FramePartitioning {
    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn n_partitions(&self) -> usize {
        self.boundaries.len()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.boundaries
    }
}

/// First `n - 1` partitions get `floor(total / n)` frames, the last the rest.
pub fn partition_frames(total_frames: usize, n: usize) -> Result<FramePartitioning> {
    if n == 0 {
        return Err(Error::InvalidArgument("partition count must be >= 1".into()));
    }
    if total_frames < n {
        return Err(Error::InvalidArgument(format!(
            "{total_frames} frames cannot fill {n} partitions"
        )));
    }
    let size = total_frames / n;
    let boundaries = (0..n)
        .map(|i| i * size..if i + 1 == n { total_frames } else { (i + 1) * size })
        .collect();
    Ok(FramePartitioning {
        total_frames,
        boundaries,
    })
}

/// One frame index per partition, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FrameCombination(Vec<usize>);

impl FrameCombination {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn a video id into a seed component.
pub fn hash_id(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Folds seed components into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

// Domain tags keep training and test streams apart.
const TRAIN_STREAM: u64 = 0x7261_696E;
const TEST_STREAM: u64 = 0x7465_7374;

/// Draws one frame uniformly and independently from each partition.
pub fn sample_combination(partitioning: &FramePartitioning, seed: u64) -> FrameCombination {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FrameCombination(
        partitioning
            .boundaries
            .iter()
            .map(|r| rng.gen_range(r.clone()))
            .collect(),
    )
}

/// The training combination of `video_id` at `epoch`.
pub fn epoch_plan(
    partitioning: &FramePartitioning,
    video_id: &str,
    epoch: u64,
    base_seed: u64,
) -> FrameCombination {
    let seed = derive_seed(&[TRAIN_STREAM, base_seed, hash_id(video_id), epoch]);
    sample_combination(partitioning, seed)
}

/// `k` independent test-time combinations (duplicates allowed).
pub fn test_combinations(partitioning: &FramePartitioning, k: usize, seed: u64) -> Vec<FrameCombination> {
    (0..k as u64)
        .map(|j| sample_combination(partitioning, derive_seed(&[TEST_STREAM, seed, j])))
        .collect()
}
