//! Mini-batch SGD with momentum, weight decay and per-step learning-rate
//! decay; per-epoch frame resampling; MSE curve and checkpoints.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::FeatureConfig;
use crate::checkpoint::Checkpoint;
use crate::dataset::{FeatureScaler, VideoSample};
use crate::error::{Error, Result};
use crate::eval::{mean_average_accuracy, MetricReport};
use crate::models::{predict_stochastic, Architecture, Model, ModelConfig, ModelInput, ParamSet, TraitScores};
use crate::sampler::{derive_seed, epoch_plan, hash_id, partition_frames};
use crate::tensor::{Precision, Real, Tensor};

/// Which inputs reach the model. Dropped modalities are fed as zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[default]
    Both,
    Audio,
    Visual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub epochs: usize,
    pub base_seed: u64,
    pub architecture: Architecture,
    pub n_partitions: usize,
    /// Write a checkpoint every this many epochs (0: only the final one).
    pub checkpoint_interval: usize,
    pub decay_biases: bool,
    pub precision: Precision,
    pub modality: Modality,
    /// Replaces the built-in layer table for `architecture`.
    pub layout: Option<ModelConfig>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            learning_rate: 0.05,
            weight_decay: 5e-4,
            momentum: 0.9,
            batch_size: 128,
            lr_decay: 1e-4,
            epochs: 500,
            base_seed: 0,
            architecture: Architecture::Lstm,
            n_partitions: 6,
            checkpoint_interval: 0,
            decay_biases: true,
            precision: Precision::F32,
            modality: Modality::Both,
            layout: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lr_decay", self.lr_decay),
            ("momentum", self.momentum),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.momentum >= 1.0 {
            return bad(format!("momentum must be < 1, got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.n_partitions == 0 {
            return bad("n_partitions must be >= 1".into());
        }
        let layout = self.model_config();
        if layout.architecture() != self.architecture {
            return bad(format!(
                "layout is for {} but architecture is {}",
                layout.architecture(),
                self.architecture
            ));
        }
        if layout.n_partitions() != self.n_partitions {
            return bad(format!(
                "layout expects {} partitions but n_partitions is {}",
                layout.n_partitions(),
                self.n_partitions
            ));
        }
        layout.param_specs().map(|_| ())
    }

    /// The model layout: `layout` if given, else the built-in table with
    /// this config's partition count.
    pub fn model_config(&self) -> ModelConfig {
        if let Some(l) = &self.layout {
            return l.clone();
        }
        let mut c = ModelConfig::full(self.architecture);
        match &mut c {
            ModelConfig::Conv3d(k) => k.n_partitions = self.n_partitions,
            ModelConfig::Lstm(k) => k.n_partitions = self.n_partitions,
        }
        c
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            n_partitions: self.n_partitions,
            ..FeatureConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainerConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// Momentum buffers, one per parameter, and the optimizer step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: ParamSet<T>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        OptimizerState {
            velocity: params.zeros_like(),
            step: 0,
        }
    }
}

pub fn effective_lr(config: &TrainerConfig, step: u64) -> f64 {
    config.learning_rate / (1.0 + step as f64 * config.lr_decay)
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".bias") || name.rsplit('.').next().is_some_and(|l| l.starts_with("b_"))
}

/// `v = m*v + (g + wd*w)`, `w -= lr_eff*v`, with `lr_eff = lr/(1 + step*decay)`.
pub fn sgd_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut OptimizerState<T>,
    config: &TrainerConfig,
) -> Result<()> {
    params.check_matches(grads)?;
    params.check_matches(&state.velocity)?;
    let lr = T::of(effective_lr(config, state.step));
    let m = T::of(config.momentum);
    for (name, w) in params.iter_mut() {
        let g = grads.get(name)?;
        let v = state.velocity.get_mut(name)?;
        let wd = if config.decay_biases || !is_bias(name) {
            T::of(config.weight_decay)
        } else {
            T::zero()
        };
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = m * *vi + (gi + wd * *wi);
            *wi -= lr * *vi;
        }
    }
    state.step += 1;
    Ok(())
}

/// Builds the model input for `sample` from the chosen frame indices.
pub fn sample_input<T: Real>(
    sample: &VideoSample,
    frames: &[usize],
    scaler: &FeatureScaler,
    layout: &ModelConfig,
    modality: Modality,
) -> Result<ModelInput<T>> {
    let size = layout.frame_size();
    let frames = frames
        .iter()
        .map(|&i| match modality {
            Modality::Audio => Ok(Tensor::zeros(&[3, size, size])),
            _ => sample.load_frame(i, size),
        })
        .collect::<Result<Vec<_>>>()?;
    let audio = match modality {
        Modality::Visual => Tensor::zeros(&[layout.n_partitions(), layout.audio_features()]),
        _ => scaler.apply(&sample.audio),
    };
    Ok(ModelInput { frames, audio })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mse: f64,
    pub learning_rate: f64,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub scaler: FeatureScaler,
    /// Mean training MSE of every epoch, in order.
    pub mse: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
}

const INIT_STREAM: u64 = 0x696E_6974;
const SHUFFLE_STREAM: u64 = 0x7368_7566;

/// Files written under a training output directory.
pub const MSE_CURVE_FILE: &str = "mse.csv";
pub const FINAL_CHECKPOINT_FILE: &str = "model.impn";

pub fn save_checkpoint<T: Real>(path: &Path, model: &Model<T>, scaler: &FeatureScaler) -> Result<()> {
    let mut set = model.params().clone();
    scaler.insert_into(&mut set);
    Checkpoint::new(model.architecture(), &set).write(path)
}

/// Restores a model saved by [`save_checkpoint`] into `layout`.
pub fn load_checkpoint<T: Real>(path: &Path, layout: &ModelConfig) -> Result<(Model<T>, FeatureScaler)> {
    let ckpt = Checkpoint::read(path)?;
    if ckpt.architecture != layout.architecture() {
        return Err(Error::Validation {
            path: path.into(),
            detail: format!(
                "checkpoint holds a {} model, expected {}",
                ckpt.architecture,
                layout.architecture()
            ),
        });
    }
    let scaler = FeatureScaler::from_set(&ckpt.tensors)?;
    let mut params = ParamSet::new();
    for (name, t) in ckpt.tensors.iter() {
        if name != FeatureScaler::MEAN_KEY && name != FeatureScaler::STD_KEY {
            params.insert(name, t.cast::<T>());
        }
    }
    let model = Model::from_params(layout.clone(), params).map_err(|e| Error::Validation {
        path: path.into(),
        detail: e.to_string(),
    })?;
    Ok((model, scaler))
}

fn write_curve(path: &Path, mse: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,mse\n");
    for (i, m) in mse.iter().enumerate() {
        text.push_str(&format!("{},{m}\n", i + 1));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains from scratch on `samples`. When `out_dir` is given, the MSE
/// curve, interval checkpoints and the final checkpoint are written there.
/// `on_epoch` is called after every epoch.
pub fn train<T: Real>(
    samples: &[VideoSample],
    config: &TrainerConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let layout = config.model_config();
    let n = layout.n_partitions();
    let mut partitionings = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        partitionings.push(partition_frames(s.frames.len(), n).map_err(|e| {
            Error::InvalidArgument(format!("video {}: {e}", s.video_id))
        })?);
        targets.push(
            s.traits
                .ok_or_else(|| Error::InvalidArgument(format!("video {} has no ground truth", s.video_id)))?,
        );
        if s.audio.n_partitions() != n {
            return Err(Error::InvalidArgument(format!(
                "video {}: {} audio partitions, expected {n}",
                s.video_id,
                s.audio.n_partitions()
            )));
        }
    }
    // Stored as f32 in checkpoints; round now so a reloaded model sees the
    // same inputs it was trained on.
    let mut scaler = FeatureScaler::fit(samples.iter().map(|s| &s.audio))?;
    for v in scaler.mean.iter_mut().chain(scaler.std.iter_mut()) {
        *v = *v as f32 as f64;
    }

    let mut model = Model::<T>::init(layout.clone(), derive_seed(&[INIT_STREAM, config.base_seed]))?;
    let mut state = OptimizerState::new(model.params());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut mse = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[SHUFFLE_STREAM, config.base_seed, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<Result<(T, ParamSet<T>)>> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    let combo = epoch_plan(&partitionings[i], &s.video_id, epoch as u64, config.base_seed);
                    let input = sample_input(s, combo.indices(), &scaler, &layout, config.modality)?;
                    model.loss_and_grads(&input, &targets[i])
                })
                .collect();
            let mut total: Option<ParamSet<T>> = None;
            for r in results {
                let (loss, g) = r?;
                loss_sum += loss.as_f64();
                match &mut total {
                    Some(t) => t.add_assign(&g)?,
                    None => total = Some(g),
                }
            }
            let mut grads = total.expect("non-empty batch");
            grads.scale(T::one() / T::of(batch.len() as f64));
            sgd_step(model.params_mut(), &grads, &mut state, config)?;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mse: loss_sum / samples.len() as f64,
            learning_rate: effective_lr(config, state.step),
        };
        mse.push(stats.mse);
        on_epoch(&stats);
        if let Some(dir) = out_dir {
            let last = epoch + 1 == config.epochs;
            if config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0 && !last {
                let p = dir.join(format!("epoch_{:04}.impn", epoch + 1));
                save_checkpoint(&p, &model, &scaler)?;
                checkpoints.push(p);
            }
        }
    }
    if let Some(dir) = out_dir {
        let p = dir.join(FINAL_CHECKPOINT_FILE);
        save_checkpoint(&p, &model, &scaler)?;
        checkpoints.push(p);
        write_curve(&dir.join(MSE_CURVE_FILE), &mse)?;
    }
    Ok(TrainOutcome {
        model,
        scaler,
        mse,
        checkpoints,
    })
}

/// Averaged prediction over `k` frame combinations for every sample. Each
/// video's combinations are seeded by `(seed, video id)`.
pub fn predict_samples<T: Real>(
    samples: &[VideoSample],
    model: &Model<T>,
    scaler: &FeatureScaler,
    k: usize,
    seed: u64,
    modality: Modality,
) -> Result<Vec<(String, TraitScores)>> {
    let layout = model.config();
    let size = layout.frame_size();
    samples
        .iter()
        .map(|s| {
            let input = sample_input::<T>(s, &[], scaler, layout, modality)?;
            let frame_at = |i: usize| match modality {
                Modality::Audio => Ok(Tensor::zeros(&[3, size, size])),
                _ => s.load_frame(i, size),
            };
            let p = predict_stochastic(
                model,
                s.frames.len(),
                frame_at,
                &input.audio,
                k,
                derive_seed(&[seed, hash_id(&s.video_id)]),
            )
            .map_err(|e| Error::InvalidArgument(format!("video {}: {e}", s.video_id)))?;
            Ok((s.video_id.clone(), p))
        })
        .collect()
}

/// Stochastic predictions for every sample scored against its ground truth.
pub fn evaluate<T: Real>(
    samples: &[VideoSample],
    model: &Model<T>,
    scaler: &FeatureScaler,
    k: usize,
    seed: u64,
    modality: Modality,
) -> Result<MetricReport> {
    let targets = samples
        .iter()
        .map(|s| {
            s.traits
                .ok_or_else(|| Error::InvalidArgument(format!("video {} has no ground truth", s.video_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<TraitScores> = predict_samples(samples, model, scaler, k, seed, modality)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    mean_average_accuracy(&targets, &preds)
}
