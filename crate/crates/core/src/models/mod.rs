//! The two bi-modal architectures, their parameters, forward and backward
//! passes, and the stochastic averaged predictor.

mod config;
mod conv3d;
mod lstm;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers;
use crate::sampler::{partition_frames, test_combinations};
use crate::tensor::{Real, Tensor};

pub use config::{Conv2dStage, Conv3dConfig, Conv3dStage, LstmConfig, ModelConfig, ParamSpec};
pub use conv3d::stack_frames;
pub use params::ParamSet;

pub const N_TRAITS: usize = 5;

pub const TRAIT_NAMES: [&str; N_TRAITS] = [
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "neuroticism",
    "openness",
];

/// Big-Five trait values.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TraitScores {
    pub extraversion: f64,
    pub agreeableness: f64,
    pub conscientiousness: f64,
    pub neuroticism: f64,
    pub openness: f64,
}

impl TraitScores {
    pub fn from_array(v: [f64; N_TRAITS]) -> Self {
        TraitScores {
            extraversion: v[0],
            agreeableness: v[1],
            conscientiousness: v[2],
            neuroticism: v[3],
            openness: v[4],
        }
    }

    pub fn as_array(&self) -> [f64; N_TRAITS] {
        [
            self.extraversion,
            self.agreeableness,
            self.conscientiousness,
            self.neuroticism,
            self.openness,
        ]
    }

    pub fn in_unit_range(&self) -> bool {
        self.as_array().iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::vector(self.as_array().iter().map(|&v| T::of(v)).collect())
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        if t.shape() != [N_TRAITS] {
            return Err(Error::shape("TraitScores", "traits", format!("expected [5], got {:?}", t.shape())));
        }
        let mut v = [0.0; N_TRAITS];
        for (slot, x) in v.iter_mut().zip(t.data()) {
            *slot = x.as_f64();
        }
        Ok(Self::from_array(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Conv3d,
    Lstm,
}

impl Architecture {
    /// Tag byte used in checkpoints.
    pub fn tag(self) -> u8 {
        match self {
            Architecture::Conv3d => 0,
            Architecture::Lstm => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Architecture::Conv3d),
            1 => Some(Architecture::Lstm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Conv3d => "conv3d",
            Architecture::Lstm => "lstm",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv3d" => Ok(Architecture::Conv3d),
            "lstm" => Ok(Architecture::Lstm),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture {other:?} (expected conv3d or lstm)"
            ))),
        }
    }
}

/// Named activation shapes recorded during a traced forward pass.
pub type Trace = Vec<(String, Vec<usize>)>;

/// One frame per partition, in temporal order, plus the `[N, 68]` audio
/// feature block of the same partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    pub frames: Vec<Tensor<T>>,
    pub audio: Tensor<T>,
}

enum Cache<T> {
    Conv3d(conv3d::Cache<T>),
    Lstm(lstm::Cache<T>),
}

impl<T> Cache<T> {
    fn output(&self) -> &Tensor<T> {
        match self {
            Cache::Conv3d(c) => &c.output,
            Cache::Lstm(c) => &c.output,
        }
    }
}

/// A model layout together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamSet<T>,
}

impl<T: Real> Model<T> {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero. Values are drawn
    /// in `f64` from one ChaCha8 stream in declaration order, so both
    /// precisions start from the same point.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for spec in config.param_specs()? {
            let t = match spec.fan_in {
                Some(fan_in) => {
                    let b = 1.0 / (fan_in as f64).sqrt();
                    Tensor::from_fn(&spec.shape, |_| T::of(rng.gen_range(-b..=b)))
                }
                None => Tensor::zeros(&spec.shape),
            };
            params.insert(spec.name, t);
        }
        Ok(Model { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        let specs = config.param_specs()?;
        if specs.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} layout expects {} tensors, got {}",
                config.architecture(),
                specs.len(),
                params.len()
            )));
        }
        for spec in &specs {
            let t = params.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::shape(
                    "Model::from_params",
                    spec.name.clone(),
                    format!("expected {:?}, got {:?}", spec.shape, t.shape()),
                ));
            }
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture()
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    fn check_input(&self, input: &ModelInput<T>) -> Result<()> {
        let n = self.config.n_partitions();
        let s = self.config.frame_size();
        if input.frames.len() != n {
            return Err(Error::shape(
                "model input",
                "frames",
                format!("expected {n} frames, got {}", input.frames.len()),
            ));
        }
        for (i, f) in input.frames.iter().enumerate() {
            if f.shape() != [3, s, s] {
                return Err(Error::shape(
                    "model input",
                    format!("frame {i}"),
                    format!("expected [3, {s}, {s}], got {:?}", f.shape()),
                ));
            }
        }
        let a = self.config.audio_features();
        if input.audio.shape() != [n, a] {
            return Err(Error::shape(
                "model input",
                "audio",
                format!("expected [{n}, {a}], got {:?}", input.audio.shape()),
            ));
        }
        Ok(())
    }

    fn run(&self, input: &ModelInput<T>, trace: Option<&mut Trace>) -> Result<Cache<T>> {
        self.check_input(input)?;
        Ok(match &self.config {
            ModelConfig::Conv3d(c) => Cache::Conv3d(conv3d::forward(c, &self.params, input, trace)?),
            ModelConfig::Lstm(c) => Cache::Lstm(lstm::forward(c, &self.params, input, trace)?),
        })
    }

    /// The five trait predictions, each in (0, 1).
    pub fn forward(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        Ok(self.run(input, None)?.output().clone())
    }

    /// Forward pass that also reports every named activation shape.
    pub fn forward_traced(&self, input: &ModelInput<T>) -> Result<(Tensor<T>, Trace)> {
        let mut trace = Trace::new();
        let out = self.run(input, Some(&mut trace))?.output().clone();
        Ok((out, trace))
    }

    /// `(per_step [N,5], averaged [5])` for the recurrent model.
    pub fn forward_steps(&self, input: &ModelInput<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        match self.run(input, None)? {
            Cache::Lstm(c) => Ok((c.per_step, c.output)),
            Cache::Conv3d(_) => Err(Error::InvalidArgument(
                "per-step outputs exist only for the lstm architecture".into(),
            )),
        }
    }

    pub fn predict(&self, input: &ModelInput<T>) -> Result<TraitScores> {
        TraitScores::from_tensor(&self.forward(input)?)
    }

    /// MSE between the prediction and `target`, with the gradient of every
    /// parameter.
    pub fn loss_and_grads(&self, input: &ModelInput<T>, target: &TraitScores) -> Result<(T, ParamSet<T>)> {
        if !target.in_unit_range() {
            return Err(Error::InvalidArgument(format!("target {target:?} outside [0, 1]")));
        }
        let target = target.to_tensor::<T>();
        let cache = self.run(input, None)?;
        let loss = layers::mse_loss(cache.output(), &target)?;
        let g = layers::mse_loss_backward(cache.output(), &target)?;
        let grads = match (&self.config, &cache) {
            (ModelConfig::Conv3d(c), Cache::Conv3d(k)) => conv3d::backward(c, &self.params, k, &g)?,
            (ModelConfig::Lstm(c), Cache::Lstm(k)) => lstm::backward(c, &self.params, k, &g)?,
            _ => unreachable!("cache matches config"),
        };
        Ok((loss, grads))
    }

    pub fn loss(&self, input: &ModelInput<T>, target: &TraitScores) -> Result<T> {
        layers::mse_loss(&self.forward(input)?, &target.to_tensor())
    }
}

/// Averages the predictions of `k` random frame combinations. `frame_at`
/// yields frame `i` of the `n_frames` available; the audio block is shared
/// by every combination.
pub fn predict_stochastic<T, F>(
    model: &Model<T>,
    n_frames: usize,
    frame_at: F,
    audio: &Tensor<T>,
    k: usize,
    seed: u64,
) -> Result<TraitScores>
where
    T: Real,
    F: Fn(usize) -> Result<Tensor<T>> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let partitioning = partition_frames(n_frames, model.config().n_partitions())?;
    let combos = test_combinations(&partitioning, k, seed);
    let outputs = combos
        .par_iter()
        .map(|c| {
            let frames = c.indices().iter().map(|&i| frame_at(i)).collect::<Result<Vec<_>>>()?;
            let input = ModelInput {
                frames,
                audio: audio.clone(),
            };
            model.predict(&input)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = [0.0; N_TRAITS];
    for o in &outputs {
        for (m, v) in mean.iter_mut().zip(o.as_array()) {
            *m += v;
        }
    }
    Ok(TraitScores::from_array(mean.map(|m| m / k as f64)))
}
