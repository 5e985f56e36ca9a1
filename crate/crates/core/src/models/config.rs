//! Architecture tables. Every layer size of both models lives here so an
//! alternate instantiation is a data change, not a code change.

use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::audio::N_PARTITION_FEATURES;
use crate::error::{Error, Result};
use crate::models::N_TRAITS;

/// One `conv3d -> [relu] -> [maxpool3d]` stage of the volumetric model.
/// Convolution stride is 1; pooling stride equals its window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dStage {
    pub out_channels: usize,
    /// `(kT, kH, kW)`.
    pub kernel: [usize; 3],
    pub relu: bool,
    pub pool: Option<[usize; 3]>,
}

/// One `conv2d -> relu -> maxpool2d` stage of the per-frame LSTM encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dStage {
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dConfig {
    pub frame_size: usize,
    pub n_partitions: usize,
    pub audio_features: usize,
    pub stages: Vec<Conv3dStage>,
    /// Width of the audio projection.
    pub audio_dim: usize,
    /// Width of the hidden fusion layer.
    pub fusion_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub frame_size: usize,
    pub n_partitions: usize,
    pub audio_features: usize,
    pub stages: Vec<Conv2dStage>,
    /// Width of the per-frame visual projection.
    pub visual_dim: usize,
    /// Width of the per-partition audio projection.
    pub audio_dim: usize,
    pub hidden_dim: usize,
}

/// A concrete, validated model layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum ModelConfig {
    Conv3d(Conv3dConfig),
    Lstm(LstmConfig),
}

/// A parameter tensor the layout requires, with the fan-in used to scale
/// its initialization (`None` for biases, which start at zero).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: Option<usize>,
}

fn valid_extent(stage: usize, axis: &str, n: usize, k: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "stage {stage}: window {k} does not fit {axis} extent {n}"
        )));
    }
    Ok(n - k + 1)
}

fn pooled(stage: usize, axis: &str, n: usize, p: usize) -> Result<usize> {
    if p == 0 || p > n {
        return Err(Error::Config(format!(
            "stage {stage}: pool {p} does not fit {axis} extent {n}"
        )));
    }
    Ok(n / p)
}

fn weight(name: &str, shape: Vec<usize>, fan_in: usize) -> ParamSpec {
    ParamSpec {
        name: name.to_string(),
        shape,
        fan_in: Some(fan_in),
    }
}

fn bias(name: &str, n: usize) -> ParamSpec {
    ParamSpec {
        name: name.to_string(),
        shape: vec![n],
        fan_in: None,
    }
}

impl Conv3dConfig {
    /// Layout matching every dimension the architecture description fixes:
    /// `(8,4,108,108) -> (8,2,54,54) -> (16,1,50,50) -> (16,1,25,25) -> (1,1,21,21)`.
    pub fn full() -> Self {
        Conv3dConfig {
            frame_size: 112,
            n_partitions: 6,
            audio_features: N_PARTITION_FEATURES,
            stages: vec![
                Conv3dStage {
                    out_channels: 8,
                    kernel: [3, 5, 5],
                    relu: true,
                    pool: Some([2, 2, 2]),
                },
                Conv3dStage {
                    out_channels: 16,
                    kernel: [2, 5, 5],
                    relu: true,
                    pool: Some([1, 2, 2]),
                },
                Conv3dStage {
                    out_channels: 1,
                    kernel: [1, 5, 5],
                    relu: false,
                    pool: None,
                },
            ],
            audio_dim: 100,
            fusion_dim: 200,
        }
    }

    /// Small clone (16x16 frames, 2 partitions) for finite-difference checks.
    pub fn downsized() -> Self {
        Conv3dConfig {
            frame_size: 16,
            n_partitions: 2,
            audio_features: N_PARTITION_FEATURES,
            stages: vec![
                Conv3dStage {
                    out_channels: 2,
                    kernel: [1, 3, 3],
                    relu: true,
                    pool: Some([2, 2, 2]),
                },
                Conv3dStage {
                    out_channels: 1,
                    kernel: [1, 3, 3],
                    relu: false,
                    pool: None,
                },
            ],
            audio_dim: 4,
            fusion_dim: 6,
        }
    }

    /// `[C, T, H, W]` after each stage, starting with the input volume.
    pub fn shape_trace(&self) -> Result<Vec<[usize; 4]>> {
        let mut s = [3, self.n_partitions, self.frame_size, self.frame_size];
        let mut out = vec![s];
        for (i, st) in self.stages.iter().enumerate() {
            let [kt, kh, kw] = st.kernel;
            s = [
                st.out_channels,
                valid_extent(i, "T", s[1], kt)?,
                valid_extent(i, "H", s[2], kh)?,
                valid_extent(i, "W", s[3], kw)?,
            ];
            out.push(s);
            if let Some([pt, ph, pw]) = st.pool {
                s = [
                    s[0],
                    pooled(i, "T", s[1], pt)?,
                    pooled(i, "H", s[2], ph)?,
                    pooled(i, "W", s[3], pw)?,
                ];
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn visual_dim(&self) -> Result<usize> {
        let last = *self.shape_trace()?.last().expect("trace has the input");
        Ok(last.iter().product())
    }

    pub fn fused_dim(&self) -> Result<usize> {
        Ok(self.audio_dim + self.visual_dim()?)
    }

    fn params(&self) -> Result<Vec<ParamSpec>> {
        let mut v = Vec::new();
        let mut c_in = 3;
        for (i, st) in self.stages.iter().enumerate() {
            let [kt, kh, kw] = st.kernel;
            let name = format!("conv{}", i + 1);
            v.push(weight(
                &format!("{name}.weight"),
                vec![st.out_channels, c_in, kt, kh, kw],
                c_in * kt * kh * kw,
            ));
            v.push(bias(&format!("{name}.bias"), st.out_channels));
            c_in = st.out_channels;
        }
        let audio_in = self.audio_features * self.n_partitions;
        let fused = self.fused_dim()?;
        v.push(weight("audio.weight", vec![self.audio_dim, audio_in], audio_in));
        v.push(bias("audio.bias", self.audio_dim));
        v.push(weight("fusion.weight", vec![self.fusion_dim, fused], fused));
        v.push(bias("fusion.bias", self.fusion_dim));
        v.push(weight("head.weight", vec![N_TRAITS, self.fusion_dim], self.fusion_dim));
        v.push(bias("head.bias", N_TRAITS));
        Ok(v)
    }
}

impl LstmConfig {
    /// Per-frame trace `112 -> 104 -> 52 -> 48 -> 24 -> 16 -> 8` with 16
    /// channels, flattening to 1024.
    pub fn full() -> Self {
        LstmConfig {
            frame_size: 112,
            n_partitions: 6,
            audio_features: N_PARTITION_FEATURES,
            stages: vec![
                Conv2dStage {
                    out_channels: 8,
                    kernel: 9,
                    pool: 2,
                },
                Conv2dStage {
                    out_channels: 16,
                    kernel: 5,
                    pool: 2,
                },
                Conv2dStage {
                    out_channels: 16,
                    kernel: 9,
                    pool: 2,
                },
            ],
            visual_dim: 128,
            audio_dim: 32,
            hidden_dim: 128,
        }
    }

    pub fn downsized() -> Self {
        LstmConfig {
            frame_size: 16,
            n_partitions: 2,
            audio_features: N_PARTITION_FEATURES,
            stages: vec![
                Conv2dStage {
                    out_channels: 2,
                    kernel: 3,
                    pool: 2,
                },
                Conv2dStage {
                    out_channels: 2,
                    kernel: 3,
                    pool: 2,
                },
            ],
            visual_dim: 4,
            audio_dim: 3,
            hidden_dim: 4,
        }
    }

    /// `[C, H, W]` after every convolution and pooling, starting with the frame.
    pub fn shape_trace(&self) -> Result<Vec<[usize; 3]>> {
        let mut s = [3, self.frame_size, self.frame_size];
        let mut out = vec![s];
        for (i, st) in self.stages.iter().enumerate() {
            s = [
                st.out_channels,
                valid_extent(i, "H", s[1], st.kernel)?,
                valid_extent(i, "W", s[2], st.kernel)?,
            ];
            out.push(s);
            s = [s[0], pooled(i, "H", s[1], st.pool)?, pooled(i, "W", s[2], st.pool)?];
            out.push(s);
        }
        Ok(out)
    }

    /// Per-frame flatten width.
    pub fn frame_flatten_dim(&self) -> Result<usize> {
        let last = *self.shape_trace()?.last().expect("trace has the input");
        Ok(last.iter().product())
    }

    pub fn step_dim(&self) -> usize {
        self.audio_dim + self.visual_dim
    }

    fn params(&self) -> Result<Vec<ParamSpec>> {
        let mut v = Vec::new();
        let mut c_in = 3;
        for (i, st) in self.stages.iter().enumerate() {
            let k = st.kernel;
            let name = format!("conv{}", i + 1);
            v.push(weight(
                &format!("{name}.weight"),
                vec![st.out_channels, c_in, k, k],
                c_in * k * k,
            ));
            v.push(bias(&format!("{name}.bias"), st.out_channels));
            c_in = st.out_channels;
        }
        let flat = self.frame_flatten_dim()?;
        let (a, h, d) = (self.audio_features, self.hidden_dim, self.step_dim());
        v.push(weight("visual.weight", vec![self.visual_dim, flat], flat));
        v.push(bias("visual.bias", self.visual_dim));
        v.push(weight("audio.weight", vec![self.audio_dim, a], a));
        v.push(bias("audio.bias", self.audio_dim));
        for g in crate::layers::GATES {
            v.push(weight(&format!("lstm.w_{g}"), vec![h, d], d));
            v.push(weight(&format!("lstm.u_{g}"), vec![h, h], h));
            v.push(bias(&format!("lstm.b_{g}"), h));
        }
        v.push(weight("head.weight", vec![N_TRAITS, h], h));
        v.push(bias("head.bias", N_TRAITS));
        Ok(v)
    }
}

impl ModelConfig {
    /// Full-size layout for `arch`.
    pub fn full(arch: Architecture) -> Self {
        match arch {
            Architecture::Conv3d => ModelConfig::Conv3d(Conv3dConfig::full()),
            Architecture::Lstm => ModelConfig::Lstm(LstmConfig::full()),
        }
    }

    pub fn downsized(arch: Architecture) -> Self {
        match arch {
            Architecture::Conv3d => ModelConfig::Conv3d(Conv3dConfig::downsized()),
            Architecture::Lstm => ModelConfig::Lstm(LstmConfig::downsized()),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            ModelConfig::Conv3d(_) => Architecture::Conv3d,
            ModelConfig::Lstm(_) => Architecture::Lstm,
        }
    }

    pub fn n_partitions(&self) -> usize {
        match self {
            ModelConfig::Conv3d(c) => c.n_partitions,
            ModelConfig::Lstm(c) => c.n_partitions,
        }
    }

    pub fn frame_size(&self) -> usize {
        match self {
            ModelConfig::Conv3d(c) => c.frame_size,
            ModelConfig::Lstm(c) => c.frame_size,
        }
    }

    pub fn audio_features(&self) -> usize {
        match self {
            ModelConfig::Conv3d(c) => c.audio_features,
            ModelConfig::Lstm(c) => c.audio_features,
        }
    }

    /// Every parameter tensor in initialization order. Fails when the
    /// stages do not fit the frame size or partition count.
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        if self.n_partitions() == 0 {
            return Err(Error::Config("partition count must be >= 1".into()));
        }
        match self {
            ModelConfig::Conv3d(c) => c.params(),
            ModelConfig::Lstm(c) => c.params(),
        }
    }
}
