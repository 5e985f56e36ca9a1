//! Volumetric model: 3D convolutions over the stacked frames, a linear
//! projection of the flattened audio block, late fusion by concatenation.

use super::config::Conv3dConfig;
use super::params::ParamSet;
use super::{ModelInput, Trace};
use crate::error::Result;
use crate::layers::{self, PoolOutput};
use crate::tensor::{Real, Tensor};

struct StageCache<T> {
    input: Tensor<T>,
    pre_act: Tensor<T>,
    pool: Option<(Vec<usize>, Vec<usize>)>,
}

pub(super) struct Cache<T> {
    stages: Vec<StageCache<T>>,
    visual_shape: Vec<usize>,
    audio_in: Tensor<T>,
    fused: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
    pub(super) output: Tensor<T>,
}

/// Stacks `N` frames `[3,H,W]` into a `[3,N,H,W]` volume.
pub fn stack_frames<T: Real>(frames: &[Tensor<T>]) -> Result<Tensor<T>> {
    let stacked = Tensor::stack(frames)?;
    let s = stacked.shape().to_vec();
    let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
    let src = stacked.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for t in 0..n {
            let at = (t * c + ch) * plane;
            out.extend_from_slice(&src[at..at + plane]);
        }
    }
    Tensor::new(&[c, n, s[2], s[3]], out)
}

pub(super) fn forward<T: Real>(
    cfg: &Conv3dConfig,
    p: &ParamSet<T>,
    input: &ModelInput<T>,
    mut trace: Option<&mut Trace>,
) -> Result<Cache<T>> {
    let mut x = stack_frames(&input.frames)?;
    let mut stages = Vec::with_capacity(cfg.stages.len());
    for (i, st) in cfg.stages.iter().enumerate() {
        let name = format!("conv{}", i + 1);
        let z = layers::conv3d_forward(
            &x,
            p.get(&format!("{name}.weight"))?,
            p.get(&format!("{name}.bias"))?,
            (1, 1, 1),
        )?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((name.clone(), z.shape().to_vec()));
        }
        let a = if st.relu { layers::relu(&z) } else { z.clone() };
        let (y, pool) = match st.pool {
            Some(w) => {
                let w = (w[0], w[1], w[2]);
                let PoolOutput { output, argmax } = layers::maxpool3d(&a, w, w)?;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push((format!("pool{}", i + 1), output.shape().to_vec()));
                }
                (output, Some((argmax, a.shape().to_vec())))
            }
            None => (a, None),
        };
        stages.push(StageCache {
            input: std::mem::replace(&mut x, y),
            pre_act: z,
            pool,
        });
    }
    let visual_shape = x.shape().to_vec();
    let visual = x.flatten();
    let audio_in = input.audio.clone().flatten();
    let audio = layers::linear(&audio_in, p.get("audio.weight")?, p.get("audio.bias")?)?;
    let fused = Tensor::concat(&[&audio, &visual]);
    let hidden_pre = layers::linear(&fused, p.get("fusion.weight")?, p.get("fusion.bias")?)?;
    let hidden = layers::relu(&hidden_pre);
    let logits = layers::linear(&hidden, p.get("head.weight")?, p.get("head.bias")?)?;
    let output = layers::sigmoid(&logits);
    if let Some(tr) = trace {
        tr.push(("visual_flatten".into(), visual.shape().to_vec()));
        tr.push(("audio_projection".into(), audio.shape().to_vec()));
        tr.push(("fused".into(), fused.shape().to_vec()));
        tr.push(("fusion_hidden".into(), hidden.shape().to_vec()));
        tr.push(("output".into(), output.shape().to_vec()));
    }
    Ok(Cache {
        stages,
        visual_shape,
        audio_in,
        fused,
        hidden_pre,
        hidden,
        output,
    })
}

/// Gradients of every parameter given `d loss / d output`.
pub(super) fn backward<T: Real>(
    cfg: &Conv3dConfig,
    p: &ParamSet<T>,
    cache: &Cache<T>,
    grad_output: &Tensor<T>,
) -> Result<ParamSet<T>> {
    let mut grads = ParamSet::new();
    let g_logits = layers::sigmoid_backward(&cache.output, grad_output)?;
    let mut g = layers::linear_backward(&cache.hidden, p.get("head.weight")?, &g_logits)?;
    grads.insert("head.weight", g.take_param("weight"));
    grads.insert("head.bias", g.take_param("bias"));
    let g_hidden = layers::relu_backward(&cache.hidden_pre, &g.input.expect("input grad"))?;
    let mut g = layers::linear_backward(&cache.fused, p.get("fusion.weight")?, &g_hidden)?;
    grads.insert("fusion.weight", g.take_param("weight"));
    grads.insert("fusion.bias", g.take_param("bias"));
    let g_fused = g.input.expect("input grad").into_data();
    let audio_dim = cfg.audio_dim;
    let g_audio = Tensor::vector(g_fused[..audio_dim].to_vec());
    let mut g = layers::linear_backward(&cache.audio_in, p.get("audio.weight")?, &g_audio)?;
    grads.insert("audio.weight", g.take_param("weight"));
    grads.insert("audio.bias", g.take_param("bias"));

    let mut g_x = Tensor::new(&cache.visual_shape, g_fused[audio_dim..].to_vec())?;
    for (i, sc) in cache.stages.iter().enumerate().rev() {
        let name = format!("conv{}", i + 1);
        let g_a = match &sc.pool {
            Some((argmax, a_shape)) => layers::maxpool_backward(&g_x, argmax, a_shape)?,
            None => g_x,
        };
        let g_z = if cfg.stages[i].relu {
            layers::relu_backward(&sc.pre_act, &g_a)?
        } else {
            g_a
        };
        let mut g = layers::conv3d_backward(
            &sc.input,
            p.get(&format!("{name}.weight"))?,
            &g_z,
            (1, 1, 1),
            i > 0,
        )?;
        grads.insert(format!("{name}.weight"), g.take_param("weight"));
        grads.insert(format!("{name}.bias"), g.take_param("bias"));
        g_x = match g.input {
            Some(t) => t,
            None => break,
        };
    }
    Ok(grads)
}
