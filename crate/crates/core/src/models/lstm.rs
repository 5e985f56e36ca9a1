//! Recurrent model: a shared 2D convolution encoder per frame, per-partition
//! audio projection, an LSTM over the fused steps and a sigmoid head per
//! step, averaged over steps.

use super::config::LstmConfig;
use super::params::ParamSet;
use super::{ModelInput, Trace};
use crate::error::Result;
use crate::layers::{self, LstmCache, LstmParams, PoolOutput};
use crate::tensor::{Real, Tensor};

struct StageCache<T> {
    input: Tensor<T>,
    pre_act: Tensor<T>,
    argmax: Vec<usize>,
    act_shape: Vec<usize>,
}

struct FrameCache<T> {
    stages: Vec<StageCache<T>>,
    pooled_shape: Vec<usize>,
    flat: Tensor<T>,
}

pub(super) struct Cache<T> {
    frames: Vec<FrameCache<T>>,
    audio: Tensor<T>,
    lstm_params: LstmParams<T>,
    lstm: LstmCache<T>,
    hidden: Tensor<T>,
    /// Sigmoid output per step, `[N, 5]`.
    pub(super) per_step: Tensor<T>,
    pub(super) output: Tensor<T>,
}

fn lstm_params<T: Real>(p: &ParamSet<T>, input_dim: usize, hidden: usize) -> Result<LstmParams<T>> {
    let mut lp = LstmParams::zeros(input_dim, hidden);
    for (name, slot) in lp.named_mut() {
        *slot = p.get(&format!("lstm.{name}"))?.clone();
    }
    Ok(lp)
}

fn encode_frame<T: Real>(
    cfg: &LstmConfig,
    p: &ParamSet<T>,
    frame: &Tensor<T>,
    mut trace: Option<&mut Trace>,
) -> Result<FrameCache<T>> {
    let mut x = frame.clone();
    let mut stages = Vec::with_capacity(cfg.stages.len());
    for (i, st) in cfg.stages.iter().enumerate() {
        let name = format!("conv{}", i + 1);
        let z = layers::conv2d_forward(
            &x,
            p.get(&format!("{name}.weight"))?,
            p.get(&format!("{name}.bias"))?,
            (1, 1),
        )?;
        let a = layers::relu(&z);
        let w = (st.pool, st.pool);
        let PoolOutput { output, argmax } = layers::maxpool2d(&a, w, w)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push((name, z.shape().to_vec()));
            tr.push((format!("pool{}", i + 1), output.shape().to_vec()));
        }
        stages.push(StageCache {
            input: std::mem::replace(&mut x, output),
            pre_act: z,
            argmax,
            act_shape: a.shape().to_vec(),
        });
    }
    let pooled_shape = x.shape().to_vec();
    Ok(FrameCache {
        stages,
        pooled_shape,
        flat: x.flatten(),
    })
}

pub(super) fn forward<T: Real>(
    cfg: &LstmConfig,
    p: &ParamSet<T>,
    input: &ModelInput<T>,
    mut trace: Option<&mut Trace>,
) -> Result<Cache<T>> {
    let n = cfg.n_partitions;
    let d = cfg.step_dim();
    let mut frames = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n * d);
    for (t, frame) in input.frames.iter().enumerate() {
        let fc = encode_frame(cfg, p, frame, if t == 0 { trace.as_deref_mut() } else { None })?;
        let visual = layers::linear(&fc.flat, p.get("visual.weight")?, p.get("visual.bias")?)?;
        let audio_row = Tensor::vector(input.audio.row(t).to_vec());
        let audio = layers::linear(&audio_row, p.get("audio.weight")?, p.get("audio.bias")?)?;
        if t == 0 {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(("frame_flatten".into(), fc.flat.shape().to_vec()));
                tr.push(("visual_projection".into(), visual.shape().to_vec()));
                tr.push(("audio_projection".into(), audio.shape().to_vec()));
            }
        }
        steps.extend_from_slice(audio.data());
        steps.extend_from_slice(visual.data());
        frames.push(fc);
    }
    let steps = Tensor::new(&[n, d], steps)?;
    let lp = lstm_params(p, d, cfg.hidden_dim)?;
    let (hidden, lstm) = layers::lstm_sequence(&steps, &lp, cfg.hidden_dim)?;

    let (hw, hb) = (p.get("head.weight")?, p.get("head.bias")?);
    let mut per_step = Vec::with_capacity(n * super::N_TRAITS);
    for t in 0..n {
        let h = Tensor::vector(hidden.row(t).to_vec());
        per_step.extend(layers::sigmoid(&layers::linear(&h, hw, hb)?).into_data());
    }
    let per_step = Tensor::new(&[n, super::N_TRAITS], per_step)?;
    let inv_n = T::one() / T::of(n as f64);
    let output = Tensor::vector(
        (0..super::N_TRAITS)
            .map(|j| (0..n).map(|t| per_step.row(t)[j]).sum::<T>() * inv_n)
            .collect(),
    );
    if let Some(tr) = trace {
        tr.push(("step_inputs".into(), steps.shape().to_vec()));
        tr.push(("lstm_output".into(), hidden.shape().to_vec()));
        tr.push(("per_step_output".into(), per_step.shape().to_vec()));
        tr.push(("output".into(), output.shape().to_vec()));
    }
    Ok(Cache {
        frames,
        audio: input.audio.clone(),
        lstm_params: lp,
        lstm,
        hidden,
        per_step,
        output,
    })
}

fn accumulate<T: Real>(grads: &mut ParamSet<T>, name: &str, g: Tensor<T>) -> Result<()> {
    if grads.contains(name) {
        grads.get_mut(name)?.add_assign(&g)
    } else {
        grads.insert(name, g);
        Ok(())
    }
}

pub(super) fn backward<T: Real>(
    cfg: &LstmConfig,
    p: &ParamSet<T>,
    cache: &Cache<T>,
    grad_output: &Tensor<T>,
) -> Result<ParamSet<T>> {
    let n = cfg.n_partitions;
    let mut grads = ParamSet::new();
    let g_step = grad_output.map(|g| g / T::of(n as f64));

    let hw = p.get("head.weight")?;
    let mut g_hidden = Vec::with_capacity(n * cfg.hidden_dim);
    for t in 0..n {
        let s = Tensor::vector(cache.per_step.row(t).to_vec());
        let g_logits = layers::sigmoid_backward(&s, &g_step)?;
        let h = Tensor::vector(cache.hidden.row(t).to_vec());
        let mut g = layers::linear_backward(&h, hw, &g_logits)?;
        accumulate(&mut grads, "head.weight", g.take_param("weight"))?;
        accumulate(&mut grads, "head.bias", g.take_param("bias"))?;
        g_hidden.extend(g.input.expect("input grad").into_data());
    }
    let g_hidden = Tensor::new(&[n, cfg.hidden_dim], g_hidden)?;
    let mut g = layers::lstm_sequence_backward(&cache.lstm_params, &cache.lstm, &g_hidden)?;
    for (name, _) in cache.lstm_params.named() {
        grads.insert(format!("lstm.{name}"), g.take_param(name));
    }
    let g_steps = g.input.expect("input grad");

    let (vw, aw) = (p.get("visual.weight")?, p.get("audio.weight")?);
    for (t, fc) in cache.frames.iter().enumerate() {
        let row = g_steps.row(t);
        let g_audio = Tensor::vector(row[..cfg.audio_dim].to_vec());
        let g_visual = Tensor::vector(row[cfg.audio_dim..].to_vec());
        let a_in = Tensor::vector(cache.audio.row(t).to_vec());
        let mut g = layers::linear_backward(&a_in, aw, &g_audio)?;
        accumulate(&mut grads, "audio.weight", g.take_param("weight"))?;
        accumulate(&mut grads, "audio.bias", g.take_param("bias"))?;

        let mut g = layers::linear_backward(&fc.flat, vw, &g_visual)?;
        accumulate(&mut grads, "visual.weight", g.take_param("weight"))?;
        accumulate(&mut grads, "visual.bias", g.take_param("bias"))?;

        let mut g_x = g.input.expect("input grad").reshape(&fc.pooled_shape)?;
        for (i, sc) in fc.stages.iter().enumerate().rev() {
            let name = format!("conv{}", i + 1);
            let g_a = layers::maxpool_backward(&g_x, &sc.argmax, &sc.act_shape)?;
            let g_z = layers::relu_backward(&sc.pre_act, &g_a)?;
            let mut g = layers::conv2d_backward(
                &sc.input,
                p.get(&format!("{name}.weight"))?,
                &g_z,
                (1, 1),
                i > 0,
            )?;
            accumulate(&mut grads, &format!("{name}.weight"), g.take_param("weight"))?;
            accumulate(&mut grads, &format!("{name}.bias"), g.take_param("bias"))?;
            g_x = match g.input {
                Some(t) => t,
                None => break,
            };
        }
    }
    Ok(grads)
}
