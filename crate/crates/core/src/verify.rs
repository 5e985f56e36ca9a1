//! Finite-difference gradient suite over every layer and both downsized
//! architectures. Shared by the `gradcheck` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::gradcheck::GradCheck;
use crate::layers::{self, GradCheckReport, LstmParams};
use crate::models::{Architecture, Model, ModelConfig, ModelInput, ParamSet, TraitScores};
use crate::tensor::Tensor;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Random values at least `gap` apart, so max-pooling winners and ReLU
/// signs do not flip under a finite-difference step.
fn separated_tensor(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut data = vec![0.0; n];
    for (rank, &slot) in order.iter().enumerate() {
        data[slot] = (rank as f64 - n as f64 / 2.0) * gap + rng.gen_range(0.0..gap * 0.25);
    }
    Tensor::new(shape, data).expect("shape")
}

fn checker() -> GradCheck {
    GradCheck::default()
}

pub fn conv3d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(1..=2);
    let o = rng.gen_range(1..=3);
    let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2), 1);
    let x = random_tensor(&mut rng, &[c, 4, 5, 5], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[o, c, 2, 2, 3], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[o], -1.0, 1.0);
    let y0 = layers::conv3d_forward(&x, &w, &b, stride).expect("forward");
    let r = random_tensor(&mut rng, y0.shape(), -1.0, 1.0);
    checker().run(
        &format!("conv3d seed {seed}"),
        &[x, w, b],
        |v| dot(&layers::conv3d_forward(&v[0], &v[1], &v[2], stride).unwrap(), &r),
        |v| {
            let g = layers::conv3d_backward(&v[0], &v[1], &r, stride, true).unwrap();
            vec![g.input.clone().unwrap(), g.param("weight").clone(), g.param("bias").clone()]
        },
    )
}

pub fn conv2d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(1..=3);
    let o = rng.gen_range(1..=3);
    let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2));
    let x = random_tensor(&mut rng, &[c, 6, 6], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[o, c, 3, 2], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[o], -1.0, 1.0);
    let y0 = layers::conv2d_forward(&x, &w, &b, stride).expect("forward");
    let r = random_tensor(&mut rng, y0.shape(), -1.0, 1.0);
    checker().run(
        &format!("conv2d seed {seed}"),
        &[x, w, b],
        |v| dot(&layers::conv2d_forward(&v[0], &v[1], &v[2], stride).unwrap(), &r),
        |v| {
            let g = layers::conv2d_backward(&v[0], &v[1], &r, stride, true).unwrap();
            vec![g.input.clone().unwrap(), g.param("weight").clone(), g.param("bias").clone()]
        },
    )
}

pub fn maxpool3d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [2, 4, 4, 6];
    let x = separated_tensor(&mut rng, &shape, 1e-2);
    let (win, st) = ((2, 2, 2), (2, 2, 2));
    let p0 = layers::maxpool3d(&x, win, st).unwrap();
    let r = random_tensor(&mut rng, p0.output.shape(), -1.0, 1.0);
    checker().run(
        &format!("maxpool3d seed {seed}"),
        &[x],
        |v| dot(&layers::maxpool3d(&v[0], win, st).unwrap().output, &r),
        |v| {
            let p = layers::maxpool3d(&v[0], win, st).unwrap();
            vec![layers::maxpool_backward(&r, &p.argmax, v[0].shape()).unwrap()]
        },
    )
}

pub fn maxpool2d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = separated_tensor(&mut rng, &[3, 6, 6], 1e-2);
    let p0 = layers::maxpool2d(&x, (2, 2), (2, 2)).unwrap();
    let r = random_tensor(&mut rng, p0.output.shape(), -1.0, 1.0);
    checker().run(
        &format!("maxpool2d seed {seed}"),
        &[x],
        |v| dot(&layers::maxpool2d(&v[0], (2, 2), (2, 2)).unwrap().output, &r),
        |v| {
            let p = layers::maxpool2d(&v[0], (2, 2), (2, 2)).unwrap();
            vec![layers::maxpool_backward(&r, &p.argmax, v[0].shape()).unwrap()]
        },
    )
}

pub fn linear(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d_in, d_out) = (rng.gen_range(1..=7), rng.gen_range(1..=6));
    let x = random_tensor(&mut rng, &[d_in], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[d_out, d_in], -1.0, 1.0);
    let b = random_tensor(&mut rng, &[d_out], -1.0, 1.0);
    let r = random_tensor(&mut rng, &[d_out], -1.0, 1.0);
    checker().run(
        &format!("linear seed {seed}"),
        &[x, w, b],
        |v| dot(&layers::linear(&v[0], &v[1], &v[2]).unwrap(), &r),
        |v| {
            let g = layers::linear_backward(&v[0], &v[1], &r).unwrap();
            vec![g.input.clone().unwrap(), g.param("weight").clone(), g.param("bias").clone()]
        },
    )
}

pub fn relu(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Probed away from the kink.
    let x = Tensor::from_fn(&[12], |_| {
        let m = rng.gen_range(0.1..2.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    });
    let r = random_tensor(&mut rng, &[12], -1.0, 1.0);
    checker().run(
        &format!("relu seed {seed}"),
        &[x],
        |v| dot(&layers::relu(&v[0]), &r),
        |v| vec![layers::relu_backward(&v[0], &r).unwrap()],
    )
}

pub fn sigmoid(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, &[12], -6.0, 6.0);
    let r = random_tensor(&mut rng, &[12], -1.0, 1.0);
    checker().run(
        &format!("sigmoid seed {seed}"),
        &[x],
        |v| dot(&layers::sigmoid(&v[0]), &r),
        |v| vec![layers::sigmoid_backward(&layers::sigmoid(&v[0]), &r).unwrap()],
    )
}

pub fn mse(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_tensor(&mut rng, &[5], 0.0, 1.0);
    let t = random_tensor(&mut rng, &[5], 0.0, 1.0);
    checker().run(
        &format!("mse seed {seed}"),
        &[p, t],
        |v| layers::mse_loss(&v[0], &v[1]).unwrap(),
        |v| {
            let g = layers::mse_loss_backward(&v[0], &v[1]).unwrap();
            let neg = g.map(|x| -x);
            vec![g, neg]
        },
    )
}

/// LSTM input, gate and recurrent weights checked through BPTT.
pub fn lstm(seed: u64, steps: usize, d_in: usize, hidden: usize) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&mut rng, &[steps, d_in], -1.0, 1.0);
    let mut params = LstmParams::<f64>::zeros(d_in, hidden);
    for (_, t) in params.named_mut() {
        *t = random_tensor(&mut rng, t.shape(), -0.8, 0.8);
    }
    let r = random_tensor(&mut rng, &[steps, hidden], -1.0, 1.0);
    let mut inputs = vec![x];
    inputs.extend(params.named().into_iter().map(|(_, t)| t.clone()));
    let unpack = |v: &[Tensor<f64>]| {
        let mut p = LstmParams::<f64>::zeros(d_in, hidden);
        for ((_, slot), t) in p.named_mut().into_iter().zip(&v[1..]) {
            *slot = t.clone();
        }
        p
    };
    checker().run(
        &format!("lstm seed {seed}"),
        &inputs,
        |v| {
            let p = unpack(v);
            dot(&layers::lstm_sequence(&v[0], &p, hidden).unwrap().0, &r)
        },
        |v| {
            let p = unpack(v);
            let (_, cache) = layers::lstm_sequence(&v[0], &p, hidden).unwrap();
            let g = layers::lstm_sequence_backward(&p, &cache, &r).unwrap();
            let mut out = vec![g.input.clone().unwrap()];
            out.extend(p.named().iter().map(|(n, _)| g.param(n).clone()));
            out
        },
    )
}

/// End-to-end check of a downsized model (16x16 frames, 2 partitions): the
/// MSE loss against a random target, differentiated with respect to every
/// parameter.
pub fn model(arch: Architecture, seed: u64) -> GradCheckReport {
    let config = ModelConfig::downsized(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Model::<f64>::init(config.clone(), seed).expect("downsized layout is valid");
    for (_, t) in base.params_mut().iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let n = config.n_partitions();
    let s = config.frame_size();
    let input = ModelInput {
        frames: (0..n).map(|_| random_tensor(&mut rng, &[3, s, s], 0.0, 1.0)).collect(),
        audio: random_tensor(&mut rng, &[n, config.audio_features()], -2.0, 2.0),
    };
    let target = TraitScores::from_array(std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
    let names: Vec<String> = base.params().iter().map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = base.params().iter().map(|(_, t)| t.clone()).collect();
    let rebuild = |v: &[Tensor<f64>]| {
        let mut p = ParamSet::new();
        for (name, t) in names.iter().zip(v) {
            p.insert(name.clone(), t.clone());
        }
        Model::from_params(config.clone(), p).expect("same layout")
    };
    checker().run(
        &format!("{arch} model seed {seed}"),
        &inputs,
        |v| rebuild(v).loss(&input, &target).unwrap(),
        |v| {
            let (_, g) = rebuild(v).loss_and_grads(&input, &target).unwrap();
            names.iter().map(|n| g.get(n).unwrap().clone()).collect()
        },
    )
}

/// Every layer over `seeds` random instances.
pub fn layer_suite(seeds: std::ops::Range<u64>) -> Vec<GradCheckReport> {
    let mut out = Vec::new();
    for s in seeds {
        out.push(conv3d(s));
        out.push(conv2d(s));
        out.push(maxpool3d(s));
        out.push(maxpool2d(s));
        out.push(linear(s));
        out.push(relu(s));
        out.push(sigmoid(s));
        out.push(mse(s));
        out.push(lstm(s, 3, 4, 5));
    }
    out
}
