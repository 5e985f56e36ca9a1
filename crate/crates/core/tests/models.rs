use impressions::models::{
    predict_stochastic, Architecture, Conv3dConfig, LstmConfig, Model, ModelConfig, ModelInput,
    TraitScores,
};
use impressions::sampler::{partition_frames, test_combinations};
use impressions::verify;
use impressions::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(config: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelInput<f64> {
    let n = config.n_partitions();
    let s = config.frame_size();
    ModelInput {
        frames: (0..n)
            .map(|_| verify::random_tensor(rng, &[3, s, s], 0.0, 1.0))
            .collect(),
        audio: verify::random_tensor(rng, &[n, config.audio_features()], -1.0, 1.0),
    }
}

fn trace_shape<'a>(trace: &'a [(String, Vec<usize>)], name: &str) -> &'a [usize] {
    &trace
        .iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("no {name} in trace"))
        .1
}

#[test]
fn conv3d_dimension_anchors() {
    let c = Conv3dConfig::full();
    let trace = c.shape_trace().unwrap();
    assert_eq!(
        trace[1..],
        [[8, 4, 108, 108], [8, 2, 54, 54], [16, 1, 50, 50], [16, 1, 25, 25], [1, 1, 21, 21]]
    );
    assert_eq!(c.visual_dim().unwrap(), 441);
    assert_eq!(c.fused_dim().unwrap(), 541);

    let config = ModelConfig::Conv3d(c);
    let model = Model::<f32>::init(config.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = random_input(&config, &mut rng);
    let input = ModelInput {
        frames: input.frames.iter().map(|f| f.cast()).collect(),
        audio: input.audio.cast(),
    };
    let (out, trace) = model.forward_traced(&input).unwrap();
    assert_eq!(trace_shape(&trace, "conv1"), [8, 4, 108, 108]);
    assert_eq!(trace_shape(&trace, "pool1"), [8, 2, 54, 54]);
    assert_eq!(trace_shape(&trace, "conv3"), [1, 1, 21, 21]);
    assert_eq!(trace_shape(&trace, "visual_flatten"), [441]);
    assert_eq!(trace_shape(&trace, "audio_projection"), [100]);
    assert_eq!(trace_shape(&trace, "fused"), [541]);
    assert_eq!(trace_shape(&trace, "fusion_hidden"), [200]);
    assert_eq!(out.shape(), [5]);
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(model.params().get("fusion.weight").unwrap().shape(), [200, 541]);
}

#[test]
fn lstm_dimension_anchors() {
    let c = LstmConfig::full();
    let sides: Vec<usize> = c.shape_trace().unwrap().iter().map(|s| s[1]).collect();
    assert_eq!(sides, [112, 104, 52, 48, 24, 16, 8]);
    assert_eq!(c.frame_flatten_dim().unwrap(), 1024);
    assert_eq!(c.step_dim(), 160);

    let config = ModelConfig::Lstm(c);
    let model = Model::<f32>::init(config.clone(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = random_input(&config, &mut rng);
    let input = ModelInput {
        frames: input.frames.iter().map(|f| f.cast()).collect(),
        audio: input.audio.cast(),
    };
    let (out, trace) = model.forward_traced(&input).unwrap();
    assert_eq!(trace_shape(&trace, "frame_flatten"), [1024]);
    assert_eq!(trace_shape(&trace, "visual_projection"), [128]);
    assert_eq!(trace_shape(&trace, "audio_projection"), [32]);
    assert_eq!(trace_shape(&trace, "step_inputs"), [6, 160]);
    assert_eq!(trace_shape(&trace, "lstm_output"), [6, 128]);
    assert_eq!(trace_shape(&trace, "per_step_output"), [6, 5]);
    assert_eq!(out.shape(), [5]);

    let (steps, avg) = model.forward_steps(&input).unwrap();
    for j in 0..5 {
        let mean = (0..6).map(|t| steps.row(t)[j] as f64).sum::<f64>() / 6.0;
        assert!((mean - avg.data()[j] as f64).abs() < 1e-6);
    }
}

#[test]
fn init_is_deterministic_and_bounded() {
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        let a = Model::<f64>::init(ModelConfig::full(arch), 7).unwrap();
        let b = Model::<f64>::init(ModelConfig::full(arch), 7).unwrap();
        assert_eq!(a, b);
        let c = Model::<f64>::init(ModelConfig::full(arch), 8).unwrap();
        assert_ne!(a, c);
        for spec in ModelConfig::full(arch).param_specs().unwrap() {
            let t = a.params().get(&spec.name).unwrap();
            match spec.fan_in {
                Some(f) => {
                    let bound = 1.0 / (f as f64).sqrt();
                    assert!(t.max_abs() <= bound, "{}", spec.name);
                }
                None => assert_eq!(t.max_abs(), 0.0, "{}", spec.name),
            }
        }
    }
    // A large layer: fusion weights 200x541, uniform on ±1/sqrt(541).
    let m = Model::<f64>::init(ModelConfig::full(Architecture::Conv3d), 3).unwrap();
    let w = m.params().get("fusion.weight").unwrap();
    let b = 1.0 / 541f64.sqrt();
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let sigma = (b * b / 3.0 / n).sqrt();
    assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3 sigma {}", 3.0 * sigma);
    // The bound in the fan_in=100 example.
    assert!(m.params().get("audio.weight").unwrap().max_abs() <= 1.0 / 408f64.sqrt());
}

#[test]
fn zero_heads_give_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let config = ModelConfig::downsized(Architecture::Conv3d);
    let mut m = Model::<f64>::init(config.clone(), 1).unwrap();
    for name in ["fusion.weight", "fusion.bias"] {
        m.params_mut().get_mut(name).unwrap().scale(0.0);
    }
    let out = m.forward(&random_input(&config, &mut rng)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));

    let config = ModelConfig::downsized(Architecture::Lstm);
    let mut m = Model::<f64>::init(config.clone(), 1).unwrap();
    let names: Vec<String> = m
        .params()
        .iter()
        .map(|(k, _)| k.to_string())
        .filter(|k| k.starts_with("lstm.") || k.starts_with("head."))
        .collect();
    for name in names {
        m.params_mut().get_mut(&name).unwrap().scale(0.0);
    }
    let (steps, avg) = m.forward_steps(&random_input(&config, &mut rng)).unwrap();
    assert!(steps.data().iter().all(|&v| v == 0.5));
    assert!(avg.data().iter().all(|&v| v == 0.5));
}

#[test]
fn downsized_models_pass_gradient_check() {
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        for seed in 0..3 {
            let r = verify::model(arch, seed);
            assert!(r.passed, "{r}");
        }
    }
}

#[test]
fn loss_is_zero_at_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        let config = ModelConfig::downsized(arch);
        let m = Model::<f64>::init(config.clone(), 2).unwrap();
        let input = random_input(&config, &mut rng);
        let target = m.predict(&input).unwrap();
        let (loss, grads) = m.loss_and_grads(&input, &target).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.get("head.weight").unwrap().max_abs(), 0.0);
        assert_eq!(grads.get("head.bias").unwrap().max_abs(), 0.0);

        let bad = TraitScores::from_array([0.5, 0.5, 1.5, 0.5, 0.5]);
        assert!(m.loss_and_grads(&input, &bad).is_err());
    }
}

#[test]
fn gradient_step_decreases_loss() {
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        let config = ModelConfig::downsized(arch);
        let mut total_drop = 0.0;
        for seed in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut m = Model::<f64>::init(config.clone(), seed).unwrap();
            let input = random_input(&config, &mut rng);
            let target = TraitScores::from_array(std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
            let (before, grads) = m.loss_and_grads(&input, &target).unwrap();
            let mut step = grads.clone();
            step.scale(-0.01);
            m.params_mut().add_assign(&step).unwrap();
            let after = m.loss(&input, &target).unwrap();
            total_drop += before - after;
        }
        assert!(total_drop > 0.0, "{arch}: {total_drop}");
    }
}

#[test]
fn lstm_model_is_sensitive_to_step_order() {
    let config = ModelConfig::downsized(Architecture::Lstm);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = Model::<f64>::init(config.clone(), 4).unwrap();
    for (_, t) in m.params_mut().iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
    let input = random_input(&config, &mut rng);
    let reversed = ModelInput {
        frames: input.frames.iter().rev().cloned().collect(),
        audio: Tensor::new(
            input.audio.shape(),
            (0..2).rev().flat_map(|t| input.audio.row(t).to_vec()).collect(),
        )
        .unwrap(),
    };
    let a = m.forward(&input).unwrap();
    let b = m.forward(&reversed).unwrap();
    assert!(a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() > 1e-6));
}

#[test]
fn stochastic_prediction_contracts() {
    let config = ModelConfig::downsized(Architecture::Lstm);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = Model::<f64>::init(config.clone(), 6).unwrap();
    let frames: Vec<Tensor<f64>> = (0..10)
        .map(|_| verify::random_tensor(&mut rng, &[3, 16, 16], 0.0, 1.0))
        .collect();
    let audio = verify::random_tensor(&mut rng, &[2, 68], -1.0, 1.0);
    let at = |i: usize| Ok(frames[i].clone());

    // k=1 is one forward pass on the sampled combination.
    let p = partition_frames(10, 2).unwrap();
    let combo = &test_combinations(&p, 1, 33)[0];
    let single = m
        .predict(&ModelInput {
            frames: combo.indices().iter().map(|&i| frames[i].clone()).collect(),
            audio: audio.clone(),
        })
        .unwrap();
    assert_eq!(predict_stochastic(&m, 10, at, &audio, 1, 33).unwrap(), single);

    // Singleton partitions: averaging identical evaluations.
    let two = &frames[..2];
    let direct = m
        .predict(&ModelInput {
            frames: two.to_vec(),
            audio: audio.clone(),
        })
        .unwrap();
    let avg = predict_stochastic(&m, 2, |i| Ok(two[i].clone()), &audio, 10, 4).unwrap();
    for (a, b) in avg.as_array().iter().zip(direct.as_array()) {
        assert!((a - b).abs() < 1e-15);
    }

    assert_eq!(
        predict_stochastic(&m, 10, at, &audio, 10, 5).unwrap(),
        predict_stochastic(&m, 10, at, &audio, 10, 5).unwrap()
    );
    assert!(predict_stochastic(&m, 1, at, &audio, 10, 5).is_err());
}
