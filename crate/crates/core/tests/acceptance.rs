//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Takes tens of minutes on one core.
//! Non-flag arguments select criteria by substring.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use impressions::audio::*;
use impressions::dataset::{generate_synthetic_dataset, load_dataset, FeatureScaler, VideoSample};
use impressions::eval::{average_accuracy, mean_average_accuracy, MetricReport};
use impressions::models::{
    predict_stochastic, Architecture, Conv3dConfig, LstmConfig, Model, ModelConfig, ModelInput,
    ParamSet, TraitScores,
};
use impressions::sampler::{partition_frames, sample_combination};
use impressions::trainer::{
    effective_lr, evaluate, sample_input, sgd_step, train, Modality, OptimizerState, TrainerConfig,
    FINAL_CHECKPOINT_FILE, MSE_CURVE_FILE,
};
use impressions::{verify, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> std::result::Result<(), String> {
    ensure((a - b).abs() <= tol, || format!("{what}: {a} vs {b}"))
}

fn gradient_suite() -> Check {
    let t0 = Instant::now();
    let mut reports = verify::layer_suite(0..20);
    for arch in [Architecture::Conv3d, Architecture::Lstm] {
        for seed in 0..3 {
            reports.push(verify::model(arch, seed));
        }
    }
    let elapsed = t0.elapsed();
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} ({:.2e})", r.name, r.max_rel_error))
        .collect();
    ensure(failed.is_empty(), || format!("failed: {}", failed.join(", ")))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(format!("{} checks, worst rel err {worst:.2e}, {elapsed:.1?}", reports.len()))
}

fn trace_shape(trace: &[(String, Vec<usize>)], name: &str) -> std::result::Result<Vec<usize>, String> {
    trace
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, s)| s.clone())
        .ok_or_else(|| format!("no {name} in trace"))
}

fn random_input(config: &ModelConfig, seed: u64) -> ModelInput<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, s) = (config.n_partitions(), config.frame_size());
    ModelInput {
        frames: (0..n).map(|_| verify::random_tensor(&mut rng, &[3, s, s], 0.0, 1.0).cast()).collect(),
        audio: verify::random_tensor(&mut rng, &[n, config.audio_features()], -1.0, 1.0).cast(),
    }
}

fn dimension_anchors() -> Check {
    type Anchor<'a> = (Architecture, &'a [(&'a str, &'a [usize])], [usize; 2]);
    let expect: [Anchor; 2] = [
        (
            Architecture::Conv3d,
            &[("visual_flatten", &[441]), ("audio_projection", &[100]), ("fused", &[541])],
            [5, 200],
        ),
        (
            Architecture::Lstm,
            &[("frame_flatten", &[1024]), ("step_inputs", &[6, 160]), ("lstm_output", &[6, 128])],
            [5, 128],
        ),
    ];
    ensure(Conv3dConfig::full().visual_dim().ok() == Some(441), || "conv3d visual dim".into())?;
    ensure(Conv3dConfig::full().fused_dim().ok() == Some(541), || "conv3d fused dim".into())?;
    ensure(LstmConfig::full().frame_flatten_dim().ok() == Some(1024), || "frame flatten dim".into())?;
    ensure(LstmConfig::full().step_dim() == 160, || "step dim".into())?;
    for (arch, shapes, head_shape) in expect {
        let config = ModelConfig::full(arch);
        let model = Model::<f32>::init(config.clone(), 1).map_err(|e| e.to_string())?;
        let (out, trace) = model.forward_traced(&random_input(&config, 2)).map_err(|e| e.to_string())?;
        for (name, want) in shapes {
            let got = trace_shape(&trace, name)?;
            ensure(got == *want, || format!("{arch} {name}: {got:?}"))?;
        }
        let h = model.params().get("head.weight").map_err(|e| e.to_string())?.shape().to_vec();
        ensure(h == head_shape, || format!("{arch} head {h:?}"))?;
        ensure(out.shape() == [5], || format!("{arch} output {:?}", out.shape()))?;
        ensure(out.data().iter().all(|&v| v > 0.0 && v < 1.0), || format!("{arch} output not in (0,1)"))?;
    }
    Ok("441 / 541 / 1024 / 160 / 6x128 / 5".into())
}

fn direct_dft(frame: &[f64]) -> Vec<f64> {
    let l = frame.len();
    (0..l / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / l as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn rel_close(a: f64, b: f64, what: &str) -> std::result::Result<(), String> {
    ensure((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12), || format!("{what}: {a} vs {b}"))
}

fn audio_suite() -> Check {
    let t0 = Instant::now();
    let e = |r: impressions::Result<f64>| r.map_err(|e| e.to_string());

    let clip = impressions::dataset::SyntheticVideo::new(1, 0).render_audio(1, 0);
    let feats = extract_features(&clip, &FeatureConfig::default()).map_err(|e| e.to_string())?;
    ensure(feats.to_tensor::<f64>().shape() == [6, 68], || "shape".into())?;
    ensure(feats.rows().iter().flatten().all(|v| v.is_finite()), || "non-finite feature".into())?;

    close(zcr(&[0.3; 16]), 0.0, 0.0, "zcr constant")?;
    close(zcr(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]), 0.875, 1e-15, "zcr alternating")?;
    close(zcr(&[0.0; 8]), 0.0, 0.0, "zcr zeros")?;
    close(energy(&[1.0; 37]), 1.0, 1e-15, "energy ones")?;
    close(energy(&[0.0; 9]), 0.0, 0.0, "energy zeros")?;
    close(energy(&[0.5, -0.5]), 0.25, 1e-15, "energy pair")?;
    let mut spike = vec![0.0; 100];
    spike[42] = 3.0;
    close(e(energy_entropy(&spike, 10))?, 0.0, 1e-12, "entropy one sub-frame")?;
    close(e(energy_entropy(&[0.7; 100], 10))?, 10f64.log2(), 1e-12, "entropy uniform")?;
    let mut low = vec![0.0; 50];
    low[0] = 2.0;
    close(spectral_rolloff(&low, 0.9), 0.0, 0.0, "rolloff bin 0")?;
    let r = spectral_rolloff(&[1.0; 400], 0.9);
    close(r, 0.9, 2.0 / 400.0, "rolloff flat")?;
    close(spectral_rolloff(&[1.0, 1.0, 1.0, 0.0, 0.0], 1.0), 0.4, 1e-15, "rolloff c=1")?;

    let a440: Vec<f64> = (0..800).map(|i| 0.3 * (2.0 * PI * 440.0 * i as f64 / 16000.0).sin()).collect();
    let (v, _) = chroma(&magnitude_spectrum(&a440), 16000);
    let top = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
    ensure(top == Some(0) && v[0] > 0.9, || format!("A440 chroma {v:?}"))?;
    close(v.iter().sum(), 1.0, 1e-12, "chroma sum")?;
    let (u, dev) = chroma(&[0.0; 400], 16000);
    ensure(u.iter().all(|&x| x == 1.0 / 12.0) && dev == 0.0, || "zero-spectrum chroma".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_dft = 0.0f64;
    for &len in &[64usize, 800, 441, 1000] {
        let f: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (fast, slow) = (magnitude_spectrum(&f), direct_dft(&f));
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(*v));
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst_dft = worst_dft.max(err);
    }
    ensure(worst_dft < 1e-9, || format!("DFT rel err {worst_dft:.2e}"))?;

    for _ in 0..50 {
        let x: Vec<f64> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let prev: Vec<f64> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: f64 = rng.gen_range(0.05..20.0);
        let y: Vec<f64> = x.iter().map(|v| v * c).collect();
        let py: Vec<f64> = prev.iter().map(|v| v * c).collect();
        let (sx, sy) = (magnitude_spectrum(&x), magnitude_spectrum(&y));
        let (spx, spy) = (magnitude_spectrum(&prev), magnitude_spectrum(&py));
        rel_close(zcr(&x), zcr(&y), "zcr")?;
        rel_close(e(energy_entropy(&x, 10))?, e(energy_entropy(&y, 10))?, "energy entropy")?;
        rel_close(energy(&x) * c * c, energy(&y), "energy scaling")?;
        let (cx, dx) = spectral_centroid_spread(&sx);
        let (cy, dy) = spectral_centroid_spread(&sy);
        rel_close(cx, cy, "centroid")?;
        rel_close(dx, dy, "spread")?;
        rel_close(e(spectral_entropy(&sx, 10))?, e(spectral_entropy(&sy, 10))?, "spectral entropy")?;
        close(spectral_flux(&sx, &spx), spectral_flux(&sy, &spy), 1e-12, "flux")?;
        rel_close(spectral_rolloff(&sx, 0.9), spectral_rolloff(&sy, 0.9), "rolloff")?;
        let (vx, _) = chroma(&sx, 16000);
        let (vy, _) = chroma(&sy, 16000);
        for (a, b) in vx.iter().zip(&vy) {
            close(*a, *b, 1e-12, "chroma")?;
        }
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("6x68, DFT rel err {worst_dft:.1e}, 50 scaled signals, {elapsed:.1?}"))
}

fn metric_suite() -> Check {
    let e = |r: impressions::Result<MetricReport>| r.map_err(|e| e.to_string());
    let t = vec![
        TraitScores::from_array([0.6, 0.1, 0.0, 1.0, 0.25]),
        TraitScores::from_array([0.2, 0.9, 0.5, 0.5, 0.75]),
    ];
    let p = vec![
        TraitScores::from_array([0.5, 0.1, 0.5, 0.0, 0.5]),
        TraitScores::from_array([0.5, 0.7, 0.5, 1.0, 0.5]),
    ];
    for (j, want) in [0.8, 0.9, 0.75, 0.25, 0.75].iter().enumerate() {
        close(average_accuracy(&t, &p, j).map_err(|e| e.to_string())?, *want, 1e-12, "average accuracy")?;
    }
    close(e(mean_average_accuracy(&t, &p))?.mean_average_accuracy, 0.69, 1e-12, "mean average accuracy")?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scores = |n: usize| -> Vec<TraitScores> {
        (0..n).map(|_| TraitScores::from_array(std::array::from_fn(|_| rng.gen_range(0.0..=1.0)))).collect()
    };
    let mut instances = Vec::new();
    for i in 0..100 {
        let n = 1 + i % 37;
        instances.push((scores(n), scores(n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (t, p) in &instances {
        ensure(e(mean_average_accuracy(t, t))?.mean_average_accuracy == 1.0, || "perfect != 1".into())?;
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.shuffle(&mut rng);
        let ts: Vec<_> = order.iter().map(|&i| t[i]).collect();
        let ps: Vec<_> = order.iter().map(|&i| p[i]).collect();
        let (a, b) = (e(mean_average_accuracy(t, p))?, e(mean_average_accuracy(&ts, &ps))?);
        close(a.mean_average_accuracy, b.mean_average_accuracy, 1e-12, "permutation")?;
    }
    Ok("hand example 0.69, perfect = 1.0, 100 permuted instances".into())
}

fn optimizer_anchor() -> Check {
    let cfg = TrainerConfig::default();
    let mut p = ParamSet::new();
    p.insert("w", Tensor::<f64>::vector(vec![1.0]));
    let mut g = ParamSet::new();
    g.insert("w", Tensor::<f64>::vector(vec![1.0]));
    let mut state = OptimizerState::new(&p);
    sgd_step(&mut p, &g, &mut state, &cfg).map_err(|e| e.to_string())?;
    let v = state.velocity.get("w").map_err(|e| e.to_string())?.data()[0];
    let w = p.get("w").map_err(|e| e.to_string())?.data()[0];
    close(v, 1.0005, 1e-12, "velocity")?;
    close(w, 1.0 - 0.05 * 1.0005, 1e-12, "weight")?;
    close(effective_lr(&cfg, 0), 0.05, 1e-15, "lr step 0")?;
    close(effective_lr(&cfg, 100), 0.05 / 1.01, 1e-15, "lr step 100")?;
    close(effective_lr(&cfg, 10_000), 0.025, 1e-15, "lr step 10000")?;
    Ok(format!("v = {v}, w' = {w}"))
}

struct Run {
    dir: PathBuf,
    outcome: impressions::trainer::TrainOutcome<f32>,
    report: MetricReport,
}

struct Workspace {
    root: tempfile::TempDir,
    samples: Vec<VideoSample>,
    runs: Vec<(Architecture, Modality, Run)>,
}

fn overfit_config(arch: Architecture, modality: Modality) -> TrainerConfig {
    TrainerConfig { architecture: arch, epochs: 200, batch_size: 4, base_seed: 7, modality, ..Default::default() }
}

fn train_into(samples: &[VideoSample], cfg: &TrainerConfig, dir: &Path) -> std::result::Result<Run, String> {
    let outcome = train::<f32>(samples, cfg, Some(dir), |_| {}).map_err(|e| e.to_string())?;
    let report = evaluate(samples, &outcome.model, &outcome.scaler, 10, 3, cfg.modality).map_err(|e| e.to_string())?;
    Ok(Run { dir: dir.to_path_buf(), outcome, report })
}

fn end_to_end_overfit(ws: &mut Option<Workspace>) -> Check {
    let t0 = Instant::now();
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = generate_synthetic_dataset(20, 1, root.path().join("data")).map_err(|e| e.to_string())?;
    let samples = load_dataset(&manifest, &FeatureConfig::default()).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (arch, modality, tag) in [
        (Architecture::Conv3d, Modality::Both, "conv3d"),
        (Architecture::Lstm, Modality::Both, "lstm"),
        (Architecture::Conv3d, Modality::Audio, "conv3d_audio"),
        (Architecture::Conv3d, Modality::Visual, "conv3d_visual"),
    ] {
        let run = train_into(&samples, &overfit_config(arch, modality), &root.path().join(tag))?;
        runs.push((arch, modality, run));
    }
    let elapsed = t0.elapsed();
    *ws = Some(Workspace { root, samples, runs });
    let runs = &ws.as_ref().unwrap().runs;

    let mut detail = Vec::new();
    for (arch, _, run) in &runs[..2] {
        let mse = *run.outcome.mse.last().unwrap();
        let maa = run.report.mean_average_accuracy;
        detail.push(format!("{arch} mse {mse:.1e} maa {maa:.4}"));
        ensure(mse < 0.01 && maa > 0.95, || format!("{arch}: mse {mse}, maa {maa}"))?;
    }
    // Twenty videos can be memorised from either modality alone, so the
    // ablations are also scored on unseen videos.
    let held_manifest = generate_synthetic_dataset(20, 2, ws.as_ref().unwrap().root.path().join("held"))
        .map_err(|e| e.to_string())?;
    let held = load_dataset(&held_manifest, &FeatureConfig::default()).map_err(|e| e.to_string())?;
    let held_maa = |run: &Run, modality| {
        evaluate(&held, &run.outcome.model, &run.outcome.scaler, 10, 3, modality)
            .map(|r| r.mean_average_accuracy)
            .map_err(|e| e.to_string())
    };
    let both = &runs[0].2;
    let both_held = held_maa(both, Modality::Both)?;
    detail.push(format!("conv3d held-out maa {both_held:.4}"));
    for (_, modality, run) in &runs[2..] {
        let a = run.report.mean_average_accuracy;
        let h = held_maa(run, *modality)?;
        detail.push(format!("{modality:?}-only maa {a:.4} held-out {h:.4}"));
        ensure(both.report.mean_average_accuracy > a, || format!("{modality:?}-only training maa {a} not beaten"))?;
        ensure(both_held > h, || format!("{modality:?}-only held-out maa {h} not beaten"))?;
    }
    ensure(elapsed < Duration::from_secs(1800), || format!("took {elapsed:?}"))?;
    detail.push(format!("{elapsed:.0?}"));
    Ok(detail.join(", "))
}

fn stochastic_sampling(ws: &Option<Workspace>) -> Check {
    let p = partition_frames(36, 6).map_err(|e| e.to_string())?;
    let draws = 10_000u64;
    let mut counts = [0u64; 36];
    for seed in 0..draws {
        let c = sample_combination(&p, seed);
        let idx = c.indices();
        ensure(idx.len() == 6, || "combination length".into())?;
        for (j, &i) in idx.iter().enumerate() {
            ensure(p.ranges()[j].contains(&i), || format!("seed {seed}: index {i} outside partition {j}"))?;
        }
        ensure(idx.windows(2).all(|w| w[0] < w[1]), || format!("seed {seed}: not increasing"))?;
        for &i in idx {
            counts[i] += 1;
        }
    }
    let (mean, sigma) = (draws as f64 / 6.0, (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt());
    let worst = counts.iter().map(|&c| (c as f64 - mean).abs() / sigma).fold(0.0, f64::max);
    ensure(worst < 3.0, || format!("frame count {worst:.2} sigma from uniform"))?;

    let ws = ws.as_ref().ok_or("no trained model")?;
    let (_, _, run) = ws.runs.iter().find(|(a, m, _)| *a == Architecture::Lstm && *m == Modality::Both).ok_or("no lstm run")?;
    let (model, scaler): (&Model<f32>, &FeatureScaler) = (&run.outcome.model, &run.outcome.scaler);
    let seeds = 8u64;
    let mut lower = 0;
    for s in &ws.samples {
        let input = sample_input::<f32>(s, &[], scaler, model.config(), Modality::Both).map_err(|e| e.to_string())?;
        let size = model.config().frame_size();
        let variance = |k: usize| -> std::result::Result<f64, String> {
            let preds: Vec<[f64; 5]> = (0..seeds)
                .map(|seed| {
                    predict_stochastic(model, s.frames.len(), |i| s.load_frame(i, size), &input.audio, k, 1000 + seed)
                        .map(|p| p.as_array())
                        .map_err(|e| e.to_string())
                })
                .collect::<std::result::Result<_, _>>()?;
            Ok((0..5)
                .map(|j| {
                    let m = preds.iter().map(|p| p[j]).sum::<f64>() / seeds as f64;
                    preds.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / (seeds - 1) as f64
                })
                .sum())
        };
        if variance(10)? < variance(1)? {
            lower += 1;
        }
    }
    ensure(lower >= 10, || format!("k=10 variance lower on only {lower} videos"))?;
    Ok(format!("{draws} draws ordered, max {worst:.2} sigma, k=10 variance lower on {lower}/{} videos", ws.samples.len()))
}

fn files_equal(a: &Path, b: &Path, name: &str) -> std::result::Result<(), String> {
    let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
    let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
    ensure(x == y, || format!("{name} differs between runs"))
}

fn reproducibility(ws: &Option<Workspace>) -> Check {
    let ws = ws.as_ref().ok_or("no first run")?;
    let (_, _, first) = &ws.runs[0];
    let again = train_into(&ws.samples, &overfit_config(Architecture::Conv3d, Modality::Both), &ws.root.path().join("conv3d_again"))?;
    files_equal(&first.dir, &again.dir, FINAL_CHECKPOINT_FILE)?;
    files_equal(&first.dir, &again.dir, MSE_CURVE_FILE)?;

    let cfg = TrainerConfig { epochs: 6, checkpoint_interval: 3, ..overfit_config(Architecture::Lstm, Modality::Both) };
    let a = ws.root.path().join("lstm_a");
    let b = ws.root.path().join("lstm_b");
    let ra = train::<f32>(&ws.samples, &cfg, Some(&a), |_| {}).map_err(|e| e.to_string())?;
    train::<f32>(&ws.samples, &cfg, Some(&b), |_| {}).map_err(|e| e.to_string())?;
    for path in &ra.checkpoints {
        let name = path.file_name().and_then(|n| n.to_str()).ok_or("checkpoint name")?;
        files_equal(&a, &b, name)?;
    }
    files_equal(&a, &b, MSE_CURVE_FILE)?;
    Ok(format!("conv3d 200 epochs and lstm 6 epochs ({} checkpoints) byte-identical", ra.checkpoints.len()))
}

fn main() {
    let t0 = Instant::now();
    let mut ws: Option<Workspace> = None;
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut failures = 0;
    let mut report = |name: &str, run: &mut dyn FnMut() -> Check| {
        if !selected(name) {
            return;
        }
        let r = catch_unwind(AssertUnwindSafe(run));
        let r = r.unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match r {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    };
    report("gradient suite", &mut gradient_suite);
    report("dimension anchors", &mut dimension_anchors);
    report("audio feature suite", &mut audio_suite);
    report("metric suite", &mut metric_suite);
    report("optimizer anchor", &mut optimizer_anchor);
    report("end-to-end overfit", &mut || end_to_end_overfit(&mut ws));
    report("stochastic sampling", &mut || stochastic_sampling(&ws));
    report("reproducibility", &mut || reproducibility(&ws));
    println!("{} criteria failed, {:.0?}", failures, t0.elapsed());
    if failures > 0 {
        std::process::exit(1);
    }
}
