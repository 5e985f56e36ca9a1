use impressions::layers::*;
use impressions::verify;
use impressions::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct five-nested-loop 3D convolution: bias first, then (c, i, j, k)
/// in row-major order.
fn conv3d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    (st, sh, sw): (usize, usize, usize),
) -> Tensor<f64> {
    let [c, t, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [o, _, kt, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3], w.shape()[4]];
    let (ot, oh, ow) = ((t - kt) / st + 1, (h - kh) / sh + 1, (wd - kw) / sw + 1);
    let xi = |c: usize, t: usize, h: usize, w_: usize| x.data()[((c * t_ext(x) + t) * h_ext(x) + h) * w_ext(x) + w_];
    let wi = |o_: usize, c_: usize, i: usize, j: usize, k: usize| {
        w.data()[(((o_ * c + c_) * kt + i) * kh + j) * kw + k]
    };
    let mut out = Vec::new();
    for oo in 0..o {
        for a in 0..ot {
            for p in 0..oh {
                for q in 0..ow {
                    let mut acc = b.data()[oo];
                    for cc in 0..c {
                        for i in 0..kt {
                            for j in 0..kh {
                                for k in 0..kw {
                                    acc += xi(cc, a * st + i, p * sh + j, q * sw + k) * wi(oo, cc, i, j, k);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    Tensor::new(&[o, ot, oh, ow], out).unwrap()
}

fn t_ext(x: &Tensor<f64>) -> usize {
    x.shape()[1]
}
fn h_ext(x: &Tensor<f64>) -> usize {
    x.shape()[2]
}
fn w_ext(x: &Tensor<f64>) -> usize {
    x.shape()[3]
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    verify::random_tensor(rng, shape, -1.0, 1.0)
}

#[test]
fn conv3d_full_shape() {
    let x = Tensor::<f32>::zeros(&[3, 6, 112, 112]);
    let y = conv3d_forward(&x, &Tensor::zeros(&[8, 3, 3, 5, 5]), &Tensor::zeros(&[8]), (1, 1, 1)).unwrap();
    assert_eq!(y.shape(), &[8, 4, 108, 108]);
}

#[test]
fn conv3d_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_t(&mut rng, &[1, 3, 4, 5]);
    let y = conv3d_forward(&x, &Tensor::full(&[1, 1, 1, 1, 1], 1.0), &Tensor::zeros(&[1]), (1, 1, 1)).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv3d_matches_brute_force_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // the documented example: 2x3x4x4 input, 1x2x2x2x2 kernel
    let x = rand_t(&mut rng, &[2, 3, 4, 4]);
    let w = rand_t(&mut rng, &[1, 2, 2, 2, 2]);
    let b = rand_t(&mut rng, &[1]);
    assert_eq!(conv3d_forward(&x, &w, &b, (1, 1, 1)).unwrap(), conv3d_oracle(&x, &w, &b, (1, 1, 1)));
    for _ in 0..40 {
        let c = rng.gen_range(1..=2);
        let o = rng.gen_range(1..=11);
        let (t, h, wd) = (rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (kt, kh, kw) = (rng.gen_range(1..=t), rng.gen_range(1..=h), rng.gen_range(1..=wd));
        let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2));
        let x = rand_t(&mut rng, &[c, t, h, wd]);
        let w = rand_t(&mut rng, &[o, c, kt, kh, kw]);
        let b = rand_t(&mut rng, &[o]);
        let fast = conv3d_forward(&x, &w, &b, stride).unwrap();
        assert_eq!(fast, conv3d_oracle(&x, &w, &b, stride));
    }
    // wide rows exercise the full 8x8 tiles
    let x = rand_t(&mut rng, &[2, 3, 6, 20]);
    let w = rand_t(&mut rng, &[9, 2, 2, 3, 3]);
    let b = rand_t(&mut rng, &[9]);
    assert_eq!(conv3d_forward(&x, &w, &b, (1, 1, 1)).unwrap(), conv3d_oracle(&x, &w, &b, (1, 1, 1)));
}

#[test]
fn conv3d_errors_name_axis() {
    let x = Tensor::<f64>::zeros(&[2, 3, 4, 4]);
    let e = conv3d_forward(&x, &Tensor::zeros(&[1, 3, 1, 1, 1]), &Tensor::zeros(&[1]), (1, 1, 1)).unwrap_err();
    assert!(e.to_string().contains("C_in"), "{e}");
    let e = conv3d_forward(&x, &Tensor::zeros(&[1, 2, 4, 1, 1]), &Tensor::zeros(&[1]), (1, 1, 1)).unwrap_err();
    assert!(e.to_string().contains("on T"), "{e}");
    let e = conv3d_forward(&x, &Tensor::zeros(&[1, 2, 1, 1, 5]), &Tensor::zeros(&[1]), (1, 1, 1)).unwrap_err();
    assert!(e.to_string().contains("on W"), "{e}");
    let e = conv3d_forward(&x, &Tensor::zeros(&[1, 2, 1, 1, 1]), &Tensor::zeros(&[2]), (1, 1, 1)).unwrap_err();
    assert!(e.to_string().contains("bias"), "{e}");
    let e = conv3d_backward(&x, &Tensor::zeros(&[1, 2, 1, 1, 1]), &Tensor::zeros(&[1, 3, 4, 3]), (1, 1, 1), true)
        .unwrap_err();
    assert!(e.to_string().contains("grad_out"), "{e}");
}

#[test]
fn conv3d_backward_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_t(&mut rng, &[2, 3, 5, 5]);
    let w = rand_t(&mut rng, &[3, 2, 2, 3, 3]);
    let zero = Tensor::zeros(&[3, 2, 3, 3]);
    let g = conv3d_backward(&x, &w, &zero, (1, 1, 1), true).unwrap();
    assert!(g.input.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
    assert!(g.param("weight").data().iter().all(|&v| v == 0.0));
    assert!(g.param("bias").data().iter().all(|&v| v == 0.0));

    let go = rand_t(&mut rng, &[3, 2, 3, 3]);
    let g = conv3d_backward(&x, &w, &go, (1, 1, 1), false).unwrap();
    assert!(g.input.is_none());
    for o in 0..3 {
        let expect: f64 = go.data()[o * 18..(o + 1) * 18].iter().sum();
        assert!((g.param("bias").data()[o] - expect).abs() < 1e-12);
    }
}

#[test]
fn conv3d_backward_tight_fd() {
    let r = verify::conv3d(99);
    assert!(r.max_rel_error < 1e-6, "{r}");
}

#[test]
fn conv2d_shapes_and_oracle() {
    let x = Tensor::<f32>::zeros(&[3, 112, 112]);
    let y = conv2d_forward(&x, &Tensor::zeros(&[8, 3, 9, 9]), &Tensor::zeros(&[8]), (1, 1)).unwrap();
    assert_eq!(y.shape(), &[8, 104, 104]);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_t(&mut rng, &[2, 5, 5]);
    let y = conv2d_forward(&x, &Tensor::full(&[2, 2, 1, 1], 0.0).map(|_| 0.0), &Tensor::zeros(&[2]), (1, 1)).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    let mut eye = Tensor::zeros(&[2, 2, 1, 1]);
    eye.data_mut()[0] = 1.0;
    eye.data_mut()[3] = 1.0;
    assert_eq!(conv2d_forward(&x, &eye, &Tensor::zeros(&[2]), (1, 1)).unwrap(), x);

    for _ in 0..20 {
        let o = rng.gen_range(1..=10);
        let (kh, kw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let stride = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let w = rand_t(&mut rng, &[o, 2, kh, kw]);
        let b = rand_t(&mut rng, &[o]);
        let fast = conv2d_forward(&x, &w, &b, stride).unwrap();
        let lifted = conv3d_oracle(
            &x.clone().reshape(&[2, 1, 5, 5]).unwrap(),
            &w.clone().reshape(&[o, 2, 1, kh, kw]).unwrap(),
            &b,
            (1, stride.0, stride.1),
        );
        assert_eq!(fast.data(), lifted.data());
    }
}

#[test]
fn every_layer_passes_fd_over_twenty_seeds() {
    let reports = verify::layer_suite(0..20);
    assert_eq!(reports.len(), 20 * 9);
    for r in &reports {
        assert!(r.passed, "{r}");
    }
}

#[test]
fn linear_and_lstm_tight_fd() {
    for s in 0..5 {
        let r = verify::linear(s);
        assert!(r.max_rel_error < 1e-6, "{r}");
        let r = verify::lstm(s, 3, 4, 5);
        assert!(r.max_rel_error < 1e-6, "{r}");
    }
}

#[test]
fn sigmoid_derivative_identity() {
    for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
        let s = sigmoid_scalar(x);
        let h = 1e-5;
        let fd = (sigmoid_scalar(x + h) - sigmoid_scalar(x - h)) / (2.0 * h);
        assert!((fd - s * (1.0 - s)).abs() < 1e-9);
    }
}

#[test]
fn mse_gradient_formula() {
    let p = Tensor::<f64>::vector(vec![0.1, 0.9, 0.4, 0.5, 0.3]);
    let t = Tensor::<f64>::vector(vec![0.2, 0.7, 0.4, 0.1, 0.8]);
    let g = mse_loss_backward(&p, &t).unwrap();
    for i in 0..5 {
        assert!((g.data()[i] - 2.0 * (p.data()[i] - t.data()[i]) / 5.0).abs() < 1e-15);
    }
}

#[test]
fn kernels_are_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_t(&mut rng, &[2, 3, 6, 6]);
    let w = rand_t(&mut rng, &[4, 2, 2, 3, 3]);
    let b = rand_t(&mut rng, &[4]);
    let a = conv3d_forward(&x, &w, &b, (1, 1, 1)).unwrap();
    let c = conv3d_forward(&x, &w, &b, (1, 1, 1)).unwrap();
    assert!(a.data().iter().zip(c.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    let ga = conv3d_backward(&x, &w, &a, (1, 1, 1), true).unwrap();
    let gc = conv3d_backward(&x, &w, &a, (1, 1, 1), true).unwrap();
    assert_eq!(ga, gc);
}

proptest! {
    #[test]
    fn sigmoid_in_open_unit_interval(v in prop::collection::vec(-1e3f64..1e3, 1..32)) {
        let s = sigmoid(&Tensor::vector(v));
        prop_assert!(s.data().iter().all(|&y| y > 0.0 && y < 1.0));
    }

    #[test]
    fn maxpool_dominates_window(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&mut rng, &[2, 4, 6, 6]);
        let p = maxpool3d(&x, (2, 3, 2), (2, 3, 2)).unwrap();
        let [_, ot, oh, ow] = [0, p.output.shape()[1], p.output.shape()[2], p.output.shape()[3]];
        for ch in 0..2 {
            for a in 0..ot { for b in 0..oh { for d in 0..ow {
                let oi = ((ch * ot + a) * oh + b) * ow + d;
                let m = p.output.data()[oi];
                prop_assert_eq!(x.data()[p.argmax[oi]], m);
                for i in 0..2 { for j in 0..3 { for k in 0..2 {
                    let xi = ((ch * 4 + a * 2 + i) * 6 + b * 3 + j) * 6 + d * 2 + k;
                    prop_assert!(m >= x.data()[xi]);
                }}}
            }}}
        }
    }

    #[test]
    fn zero_lstm_is_silent(seed in any::<u64>(), steps in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = verify::random_tensor(&mut rng, &[steps, 3], -5.0, 5.0);
        let (h, _) = lstm_sequence(&x, &LstmParams::zeros(3, 4), 4).unwrap();
        prop_assert!(h.data().iter().all(|&v| v == 0.0));
    }
}
