use std::collections::BTreeMap;

use super::activation::sigmoid_scalar;
use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Gate order used everywhere: input, forget, output, candidate.
pub const GATES: [&str; 4] = ["i", "f", "o", "g"];

const PARAM_NAMES: [[&str; 3]; 4] = [
    ["w_i", "u_i", "b_i"],
    ["w_f", "u_f", "b_f"],
    ["w_o", "u_o", "b_o"],
    ["w_g", "u_g", "b_g"],
];

/// One gate's input weights `[H, D_in]`, recurrent weights `[H, H]` and bias `[H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams<T> {
    pub w: Tensor<T>,
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

/// Forget-gate LSTM without peepholes, gates in [`GATES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T> {
    pub gates: [GateParams<T>; 4],
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let gate = || GateParams {
            w: Tensor::zeros(&[hidden_dim, input_dim]),
            u: Tensor::zeros(&[hidden_dim, hidden_dim]),
            b: Tensor::zeros(&[hidden_dim]),
        };
        LstmParams {
            gates: [gate(), gate(), gate(), gate()],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gates[0].b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.gates[0].w.shape()[1]
    }

    /// Parameters named `w_i, u_i, b_i, w_f, ...`.
    pub fn named(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = Vec::with_capacity(12);
        for (g, names) in self.gates.iter().zip(PARAM_NAMES) {
            v.push((names[0], &g.w));
            v.push((names[1], &g.u));
            v.push((names[2], &g.b));
        }
        v
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        let mut v = Vec::with_capacity(12);
        for (g, names) in self.gates.iter_mut().zip(PARAM_NAMES) {
            v.push((names[0], &mut g.w));
            v.push((names[1], &mut g.u));
            v.push((names[2], &mut g.b));
        }
        v
    }

    fn validate(&self, hidden_dim: usize, input_dim: usize) -> Result<()> {
        for (g, names) in self.gates.iter().zip(PARAM_NAMES) {
            let want: [(&str, &Tensor<T>, Vec<usize>); 3] = [
                (names[0], &g.w, vec![hidden_dim, input_dim]),
                (names[1], &g.u, vec![hidden_dim, hidden_dim]),
                (names[2], &g.b, vec![hidden_dim]),
            ];
            for (name, t, shape) in want {
                if t.shape() != shape.as_slice() {
                    return Err(Error::shape(
                        "lstm_sequence",
                        name,
                        format!("expected {shape:?}, got {:?}", t.shape()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-step activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    inputs: Tensor<T>,
    /// `[T][4][H]` post-activation gate values.
    gates: Vec<[Vec<T>; 4]>,
    /// Cell states `c_0..c_T` (c_0 = 0).
    cells: Vec<Vec<T>>,
    /// Hidden states `h_0..h_T` (h_0 = 0).
    hidden: Vec<Vec<T>>,
}

fn matvec_acc<T: Real>(acc: &mut [T], m: &[T], v: &[T]) {
    let d = v.len();
    for (r, a) in acc.iter_mut().enumerate() {
        let mut s = *a;
        for (&mv, &vv) in m[r * d..(r + 1) * d].iter().zip(v) {
            s += mv * vv;
        }
        *a = s;
    }
}

fn matvec_t_acc<T: Real>(acc: &mut [T], m: &[T], v: &[T]) {
    let d = acc.len();
    for (r, &vv) in v.iter().enumerate() {
        for (a, &mv) in acc.iter_mut().zip(&m[r * d..(r + 1) * d]) {
            *a += mv * vv;
        }
    }
}

/// Runs the LSTM over a `[T, D_in]` sequence from zero initial state and
/// returns the full `[T, H]` hidden-state sequence.
pub fn lstm_sequence<T: Real>(
    inputs: &Tensor<T>,
    params: &LstmParams<T>,
    hidden_dim: usize,
) -> Result<(Tensor<T>, LstmCache<T>)> {
    let s = inputs.shape();
    if s.len() != 2 {
        return Err(Error::shape("lstm_sequence", "input rank", format!("expected [T,D_in], got {s:?}")));
    }
    let (steps, d_in) = (s[0], s[1]);
    params.validate(hidden_dim, d_in)?;
    let hd = hidden_dim;

    let mut cache = LstmCache {
        inputs: inputs.clone(),
        gates: Vec::with_capacity(steps),
        cells: vec![vec![T::zero(); hd]],
        hidden: vec![vec![T::zero(); hd]],
    };
    let mut out = Vec::with_capacity(steps * hd);
    for t in 0..steps {
        let x = inputs.row(t);
        let h_prev = &cache.hidden[t];
        let c_prev = &cache.cells[t];
        let mut acts: [Vec<T>; 4] = Default::default();
        for (k, gp) in params.gates.iter().enumerate() {
            let mut pre = gp.b.data().to_vec();
            matvec_acc(&mut pre, gp.w.data(), x);
            matvec_acc(&mut pre, gp.u.data(), h_prev);
            acts[k] = if k == 3 {
                pre.iter().map(|&v| v.tanh()).collect()
            } else {
                pre.iter().map(|&v| sigmoid_scalar(v)).collect()
            };
        }
        let [ig, fg, og, gg] = &acts;
        let c: Vec<T> = (0..hd).map(|r| fg[r] * c_prev[r] + ig[r] * gg[r]).collect();
        let h: Vec<T> = (0..hd).map(|r| og[r] * c[r].tanh()).collect();
        out.extend_from_slice(&h);
        cache.gates.push(acts);
        cache.cells.push(c);
        cache.hidden.push(h);
    }
    Ok((Tensor::new(&[steps, hd], out)?, cache))
}

/// Backpropagation through time for [`lstm_sequence`].
///
/// `grad_out` is `[T, H]`, the loss gradient with respect to every emitted
/// hidden state. Parameter gradients are keyed `w_i, u_i, b_i, ...`.
pub fn lstm_sequence_backward<T: Real>(
    params: &LstmParams<T>,
    cache: &LstmCache<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let steps = cache.gates.len();
    let hd = params.hidden_dim();
    let d_in = params.input_dim();
    if grad_out.shape() != [steps, hd] {
        return Err(Error::shape(
            "lstm_sequence_backward",
            "grad_out",
            format!("expected [{steps}, {hd}], got {:?}", grad_out.shape()),
        ));
    }
    let mut gw: Vec<Vec<T>> = (0..4).map(|_| vec![T::zero(); hd * d_in]).collect();
    let mut gu: Vec<Vec<T>> = (0..4).map(|_| vec![T::zero(); hd * hd]).collect();
    let mut gb: Vec<Vec<T>> = (0..4).map(|_| vec![T::zero(); hd]).collect();
    let mut gx = vec![T::zero(); steps * d_in];

    let one = T::one();
    let mut dh_next = vec![T::zero(); hd];
    let mut dc_next = vec![T::zero(); hd];
    for t in (0..steps).rev() {
        let [ig, fg, og, gg] = &cache.gates[t];
        let c = &cache.cells[t + 1];
        let c_prev = &cache.cells[t];
        let h_prev = &cache.hidden[t];
        let x = cache.inputs.row(t);
        let go = grad_out.row(t);

        let mut da: [Vec<T>; 4] = Default::default();
        for v in da.iter_mut() {
            *v = vec![T::zero(); hd];
        }
        for r in 0..hd {
            let dh = go[r] + dh_next[r];
            let tc = c[r].tanh();
            let d_o = dh * tc;
            let dc = dh * og[r] * (one - tc * tc) + dc_next[r];
            let d_i = dc * gg[r];
            let d_g = dc * ig[r];
            let d_f = dc * c_prev[r];
            dc_next[r] = dc * fg[r];
            da[0][r] = d_i * ig[r] * (one - ig[r]);
            da[1][r] = d_f * fg[r] * (one - fg[r]);
            da[2][r] = d_o * og[r] * (one - og[r]);
            da[3][r] = d_g * (one - gg[r] * gg[r]);
        }

        dh_next.iter_mut().for_each(|v| *v = T::zero());
        let gx_t = &mut gx[t * d_in..(t + 1) * d_in];
        for k in 0..4 {
            let gp = &params.gates[k];
            for r in 0..hd {
                let a = da[k][r];
                gb[k][r] += a;
                for (g, &xv) in gw[k][r * d_in..(r + 1) * d_in].iter_mut().zip(x) {
                    *g += a * xv;
                }
                for (g, &hv) in gu[k][r * hd..(r + 1) * hd].iter_mut().zip(h_prev) {
                    *g += a * hv;
                }
            }
            matvec_t_acc(gx_t, gp.w.data(), &da[k]);
            matvec_t_acc(&mut dh_next, gp.u.data(), &da[k]);
        }
    }

    let mut out = BTreeMap::new();
    for (k, names) in PARAM_NAMES.iter().enumerate() {
        out.insert(names[0], Tensor::new(&[hd, d_in], std::mem::take(&mut gw[k]))?);
        out.insert(names[1], Tensor::new(&[hd, hd], std::mem::take(&mut gu[k]))?);
        out.insert(names[2], Tensor::new(&[hd], std::mem::take(&mut gb[k]))?);
    }
    Ok(LayerGrads {
        input: Some(Tensor::new(&[steps, d_in], gx)?),
        params: out,
    })
}
