use std::collections::BTreeMap;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub type Stride3 = (usize, usize, usize);
pub type Stride2 = (usize, usize);

// Output-channel and output-column tile sizes of the forward kernel.
const OB: usize = 8;
const XB: usize = 8;

#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    t: usize,
    h: usize,
    w: usize,
    o: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    st: usize,
    sh: usize,
    sw: usize,
    ot: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn new<T: Real>(
        op: &'static str,
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: Stride3,
    ) -> Result<Geom> {
        let (is, ws) = (input.shape(), weight.shape());
        if is.len() != 4 {
            return Err(Error::shape(op, "input rank", format!("expected [C,T,H,W], got {is:?}")));
        }
        if ws.len() != 5 {
            return Err(Error::shape(
                op,
                "weight rank",
                format!("expected [C_out,C_in,kT,kH,kW], got {ws:?}"),
            ));
        }
        if ws[1] != is[0] {
            return Err(Error::shape(
                op,
                "C_in",
                format!("weight expects {} input channels, input has {}", ws[1], is[0]),
            ));
        }
        let (st, sh, sw) = stride;
        for (name, s) in [("stride T", st), ("stride H", sh), ("stride W", sw)] {
            if s == 0 {
                return Err(Error::shape(op, name, "stride must be >= 1"));
            }
        }
        for (name, k, n) in [("T", ws[2], is[1]), ("H", ws[3], is[2]), ("W", ws[4], is[3])] {
            if k > n {
                return Err(Error::shape(
                    op,
                    name,
                    format!("kernel extent {k} exceeds input extent {n}"),
                ));
            }
        }
        Ok(Geom {
            c: is[0],
            t: is[1],
            h: is[2],
            w: is[3],
            o: ws[0],
            kt: ws[2],
            kh: ws[3],
            kw: ws[4],
            st,
            sh,
            sw,
            ot: (is[1] - ws[2]) / st + 1,
            oh: (is[2] - ws[3]) / sh + 1,
            ow: (is[3] - ws[4]) / sw + 1,
        })
    }

    fn out_shape(&self) -> [usize; 4] {
        [self.o, self.ot, self.oh, self.ow]
    }

    fn taps(&self) -> usize {
        self.c * self.kt * self.kh * self.kw
    }

    #[inline]
    fn in_row(&self, c: usize, t: usize, h: usize) -> usize {
        ((c * self.t + t) * self.h + h) * self.w
    }
}

fn check_bias<T: Real>(op: &'static str, bias: &Tensor<T>, o: usize) -> Result<()> {
    if bias.shape() != [o] {
        return Err(Error::shape(
            op,
            "bias",
            format!("expected [{o}], got {:?}", bias.shape()),
        ));
    }
    Ok(())
}

/// Valid (unpadded) 3D convolution of a `[C,T,H,W]` volume.
///
/// Each output starts from its bias and accumulates `input * weight` over
/// `(c, i, j, k)` in row-major order.
pub fn conv3d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: Stride3,
) -> Result<Tensor<T>> {
    let g = Geom::new("conv3d_forward", input, weight, stride)?;
    check_bias("conv3d_forward", bias, g.o)?;

    // Tap-major weights: wt[r * O + o], r = ((c*kT + i)*kH + j)*kW + k.
    let taps = g.taps();
    let mut wt = vec![T::zero(); taps * g.o];
    for o in 0..g.o {
        for r in 0..taps {
            wt[r * g.o + o] = weight.data()[o * taps + r];
        }
    }

    let mut out = vec![T::zero(); g.o * g.ot * g.oh * g.ow];
    let x = input.data();
    let b = bias.data();
    let full_o = g.o / OB * OB;
    let full_x = g.ow / XB * XB;
    for t in 0..g.ot {
        for h in 0..g.oh {
            let mut o0 = 0;
            while o0 < full_o {
                let mut x0 = 0;
                while x0 < full_x {
                    tile::<T, OB, XB>(&g, x, &wt, b, &mut out, o0, t, h, x0);
                    x0 += XB;
                }
                for xs in full_x..g.ow {
                    tile::<T, OB, 1>(&g, x, &wt, b, &mut out, o0, t, h, xs);
                }
                o0 += OB;
            }
            for o in full_o..g.o {
                let mut x0 = 0;
                while x0 < full_x {
                    tile::<T, 1, XB>(&g, x, &wt, b, &mut out, o, t, h, x0);
                    x0 += XB;
                }
                for xs in full_x..g.ow {
                    tile::<T, 1, 1>(&g, x, &wt, b, &mut out, o, t, h, xs);
                }
            }
        }
    }
    Tensor::new(&g.out_shape(), out)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile<T: Real, const NO: usize, const NX: usize>(
    g: &Geom,
    x: &[T],
    wt: &[T],
    bias: &[T],
    out: &mut [T],
    o0: usize,
    t: usize,
    h: usize,
    x0: usize,
) {
    let mut acc = [[T::zero(); NX]; NO];
    for (ob, row) in acc.iter_mut().enumerate() {
        *row = [bias[o0 + ob]; NX];
    }
    let mut r = 0;
    for c in 0..g.c {
        for i in 0..g.kt {
            for j in 0..g.kh {
                let base = g.in_row(c, t * g.st + i, h * g.sh + j) + x0 * g.sw;
                for k in 0..g.kw {
                    let wr = &wt[r * g.o + o0..r * g.o + o0 + NO];
                    let mut v = [T::zero(); NX];
                    if g.sw == 1 {
                        v.copy_from_slice(&x[base + k..base + k + NX]);
                    } else {
                        for (xb, slot) in v.iter_mut().enumerate() {
                            *slot = x[base + xb * g.sw + k];
                        }
                    }
                    for ob in 0..NO {
                        let w = wr[ob];
                        for xb in 0..NX {
                            acc[ob][xb] += w * v[xb];
                        }
                    }
                    r += 1;
                }
            }
        }
    }
    for (ob, row) in acc.iter().enumerate() {
        let base = (((o0 + ob) * g.ot + t) * g.oh + h) * g.ow + x0;
        out[base..base + NX].copy_from_slice(row);
    }
}

/// Backward pass of [`conv3d_forward`].
///
/// Returns gradients for `"weight"` and `"bias"`, plus the input gradient
/// when `need_input_grad` is set.
pub fn conv3d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: Stride3,
    need_input_grad: bool,
) -> Result<LayerGrads<T>> {
    let g = Geom::new("conv3d_backward", input, weight, stride)?;
    if grad_out.shape() != g.out_shape() {
        return Err(Error::shape(
            "conv3d_backward",
            "grad_out",
            format!("expected {:?}, got {:?}", g.out_shape(), grad_out.shape()),
        ));
    }
    let x = input.data();
    let w = weight.data();
    let go = grad_out.data();
    let plane = g.ot * g.oh * g.ow;

    let grad_bias: Vec<T> = (0..g.o)
        .map(|o| go[o * plane..(o + 1) * plane].iter().copied().sum())
        .collect();

    let taps = g.taps();
    let mut grad_w = vec![T::zero(); g.o * taps];
    let mut acc_k = vec![T::zero(); g.kw];
    for o in 0..g.o {
        for c in 0..g.c {
            for i in 0..g.kt {
                for j in 0..g.kh {
                    acc_k.iter_mut().for_each(|a| *a = T::zero());
                    for t in 0..g.ot {
                        for h in 0..g.oh {
                            let grow = &go[((o * g.ot + t) * g.oh + h) * g.ow..][..g.ow];
                            let ibase = g.in_row(c, t * g.st + i, h * g.sh + j);
                            let irow = &x[ibase..ibase + g.w];
                            for (k, a) in acc_k.iter_mut().enumerate() {
                                *a += strided_dot(grow, &irow[k..], g.sw);
                            }
                        }
                    }
                    let base = o * taps + ((c * g.kt + i) * g.kh + j) * g.kw;
                    grad_w[base..base + g.kw].copy_from_slice(&acc_k);
                }
            }
        }
    }

    let grad_in = if need_input_grad {
        let mut gi = vec![T::zero(); input.len()];
        for c in 0..g.c {
            for o in 0..g.o {
                for i in 0..g.kt {
                    for j in 0..g.kh {
                        let wbase = o * taps + ((c * g.kt + i) * g.kh + j) * g.kw;
                        let wk = &w[wbase..wbase + g.kw];
                        for t in 0..g.ot {
                            for h in 0..g.oh {
                                let grow = &go[((o * g.ot + t) * g.oh + h) * g.ow..][..g.ow];
                                let ibase = g.in_row(c, t * g.st + i, h * g.sh + j);
                                let irow = &mut gi[ibase..ibase + g.w];
                                for (k, &wv) in wk.iter().enumerate() {
                                    strided_axpy(wv, grow, &mut irow[k..], g.sw);
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(Tensor::new(input.shape(), gi)?)
    } else {
        None
    };

    let mut params = BTreeMap::new();
    params.insert("weight", Tensor::new(weight.shape(), grad_w)?);
    params.insert("bias", Tensor::vector(grad_bias));
    Ok(LayerGrads {
        input: grad_in,
        params,
    })
}

/// `sum_x a[x] * b[x * stride]`, accumulated in eight interleaved lanes.
#[inline]
fn strided_dot<T: Real>(a: &[T], b: &[T], stride: usize) -> T {
    let mut lanes = [T::zero(); 8];
    if stride == 1 {
        let b = &b[..a.len()];
        let mut ca = a.chunks_exact(8);
        let mut cb = b.chunks_exact(8);
        for (xa, xb) in (&mut ca).zip(&mut cb) {
            for l in 0..8 {
                lanes[l] += xa[l] * xb[l];
            }
        }
        for (l, (&p, &q)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
            lanes[l] += p * q;
        }
    } else {
        for (n, &p) in a.iter().enumerate() {
            lanes[n % 8] += p * b[n * stride];
        }
    }
    let s0 = (lanes[0] + lanes[4]) + (lanes[2] + lanes[6]);
    let s1 = (lanes[1] + lanes[5]) + (lanes[3] + lanes[7]);
    s0 + s1
}

/// `y[x * stride] += alpha * a[x]`.
#[inline]
fn strided_axpy<T: Real>(alpha: T, a: &[T], y: &mut [T], stride: usize) {
    if stride == 1 {
        for (yv, &av) in y[..a.len()].iter_mut().zip(a) {
            *yv += alpha * av;
        }
    } else {
        for (n, &av) in a.iter().enumerate() {
            y[n * stride] += alpha * av;
        }
    }
}

fn lift_2d<T: Real>(
    op: &'static str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (is, ws) = (input.shape(), weight.shape());
    if is.len() != 3 {
        return Err(Error::shape(op, "input rank", format!("expected [C,H,W], got {is:?}")));
    }
    if ws.len() != 4 {
        return Err(Error::shape(
            op,
            "weight rank",
            format!("expected [C_out,C_in,kH,kW], got {ws:?}"),
        ));
    }
    Ok((
        input.clone().reshape(&[is[0], 1, is[1], is[2]])?,
        weight.clone().reshape(&[ws[0], ws[1], 1, ws[2], ws[3]])?,
    ))
}

/// Valid 2D convolution of a `[C,H,W]` image; a 3D convolution over a
/// single time step.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: Stride2,
) -> Result<Tensor<T>> {
    let (x, w) = lift_2d("conv2d_forward", input, weight)?;
    let y = conv3d_forward(&x, &w, bias, (1, stride.0, stride.1))?;
    let s = y.shape().to_vec();
    y.reshape(&[s[0], s[2], s[3]])
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: Stride2,
    need_input_grad: bool,
) -> Result<LayerGrads<T>> {
    let (x, w) = lift_2d("conv2d_backward", input, weight)?;
    let gs = grad_out.shape();
    if gs.len() != 3 {
        return Err(Error::shape(
            "conv2d_backward",
            "grad_out rank",
            format!("expected [C_out,H',W'], got {gs:?}"),
        ));
    }
    let go = grad_out.clone().reshape(&[gs[0], 1, gs[1], gs[2]])?;
    let mut grads = conv3d_backward(&x, &w, &go, (1, stride.0, stride.1), need_input_grad)?;
    let gw = grads.take_param("weight").reshape(weight.shape())?;
    grads.params.insert("weight", gw);
    grads.input = match grads.input.take() {
        Some(gi) => Some(gi.reshape(input.shape())?),
        None => None,
    };
    Ok(grads)
}
