use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Max-pooling result with the input offset that won each window.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Valid max-pooling over the last three axes of a `[C,T,H,W]` tensor.
/// Ties go to the lowest linear input index.
pub fn maxpool3d<T: Real>(
    input: &Tensor<T>,
    window: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<PoolOutput<T>> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::shape("maxpool3d", "input rank", format!("expected [C,T,H,W], got {s:?}")));
    }
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let (wt, wh, ww) = window;
    let (st, sh, sw) = stride;
    for (name, k, n, st) in [("T", wt, t, st), ("H", wh, h, sh), ("W", ww, w, sw)] {
        if k == 0 || st == 0 {
            return Err(Error::shape("maxpool3d", name, "window and stride must be >= 1"));
        }
        if k > n {
            return Err(Error::shape(
                "maxpool3d",
                name,
                format!("window {k} larger than input extent {n}"),
            ));
        }
    }
    let (ot, oh, ow) = ((t - wt) / st + 1, (h - wh) / sh + 1, (w - ww) / sw + 1);
    let x = input.data();
    let mut out = Vec::with_capacity(c * ot * oh * ow);
    let mut arg = Vec::with_capacity(c * ot * oh * ow);
    for ch in 0..c {
        for a in 0..ot {
            for b in 0..oh {
                for d in 0..ow {
                    let mut best_i = ((ch * t + a * st) * h + b * sh) * w + d * sw;
                    let mut best = x[best_i];
                    for i in 0..wt {
                        for j in 0..wh {
                            let row = ((ch * t + a * st + i) * h + b * sh + j) * w + d * sw;
                            for k in 0..ww {
                                let v = x[row + k];
                                if v > best {
                                    best = v;
                                    best_i = row + k;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(&[c, ot, oh, ow], out)?,
        argmax: arg,
    })
}

/// 2D max-pooling of a `[C,H,W]` tensor.
pub fn maxpool2d<T: Real>(
    input: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<PoolOutput<T>> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::shape("maxpool2d", "input rank", format!("expected [C,H,W], got {s:?}")));
    }
    let lifted = input.clone().reshape(&[s[0], 1, s[1], s[2]])?;
    let p = maxpool3d(&lifted, (1, window.0, window.1), (1, stride.0, stride.1))?;
    let os = p.output.shape().to_vec();
    Ok(PoolOutput {
        output: p.output.reshape(&[os[0], os[2], os[3]])?,
        argmax: p.argmax,
    })
}

/// Routes each output gradient to the input cell that won its window.
pub fn maxpool_backward<T: Real>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool_backward",
            "grad_out",
            format!("{} gradients for {} pooled cells", grad_out.len(), argmax.len()),
        ));
    }
    let mut gi = Tensor::zeros(input_shape);
    let n = gi.len();
    let d = gi.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(argmax) {
        if i >= n {
            return Err(Error::shape("maxpool_backward", "argmax", format!("index {i} out of {n}")));
        }
        d[i] += g;
    }
    Ok(gi)
}
