use std::collections::BTreeMap;

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn check<T: Real>(op: &'static str, input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize)> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::shape(op, "weight rank", format!("expected [D_out,D_in], got {ws:?}")));
    }
    if input.rank() != 1 || input.len() != ws[1] {
        return Err(Error::shape(
            op,
            "D_in",
            format!("weight expects [{}], input is {:?}", ws[1], input.shape()),
        ));
    }
    Ok((ws[0], ws[1]))
}

/// `weight · input + bias`.
pub fn linear<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (d_out, d_in) = check("linear", input, weight)?;
    if bias.shape() != [d_out] {
        return Err(Error::shape("linear", "bias", format!("expected [{d_out}], got {:?}", bias.shape())));
    }
    let x = input.data();
    let w = weight.data();
    let out = (0..d_out)
        .map(|o| {
            let mut acc = bias.data()[o];
            for (&wv, &xv) in w[o * d_in..(o + 1) * d_in].iter().zip(x) {
                acc += wv * xv;
            }
            acc
        })
        .collect();
    Ok(Tensor::vector(out))
}

pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LayerGrads<T>> {
    let (d_out, d_in) = check("linear_backward", input, weight)?;
    if grad_out.shape() != [d_out] {
        return Err(Error::shape(
            "linear_backward",
            "grad_out",
            format!("expected [{d_out}], got {:?}", grad_out.shape()),
        ));
    }
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    let mut gw = vec![T::zero(); d_out * d_in];
    let mut gx = vec![T::zero(); d_in];
    for o in 0..d_out {
        let go = g[o];
        let row = &w[o * d_in..(o + 1) * d_in];
        for ((gwv, &xv), (gxv, &wv)) in gw[o * d_in..(o + 1) * d_in]
            .iter_mut()
            .zip(x)
            .zip(gx.iter_mut().zip(row))
        {
            *gwv = go * xv;
            *gxv += wv * go;
        }
    }
    let mut params = BTreeMap::new();
    params.insert("weight", Tensor::new(weight.shape(), gw)?);
    params.insert("bias", grad_out.clone());
    Ok(LayerGrads {
        input: Some(Tensor::vector(gx)),
        params,
    })
}
