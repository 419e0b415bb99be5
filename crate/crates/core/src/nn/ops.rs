use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn silu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

pub fn silu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &d)| {
            let s = sigmoid(v);
            d * s * (T::one() + v * (T::one() - s))
        })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// 2x2 max pooling with stride 2. Returns the pooled map and, per output
/// cell, the flat input index that won (first maximum on ties).
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = x.chw();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "downsampling needs even spatial dimensions, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[c, oh, ow]);
    let mut arg = vec![0u32; c * oh * ow];
    let src = x.data();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                y.data_mut()[o] = src[best];
                arg[o] = best as u32;
            }
        }
    }
    Ok((y, arg))
}

pub fn max_pool2_backward<T: Scalar>(input_shape: &[usize], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    for (&a, &g) in arg.iter().zip(dy.data()) {
        let slot = &mut dx.data_mut()[a as usize];
        *slot = *slot + g;
    }
    dx
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    #[default]
    Nearest,
    /// Half-pixel-centred bilinear with edge clamping.
    Bilinear,
}

/// Source taps `(i0, i1, w0, w1)` for each of the `2 * n` output positions.
fn taps(n: usize, mode: UpsampleMode) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| match mode {
            UpsampleMode::Nearest => (o / 2, o / 2, 1.0, 0.0),
            UpsampleMode::Bilinear => {
                let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n - 1);
                let i1 = (i0 + 1).min(n - 1);
                let f = src - i0 as f64;
                (i0, i1, 1.0 - f, f)
            }
        })
        .collect()
}

pub fn upsample2<T: Scalar>(x: &Tensor<T>, mode: UpsampleMode) -> Tensor<T> {
    let (c, h, w) = x.chw();
    let (oh, ow) = (2 * h, 2 * w);
    let ty = taps(h, mode);
    let tx = taps(w, mode);
    let mut y = Tensor::zeros(&[c, oh, ow]);
    for ch in 0..c {
        let src = x.channel(ch);
        let dst = &mut y.data_mut()[ch * oh * ow..(ch + 1) * oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64_lossy(wx0), T::from_f64_lossy(wx1));
                let top = wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1];
                let bottom = wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1];
                dst[oy * ow + ox] = wy0 * top + wy1 * bottom;
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>, mode: UpsampleMode) -> Tensor<T> {
    let (c, oh, ow) = dy.chw();
    let (h, w) = (oh / 2, ow / 2);
    let ty = taps(h, mode);
    let tx = taps(w, mode);
    let mut dx = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        let g = dy.channel(ch).to_vec();
        let dst = &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64_lossy(wx0), T::from_f64_lossy(wx1));
                let d = g[oy * ow + ox];
                dst[y0 * w + x0] = dst[y0 * w + x0] + wy0 * wx0 * d;
                dst[y0 * w + x1] = dst[y0 * w + x1] + wy0 * wx1 * d;
                dst[y1 * w + x0] = dst[y1 * w + x0] + wy1 * wx0 * d;
                dst[y1 * w + x1] = dst[y1 * w + x1] + wy1 * wx1 * d;
            }
        }
    }
    dx
}
