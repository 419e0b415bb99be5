use rand::Rng;

use super::{fan_in_uniform, join, Params};
use crate::tensor::{gemm, MatLayout, Scalar, Tensor};

/// im2col scratch is processed in row tiles of at most this many elements.
const TILE_ELEMS: usize = 1 << 21;

/// Square-kernel, stride-1, "same"-padded 2-D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    /// `(out, in, k, k)`
    pub weight: Tensor<T>,
    /// `(out)`
    pub bias: Tensor<T>,
    kernel: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "only odd kernels keep 'same' padding symmetric");
        Conv2d {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            kernel,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.in_channels() * self.kernel * self.kernel;
        fan_in_uniform(&mut self.weight, fan_in, rng);
        self.bias.fill(T::zero());
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn patch_len(&self) -> usize {
        self.in_channels() * self.kernel * self.kernel
    }

    fn tile_rows(&self, h: usize, w: usize) -> usize {
        (TILE_ELEMS / (self.patch_len() * w).max(1)).clamp(1, h)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (c, h, w) = x.chw();
        assert_eq!(c, self.in_channels(), "conv input channels");
        let cout = self.out_channels();
        let hw = h * w;
        let mut y = Tensor::zeros(&[cout, h, w]);
        for (o, plane) in y.data_mut().chunks_mut(hw).enumerate() {
            plane.fill(self.bias.data()[o]);
        }
        let kk = self.patch_len();
        if self.kernel == 1 {
            gemm(
                cout,
                kk,
                hw,
                self.weight.data(),
                MatLayout::row_major(kk),
                x.data(),
                MatLayout::row_major(hw),
                T::one(),
                y.data_mut(),
                MatLayout::row_major(hw),
            );
            return y;
        }
        let rows = self.tile_rows(h, w);
        let mut col = vec![T::zero(); kk * rows * w];
        let mut r0 = 0;
        while r0 < h {
            let nr = rows.min(h - r0);
            let p = nr * w;
            im2col(x.data(), c, h, w, self.kernel, r0, nr, &mut col[..kk * p]);
            gemm(
                cout,
                kk,
                p,
                self.weight.data(),
                MatLayout::row_major(kk),
                &col[..kk * p],
                MatLayout::row_major(p),
                T::one(),
                y.data_mut(),
                MatLayout {
                    offset: r0 * w,
                    row_stride: hw,
                    col_stride: 1,
                },
            );
            r0 += nr;
        }
        y
    }

    /// Accumulates `dL/dweight` and `dL/dbias` into `grad` and returns
    /// `dL/dx` when requested.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad: &mut Conv2d<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (c, h, w) = x.chw();
        let cout = self.out_channels();
        assert_eq!(dy.shape(), &[cout, h, w], "conv upstream gradient shape");
        let hw = h * w;
        for (o, plane) in dy.data().chunks(hw).enumerate() {
            let s: T = plane.iter().copied().sum();
            grad.bias.data_mut()[o] = grad.bias.data()[o] + s;
        }
        let kk = self.patch_len();
        if self.kernel == 1 {
            gemm(
                cout,
                hw,
                kk,
                dy.data(),
                MatLayout::row_major(hw),
                x.data(),
                MatLayout::transposed(hw),
                T::one(),
                grad.weight.data_mut(),
                MatLayout::row_major(kk),
            );
            if !need_dx {
                return None;
            }
            let mut dx = Tensor::zeros(&[c, h, w]);
            gemm(
                kk,
                cout,
                hw,
                self.weight.data(),
                MatLayout::transposed(kk),
                dy.data(),
                MatLayout::row_major(hw),
                T::zero(),
                dx.data_mut(),
                MatLayout::row_major(hw),
            );
            return Some(dx);
        }
        let rows = self.tile_rows(h, w);
        let mut col = vec![T::zero(); kk * rows * w];
        let mut dx = if need_dx {
            Some(Tensor::zeros(&[c, h, w]))
        } else {
            None
        };
        let mut r0 = 0;
        while r0 < h {
            let nr = rows.min(h - r0);
            let p = nr * w;
            let dy_tile = MatLayout {
                offset: r0 * w,
                row_stride: hw,
                col_stride: 1,
            };
            im2col(x.data(), c, h, w, self.kernel, r0, nr, &mut col[..kk * p]);
            gemm(
                cout,
                p,
                kk,
                dy.data(),
                dy_tile,
                &col[..kk * p],
                MatLayout::transposed(p),
                T::one(),
                grad.weight.data_mut(),
                MatLayout::row_major(kk),
            );
            if let Some(dx) = dx.as_mut() {
                gemm(
                    kk,
                    cout,
                    p,
                    self.weight.data(),
                    MatLayout::transposed(kk),
                    dy.data(),
                    dy_tile,
                    T::zero(),
                    &mut col[..kk * p],
                    MatLayout::row_major(p),
                );
                col2im(&col[..kk * p], c, h, w, self.kernel, r0, nr, dx.data_mut());
            }
            r0 += nr;
        }
        dx
    }
}

/// Range of output columns `ox` for which `ox + kx - pad` lies inside `[0, w)`.
fn valid_cols(w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(w);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo, hi.max(lo))
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    r0: usize,
    rows: usize,
    col: &mut [T],
) {
    let pad = k / 2;
    let p = rows * w;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(w, kx, pad);
                for r in 0..rows {
                    let out = &mut dst[r * w..(r + 1) * w];
                    let iy = (r0 + r + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    if hi > lo {
                        out[lo..hi].copy_from_slice(&src[lo + kx - pad..hi + kx - pad]);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    r0: usize,
    rows: usize,
    dx: &mut [T],
) {
    let pad = k / 2;
    let p = rows * w;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(w, kx, pad);
                for r in 0..rows {
                    let iy = (r0 + r + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize || hi <= lo {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let s = &src[r * w..(r + 1) * w];
                    for (d, &v) in dst[lo + kx - pad..hi + kx - pad].iter_mut().zip(&s[lo..hi]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Params<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop convolution used as the reference.
    fn naive(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = x.chw();
        let k = conv.kernel();
        let pad = (k / 2) as isize;
        let cout = conv.out_channels();
        let mut y = Tensor::zeros(&[cout, h, w]);
        for o in 0..cout {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = conv.bias.data()[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad;
                                let ix = ox as isize + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += conv.weight.data()[((o * c + ci) * k + ky) * k + kx]
                                    * x.data()[(ci * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    y.data_mut()[(o * h + oy) * w + ox] = acc;
                }
            }
        }
        y
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn forward_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(cin, cout, k, h, w) in &[(3, 4, 3, 5, 6), (2, 1, 7, 4, 9), (5, 3, 1, 3, 3), (2, 2, 7, 2, 2), (1, 2, 3, 1, 1)] {
            let mut conv = Conv2d::<f64>::new(cin, cout, k);
            conv.init(&mut rng);
            conv.bias = random(&[cout], &mut rng);
            let x = random(&[cin, h, w], &mut rng);
            let got = conv.forward(&x);
            let want = naive(&conv, &x);
            assert!(got.max_abs_diff(&want) < 1e-12, "k={k}");
        }
    }

    #[test]
    fn backward_is_the_adjoint_of_forward() {
        // <dy, conv(x) - b> = <dx, x> and = <dW, W>, both exact bilinear identities.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &k in &[1usize, 3, 7] {
            let mut conv = Conv2d::<f64>::new(3, 2, k);
            conv.init(&mut rng);
            let x = random(&[3, 6, 5], &mut rng);
            let dy = random(&[2, 6, 5], &mut rng);
            let y = conv.forward(&x);
            let lhs: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
            let mut grad = Conv2d::<f64>::new(3, 2, k);
            let dx = conv.backward(&x, &dy, &mut grad, true).unwrap();
            let via_x: f64 = dx.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
            let via_w: f64 = grad
                .weight
                .data()
                .iter()
                .zip(conv.weight.data())
                .map(|(a, b)| a * b)
                .sum();
            let bias_term: f64 = grad.bias.data().iter().zip(conv.bias.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - bias_term - via_x).abs() < 1e-10, "k={k}");
            assert!((lhs - bias_term - via_w).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn small_tiles_give_same_result() {
        // A wide input with many channels forces several row tiles.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv2d::<f32>::new(64, 2, 3);
        conv.init(&mut rng);
        let x = Tensor::<f32>::from_vec(
            &[64, 80, 700],
            (0..64 * 80 * 700).map(|i| ((i % 97) as f32) * 0.01).collect(),
        );
        assert!(conv.tile_rows(80, 700) < 80);
        let y = conv.forward(&x);
        // Spot-check an interior and a border pixel against a direct sum.
        for &(o, oy, ox) in &[(0usize, 40usize, 350usize), (1, 79, 0)] {
            let mut acc = 0.0f64;
            for ci in 0..64 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = oy as isize + ky - 1;
                        let ix = ox as isize + kx - 1;
                        if iy < 0 || ix < 0 || iy >= 80 || ix >= 700 {
                            continue;
                        }
                        acc += conv.weight.data()[((o * 64 + ci) * 3 + ky as usize) * 3 + kx as usize] as f64
                            * x.data()[(ci * 80 + iy as usize) * 700 + ix as usize] as f64;
                    }
                }
            }
            let got = y.data()[(o * 80 + oy) * 700 + ox] as f64;
            assert!((got - acc).abs() < 1e-3, "{got} vs {acc}");
        }
    }
}
