//! Building blocks of the encoder and decoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    join, sigmoid, silu, silu_backward, upsample2, upsample2_backward, Conv2d, GroupNorm, Linear,
    NormCache, Params, UpsampleMode,
};
use crate::tensor::{Scalar, Tensor};

/// Noise dropout block: two 3x3 conv -> norm -> SiLU units. The first
/// convolution sets the stage width, so deeper stages see fewer channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Ndm<T> {
    pub conv1: Conv2d<T>,
    pub norm1: GroupNorm<T>,
    pub conv2: Conv2d<T>,
    pub norm2: GroupNorm<T>,
}

pub struct NdmCache<T> {
    x: Tensor<T>,
    z1: Tensor<T>,
    n1: NormCache<T>,
    h1: Tensor<T>,
    z2: Tensor<T>,
    n2: NormCache<T>,
}

impl<T: Scalar> Ndm<T> {
    pub fn new(in_channels: usize, channels: usize) -> Self {
        Ndm {
            conv1: Conv2d::new(in_channels, channels, 3),
            norm1: GroupNorm::new(channels, 1),
            conv2: Conv2d::new(channels, channels, 3),
            norm2: GroupNorm::new(channels, 1),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.conv1.init(rng);
        self.norm1.reset();
        self.conv2.init(rng);
        self.norm2.reset();
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (z1, _) = self.norm1.forward(&self.conv1.forward(x));
        let (z2, _) = self.norm2.forward(&self.conv2.forward(&silu(&z1)));
        silu(&z2)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, NdmCache<T>) {
        let (z1, n1) = self.norm1.forward(&self.conv1.forward(x));
        let h1 = silu(&z1);
        let (z2, n2) = self.norm2.forward(&self.conv2.forward(&h1));
        let y = silu(&z2);
        let cache = NdmCache {
            x: x.clone(),
            z1,
            n1,
            h1,
            z2,
            n2,
        };
        (y, cache)
    }

    pub fn backward(
        &self,
        cache: &NdmCache<T>,
        dy: &Tensor<T>,
        grad: &mut Ndm<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let d = silu_backward(&cache.z2, dy);
        let d = self.norm2.backward(&cache.n2, &d, &mut grad.norm2);
        let d = self
            .conv2
            .backward(&cache.h1, &d, &mut grad.conv2, true)
            .expect("dx requested");
        let d = silu_backward(&cache.z1, &d);
        let d = self.norm1.backward(&cache.n1, &d, &mut grad.norm1);
        self.conv1.backward(&cache.x, &d, &mut grad.conv1, need_dx)
    }
}

impl<T: Scalar> Params<T> for Ndm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
    }
}

/// Convolutional block attention: channel gate from a shared bottleneck MLP
/// over average- and max-pooled descriptors, then a spatial gate from a
/// convolution over channel-pooled mean and max maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Cbam<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub spatial: Conv2d<T>,
}

pub struct CbamCache<T> {
    x: Tensor<T>,
    avg: Vec<T>,
    max: Vec<T>,
    max_at: Vec<usize>,
    pre_avg: Vec<T>,
    pre_max: Vec<T>,
    channel_gate: Vec<T>,
    x1: Tensor<T>,
    pooled: Tensor<T>,
    pooled_max_at: Vec<usize>,
    spatial_gate: Tensor<T>,
}

impl<T: Scalar> CbamCache<T> {
    pub fn channel_gate(&self) -> &[T] {
        &self.channel_gate
    }

    /// `(1, H, W)` spatial attention map.
    pub fn spatial_gate(&self) -> &Tensor<T> {
        &self.spatial_gate
    }
}

fn relu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

impl<T: Scalar> Cbam<T> {
    pub fn new(channels: usize, reduction: usize, spatial_kernel: usize) -> Result<Self> {
        if reduction == 0 || channels < reduction {
            return Err(Error::Config(format!(
                "attention needs channels ({channels}) >= reduction ({reduction})"
            )));
        }
        let hidden = channels / reduction;
        Ok(Cbam {
            fc1: Linear::new(channels, hidden),
            fc2: Linear::new(hidden, channels),
            spatial: Conv2d::new(2, 1, spatial_kernel),
        })
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.fc1.init(rng);
        self.fc2.init(rng);
        self.spatial.init(rng);
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, CbamCache<T>) {
        let (c, h, w) = x.chw();
        assert_eq!(c, self.fc1.inputs(), "attention channels");
        let hw = h * w;
        let inv_hw = T::one() / T::from_usize(hw).unwrap();

        let mut avg = Vec::with_capacity(c);
        let mut max = Vec::with_capacity(c);
        let mut max_at = Vec::with_capacity(c);
        for ch in 0..c {
            let plane = x.channel(ch);
            avg.push(plane.iter().copied().sum::<T>() * inv_hw);
            let (i, &m) = plane
                .iter()
                .enumerate()
                .fold((0, &plane[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
            max.push(m);
            max_at.push(i);
        }
        let pre_avg = self.fc1.forward(&avg);
        let pre_max = self.fc1.forward(&max);
        let o_avg = self.fc2.forward(&relu(&pre_avg));
        let o_max = self.fc2.forward(&relu(&pre_max));
        let channel_gate: Vec<T> = o_avg.iter().zip(&o_max).map(|(&a, &b)| sigmoid(a + b)).collect();

        let mut x1 = x.clone();
        for (plane, &g) in x1.data_mut().chunks_mut(hw).zip(&channel_gate) {
            plane.iter_mut().for_each(|v| *v = *v * g);
        }

        let inv_c = T::one() / T::from_usize(c).unwrap();
        let mut pooled = Tensor::zeros(&[2, h, w]);
        let mut pooled_max_at = vec![0usize; hw];
        {
            let (mean_map, max_map) = pooled.data_mut().split_at_mut(hw);
            max_map.copy_from_slice(x1.channel(0));
            for ch in 0..c {
                for (p, &v) in x1.channel(ch).iter().enumerate() {
                    mean_map[p] = mean_map[p] + v;
                    if v > max_map[p] {
                        max_map[p] = v;
                        pooled_max_at[p] = ch;
                    }
                }
            }
            mean_map.iter_mut().for_each(|v| *v = *v * inv_c);
        }
        let spatial_gate = self.spatial.forward(&pooled).map(sigmoid);

        let mut y = x1.clone();
        for plane in y.data_mut().chunks_mut(hw) {
            for (v, &g) in plane.iter_mut().zip(spatial_gate.data()) {
                *v = *v * g;
            }
        }
        let cache = CbamCache {
            x: x.clone(),
            avg,
            max,
            max_at,
            pre_avg,
            pre_max,
            channel_gate,
            x1,
            pooled,
            pooled_max_at,
            spatial_gate,
        };
        (y, cache)
    }

    pub fn backward(&self, cache: &CbamCache<T>, dy: &Tensor<T>, grad: &mut Cbam<T>) -> Tensor<T> {
        let (c, h, w) = dy.chw();
        let hw = h * w;
        let g = cache.spatial_gate.data();

        // Spatial gate.
        let mut dx1 = dy.clone();
        let mut dgate = vec![T::zero(); hw];
        for ch in 0..c {
            let d = &dy.data()[ch * hw..(ch + 1) * hw];
            let xv = cache.x1.channel(ch);
            for p in 0..hw {
                dgate[p] = dgate[p] + d[p] * xv[p];
            }
            for (o, &gv) in dx1.data_mut()[ch * hw..(ch + 1) * hw].iter_mut().zip(g) {
                *o = *o * gv;
            }
        }
        let dz: Vec<T> = dgate
            .iter()
            .zip(g)
            .map(|(&d, &s)| d * s * (T::one() - s))
            .collect();
        let dpooled = self
            .spatial
            .backward(&cache.pooled, &Tensor::from_vec(&[1, h, w], dz), &mut grad.spatial, true)
            .expect("dx requested");
        let inv_c = T::one() / T::from_usize(c).unwrap();
        let (dmean, dmax) = dpooled.data().split_at(hw);
        for ch in 0..c {
            for (o, &d) in dx1.data_mut()[ch * hw..(ch + 1) * hw].iter_mut().zip(dmean) {
                *o = *o + d * inv_c;
            }
        }
        for (p, (&ch, &d)) in cache.pooled_max_at.iter().zip(dmax).enumerate() {
            let slot = &mut dx1.data_mut()[ch * hw + p];
            *slot = *slot + d;
        }

        // Channel gate.
        let mut dx = dx1.clone();
        let mut dout = Vec::with_capacity(c);
        for ch in 0..c {
            let a = cache.channel_gate[ch];
            let d1 = &dx1.data()[ch * hw..(ch + 1) * hw];
            let da: T = d1.iter().zip(cache.x.channel(ch)).map(|(&d, &v)| d * v).sum();
            dout.push(da * a * (T::one() - a));
            dx.data_mut()[ch * hw..(ch + 1) * hw]
                .iter_mut()
                .for_each(|v| *v = *v * a);
        }
        let inv_hw = T::one() / T::from_usize(hw).unwrap();
        for (desc, pre, is_max) in [
            (&cache.avg, &cache.pre_avg, false),
            (&cache.max, &cache.pre_max, true),
        ] {
            let dh = self.fc2.backward(&relu(pre), &dout, &mut grad.fc2);
            let dpre: Vec<T> = dh
                .iter()
                .zip(pre.iter())
                .map(|(&d, &p)| if p > T::zero() { d } else { T::zero() })
                .collect();
            let ddesc = self.fc1.backward(desc, &dpre, &mut grad.fc1);
            for (ch, &d) in ddesc.iter().enumerate() {
                if is_max {
                    let slot = &mut dx.data_mut()[ch * hw + cache.max_at[ch]];
                    *slot = *slot + d;
                } else {
                    dx.data_mut()[ch * hw..(ch + 1) * hw]
                        .iter_mut()
                        .for_each(|v| *v = *v + d * inv_hw);
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Params<T> for Cbam<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.spatial.visit(&join(prefix, "spatial"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
        self.spatial.visit_mut(&join(prefix, "spatial"), f);
    }
}

/// Semantic restore block: `boost(c) + sigmoid(weaken(c)) * fusion(c)` over
/// the channel concatenation `c` of a skip feature and the upsampled deeper
/// feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Srm<T> {
    pub boost: Conv2d<T>,
    pub fusion: Conv2d<T>,
    pub weaken: Conv2d<T>,
}

pub struct SrmCache<T> {
    joined: Tensor<T>,
    skip_channels: usize,
    fusion: Tensor<T>,
    gate: Tensor<T>,
}

impl<T: Scalar> SrmCache<T> {
    pub fn gate(&self) -> &Tensor<T> {
        &self.gate
    }
}

impl<T: Scalar> Srm<T> {
    pub fn new(skip_channels: usize, up_channels: usize, out_channels: usize) -> Self {
        let cin = skip_channels + up_channels;
        Srm {
            boost: Conv2d::new(cin, out_channels, 3),
            fusion: Conv2d::new(cin, out_channels, 3),
            weaken: Conv2d::new(cin, out_channels, 3),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.boost.init(rng);
        self.fusion.init(rng);
        self.weaken.init(rng);
    }

    fn join(&self, skip: &Tensor<T>, up: &Tensor<T>) -> Result<Tensor<T>> {
        let (cs, hs, ws) = skip.chw();
        let (cu, hu, wu) = up.chw();
        if (hs, ws) != (hu, wu) {
            return Err(Error::Shape(format!(
                "restore inputs differ in spatial size: {hs}x{ws} vs {hu}x{wu}"
            )));
        }
        if cs + cu != self.boost.in_channels() {
            return Err(Error::Shape(format!(
                "restore expects {} joined channels, got {cs} + {cu}",
                self.boost.in_channels()
            )));
        }
        Ok(Tensor::concat_channels(skip, up))
    }

    pub fn forward(&self, skip: &Tensor<T>, up: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(skip, up)?.0)
    }

    pub fn forward_train(&self, skip: &Tensor<T>, up: &Tensor<T>) -> Result<(Tensor<T>, SrmCache<T>)> {
        let joined = self.join(skip, up)?;
        let mut out = self.boost.forward(&joined);
        let fusion = self.fusion.forward(&joined);
        let gate = self.weaken.forward(&joined).map(sigmoid);
        for ((o, &f), &g) in out.data_mut().iter_mut().zip(fusion.data()).zip(gate.data()) {
            *o = *o + g * f;
        }
        let cache = SrmCache {
            joined,
            skip_channels: skip.chw().0,
            fusion,
            gate,
        };
        Ok((out, cache))
    }

    /// Returns gradients with respect to `(skip, up)`.
    pub fn backward(&self, cache: &SrmCache<T>, dy: &Tensor<T>, grad: &mut Srm<T>) -> (Tensor<T>, Tensor<T>) {
        let mut dfusion = dy.clone();
        let mut dweaken = dy.clone();
        for (((df, dw), &f), &g) in dfusion
            .data_mut()
            .iter_mut()
            .zip(dweaken.data_mut().iter_mut())
            .zip(cache.fusion.data())
            .zip(cache.gate.data())
        {
            *df = *df * g;
            *dw = *dw * f * g * (T::one() - g);
        }
        let mut djoined = self
            .boost
            .backward(&cache.joined, dy, &mut grad.boost, true)
            .expect("dx requested");
        djoined.add_assign(
            &self
                .fusion
                .backward(&cache.joined, &dfusion, &mut grad.fusion, true)
                .expect("dx requested"),
        );
        djoined.add_assign(
            &self
                .weaken
                .backward(&cache.joined, &dweaken, &mut grad.weaken, true)
                .expect("dx requested"),
        );
        djoined.split_channels(cache.skip_channels)
    }
}

impl<T: Scalar> Params<T> for Srm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.boost.visit(&join(prefix, "boost"), f);
        self.fusion.visit(&join(prefix, "fusion"), f);
        self.weaken.visit(&join(prefix, "weaken"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.boost.visit_mut(&join(prefix, "boost"), f);
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
        self.weaken.visit_mut(&join(prefix, "weaken"), f);
    }
}

/// 2x spatial upsampling followed by a 3x3 projection to the shallower
/// stage's width.
#[derive(Clone, Debug, PartialEq)]
pub struct UpBlock<T> {
    pub proj: Conv2d<T>,
    mode: UpsampleMode,
}

pub struct UpCache<T> {
    upsampled: Tensor<T>,
}

impl<T: Scalar> UpBlock<T> {
    pub fn new(in_channels: usize, out_channels: usize, mode: UpsampleMode) -> Self {
        UpBlock {
            proj: Conv2d::new(in_channels, out_channels, 3),
            mode,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.proj.init(rng);
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.proj.forward(&upsample2(x, self.mode))
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, UpCache<T>) {
        let upsampled = upsample2(x, self.mode);
        let y = self.proj.forward(&upsampled);
        (y, UpCache { upsampled })
    }

    pub fn backward(&self, cache: &UpCache<T>, dy: &Tensor<T>, grad: &mut UpBlock<T>) -> Tensor<T> {
        let du = self
            .proj
            .backward(&cache.upsampled, dy, &mut grad.proj, true)
            .expect("dx requested");
        upsample2_backward(&du, self.mode)
    }
}

impl<T: Scalar> Params<T> for UpBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}
