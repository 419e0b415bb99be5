use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::blocks::{Cbam, CbamCache, Ndm, NdmCache, Srm, SrmCache, UpBlock, UpCache};
use super::config::{ModelConfig, STAGES};
use crate::error::{Error, Result};
use crate::nn::{join, max_pool2, max_pool2_backward, Conv2d, Params};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStage<T> {
    pub ndm: Ndm<T>,
    pub cbam: Cbam<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStage<T> {
    pub up: UpBlock<T>,
    pub srm: Srm<T>,
}

/// Multi-frame-to-multi-frame nowcasting network.
///
/// Five encoder stages (noise dropout + attention) shrink the width
/// 256 -> 128 -> 64 -> 32 -> 32 at full scale while halving resolution;
/// four decoder stages fold the deepest feature back up through semantic
/// restore blocks; a 1x1 head emits `m_out` frames at once.
#[derive(Clone, Debug, PartialEq)]
pub struct Mminr<T> {
    config: ModelConfig,
    pub encoder: Vec<EncoderStage<T>>,
    /// `decoder[i]` produces the stage `i + 1` output.
    pub decoder: Vec<DecoderStage<T>>,
    pub head: Conv2d<T>,
}

struct EncoderCache<T> {
    pool_arg: Option<(Vec<usize>, Vec<u32>)>,
    ndm: NdmCache<T>,
    cbam: CbamCache<T>,
}

struct DecoderCache<T> {
    up: UpCache<T>,
    srm: SrmCache<T>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T> {
    encoder: Vec<EncoderCache<T>>,
    decoder: Vec<DecoderCache<T>>,
    head_input: Tensor<T>,
}

impl<T: Scalar> Mminr<T> {
    /// Builds a network with parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        for stage in &mut model.encoder {
            stage.ndm.init(&mut rng);
            stage.cbam.init(&mut rng);
        }
        for stage in &mut model.decoder {
            stage.up.init(&mut rng);
            stage.srm.init(&mut rng);
        }
        model.head.init(&mut rng);
        Ok(model)
    }

    /// Same architecture with every parameter zero; used as a gradient buffer.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ch = &config.stage_channels;
        let mut encoder = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let cin = if i == 0 { config.n_in } else { ch[i - 1] };
            encoder.push(EncoderStage {
                ndm: Ndm::new(cin, ch[i]),
                cbam: Cbam::new(ch[i], config.cbam_reduction, config.cbam_spatial_kernel)?,
            });
        }
        let decoder = (0..STAGES - 1)
            .map(|i| DecoderStage {
                up: UpBlock::new(ch[i + 1], ch[i], config.upsample_mode),
                srm: Srm::new(ch[i], ch[i], ch[i]),
            })
            .collect();
        let head = Conv2d::new(ch[0], config.m_out, 1);
        Ok(Mminr {
            config,
            encoder,
            decoder,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_params();
        z
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cast<U: Scalar>(&self) -> Mminr<U> {
        let mut out = Mminr::<U>::zeros(self.config.clone()).expect("config already validated");
        let src = self.named_params();
        for ((_, dst), (_, s)) in out.named_params_mut().into_iter().zip(src) {
            *dst = s.cast();
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.config.input_size;
        let want = [self.config.n_in, s, s];
        if x.shape() != want {
            return Err(Error::Shape(format!(
                "model expects input {want:?}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Noise dropout block of 1-based `stage` applied to an already
    /// downsampled input.
    pub fn ndm_forward(&self, x: &Tensor<T>, stage: usize) -> Result<Tensor<T>> {
        let block = self
            .encoder
            .get(stage.wrapping_sub(1))
            .ok_or_else(|| Error::Config(format!("no encoder stage {stage}")))?;
        let c = x.chw().0;
        if c != block.ndm.in_channels() {
            return Err(Error::Config(format!(
                "stage {stage} expects {} input channels, got {c}",
                block.ndm.in_channels()
            )));
        }
        Ok(block.ndm.forward(x))
    }

    /// Encoder features `f_1 .. f_5`.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(x)?;
        let mut feats: Vec<Tensor<T>> = Vec::with_capacity(STAGES);
        for (i, stage) in self.encoder.iter().enumerate() {
            let h = if i == 0 {
                stage.ndm.forward(x)
            } else {
                let (down, _) = downsample(&feats[i - 1])?;
                stage.ndm.forward(&down)
            };
            feats.push(stage.cbam.forward(&h));
        }
        Ok(feats)
    }

    /// Decoder and head applied to encoder features.
    pub fn decode(&self, mut feats: Vec<Tensor<T>>) -> Result<Tensor<T>> {
        let mut d = feats.pop().expect("five encoder features");
        for (i, stage) in self.decoder.iter().enumerate().rev() {
            let up = stage.up.forward(&d);
            d = stage.srm.forward(&feats[i], &up)?;
            feats.truncate(i);
        }
        Ok(self.head.forward(&d))
    }

    /// `(n_in, S, S)` normalized frames to `(m_out, S, S)` predictions.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let feats = self.encode(x)?;
        self.decode(feats)
    }

    pub fn forward_batch(&self, xs: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        xs.par_iter().map(|x| self.forward(x)).collect()
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let mut feats: Vec<Tensor<T>> = Vec::with_capacity(STAGES);
        let mut enc = Vec::with_capacity(STAGES);
        for (i, stage) in self.encoder.iter().enumerate() {
            let (h, ndm, pool_arg) = if i == 0 {
                let (h, c) = stage.ndm.forward_train(x);
                (h, c, None)
            } else {
                let prev = &feats[i - 1];
                let (down, arg) = downsample(prev)?;
                let (h, c) = stage.ndm.forward_train(&down);
                (h, c, Some((prev.shape().to_vec(), arg)))
            };
            let (f, cbam) = stage.cbam.forward_train(&h);
            feats.push(f);
            enc.push(EncoderCache { pool_arg, ndm, cbam });
        }
        let mut d = feats.pop().expect("five encoder features");
        let mut dec: Vec<Option<DecoderCache<T>>> = (0..STAGES - 1).map(|_| None).collect();
        for (i, stage) in self.decoder.iter().enumerate().rev() {
            let (up, up_cache) = stage.up.forward_train(&d);
            let (out, srm_cache) = stage.srm.forward_train(&feats[i], &up)?;
            dec[i] = Some(DecoderCache {
                up: up_cache,
                srm: srm_cache,
            });
            d = out;
        }
        let y = self.head.forward(&d);
        let cache = ForwardCache {
            encoder: enc,
            decoder: dec.into_iter().map(|c| c.expect("filled")).collect(),
            head_input: d,
        };
        Ok((y, cache))
    }

    /// Accumulates parameter gradients of `<dy, forward(x)>` into `grad`.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>, grad: &mut Mminr<T>) {
        let mut d = self
            .head
            .backward(&cache.head_input, dy, &mut grad.head, true)
            .expect("dx requested");
        // Gradient flowing into each encoder feature f_i through skips.
        let mut dskip: Vec<Option<Tensor<T>>> = (0..STAGES).map(|_| None).collect();
        for i in 0..STAGES - 1 {
            let stage = &self.decoder[i];
            let c = &cache.decoder[i];
            let (ds, dup) = stage.srm.backward(&c.srm, &d, &mut grad.decoder[i].srm);
            dskip[i] = Some(ds);
            d = stage.up.backward(&c.up, &dup, &mut grad.decoder[i].up);
        }
        // `d` is now the gradient with respect to f_5.
        let mut df = d;
        for i in (0..STAGES).rev() {
            if let Some(ds) = dskip[i].take() {
                df.add_assign(&ds);
            }
            let stage = &self.encoder[i];
            let c = &cache.encoder[i];
            let g = &mut grad.encoder[i];
            let dh = stage.cbam.backward(&c.cbam, &df, &mut g.cbam);
            let need_dx = i > 0;
            let dx = stage.ndm.backward(&c.ndm, &dh, &mut g.ndm, need_dx);
            if let (Some(dx), Some((shape, arg))) = (dx, c.pool_arg.as_ref()) {
                df = max_pool2_backward(shape, arg, &dx);
            }
        }
    }
}

/// 2x2 max pooling between encoder stages.
pub fn downsample<T: Scalar>(f: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    max_pool2(f)
}

impl<T: Scalar> Params<T> for Mminr<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, s) in self.encoder.iter().enumerate() {
            let p = join(prefix, &format!("encoder.{i}"));
            s.ndm.visit(&join(&p, "ndm"), f);
            s.cbam.visit(&join(&p, "cbam"), f);
        }
        for (i, s) in self.decoder.iter().enumerate() {
            let p = join(prefix, &format!("decoder.{i}"));
            s.up.visit(&join(&p, "up"), f);
            s.srm.visit(&join(&p, "srm"), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        for (i, s) in self.encoder.iter_mut().enumerate() {
            let p = join(prefix, &format!("encoder.{i}"));
            s.ndm.visit_mut(&join(&p, "ndm"), f);
            s.cbam.visit_mut(&join(&p, "cbam"), f);
        }
        for (i, s) in self.decoder.iter_mut().enumerate() {
            let p = join(prefix, &format!("decoder.{i}"));
            s.up.visit_mut(&join(&p, "up"), f);
            s.srm.visit_mut(&join(&p, "srm"), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
