//! Encoder/decoder assembly, classifier head and checkpoints.

mod checkpoint;
mod config;

pub use checkpoint::{Checkpoint, CheckpointKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Stage};

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::loss::{loss as eval_loss, LossKind, LossOutput};
use crate::nn::{
    gamma_integrate, gamma_integrate_backward, invariant_pool, invariant_pool_backward, real_to_so3_spectrum,
    relu_backward, relu_inplace, so3_real_dof, so3_spectrum_grad_to_real, softmax, softmax_cross_entropy, Dense,
    ParamSet, S2Conv, S2ConvCtx, SO3Conv, SO3ConvCtx,
};
use crate::scalar::Real;
use crate::spectral::{so3_synthesize_adjoint, so3_synthesize_unchecked, S2Signal, SO3Signal};

/// Convolutional trunk: S² conv, SO(3) convs, integral pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub s2: S2Conv<T>,
    pub so3: Vec<SO3Conv<T>>,
    pub relu: bool,
}

/// Values kept from an encoder forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    s2_ctx: S2ConvCtx<T>,
    s2_out: SO3Signal<T>,
    so3_ctx: Vec<SO3ConvCtx<T>>,
    so3_out: Vec<SO3Signal<T>>,
}

impl<T: Real> Encoder<T> {
    pub fn new(input_channels: usize, input_bandwidth: usize, stages: &[Stage], relu: bool) -> Result<Self> {
        let first = stages.first().ok_or_else(|| dim_err("encoder needs at least one stage"))?;
        let s2 = S2Conv::new(input_channels, first.channels, input_bandwidth, first.bandwidth)?;
        let so3 = stages
            .windows(2)
            .map(|w| SO3Conv::new(w[0].channels, w[1].channels, w[0].bandwidth, w[1].bandwidth))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { s2, so3, relu })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.s2.init(rng);
        self.so3.iter_mut().for_each(|c| c.init(rng));
    }

    pub fn output_dim(&self) -> usize {
        self.so3.last().map_or(self.s2.c_out, |c| c.c_out)
    }

    /// Feature map before pooling (ReLU applied when enabled).
    pub fn features(&self, f: &S2Signal<T>) -> Result<(SO3Signal<T>, EncoderCache<T>)> {
        let (mut h, s2_ctx) = self.s2.forward(f)?;
        if self.relu {
            relu_inplace(h.data_mut());
        }
        let mut so3_ctx = Vec::with_capacity(self.so3.len());
        let mut so3_out = Vec::with_capacity(self.so3.len());
        let mut cur = h.clone();
        for conv in &self.so3 {
            let (mut o, ctx) = conv.forward(&cur)?;
            if self.relu {
                relu_inplace(o.data_mut());
            }
            so3_ctx.push(ctx);
            so3_out.push(o.clone());
            cur = o;
        }
        Ok((cur, EncoderCache { s2_ctx, s2_out: h, so3_ctx, so3_out }))
    }

    /// Pooled rotation-invariant descriptor.
    pub fn forward(&self, f: &S2Signal<T>) -> Result<(Vec<T>, EncoderCache<T>)> {
        let (feat, cache) = self.features(f)?;
        Ok((invariant_pool(&feat)?, cache))
    }

    /// Backpropagates a gradient on the pooled vector into `grads`.
    pub fn backward(&self, cache: &EncoderCache<T>, grad_pooled: &[T], grads: &mut Self) -> Result<()> {
        let last_b = self.so3.last().map_or(self.s2.b_out, |c| c.b_out);
        let mut g = invariant_pool_backward(grad_pooled, last_b)?;
        for i in (0..self.so3.len()).rev() {
            if self.relu {
                relu_backward(cache.so3_out[i].data(), g.data_mut());
            }
            g = self.so3[i].backward(&cache.so3_ctx[i], &g, &mut grads.so3[i])?;
        }
        if self.relu {
            relu_backward(cache.s2_out.data(), g.data_mut());
        }
        self.s2.backward(&cache.s2_ctx, &g, &mut grads.s2)?;
        Ok(())
    }
}

impl<T: Real> ParamSet<T> for Encoder<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.s2.tensors();
        self.so3.iter().for_each(|c| v.extend(c.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.s2.tensors_mut();
        self.so3.iter_mut().for_each(|c| v.extend(c.tensors_mut()));
        v
    }

    fn project(&mut self) {
        self.s2.project();
        self.so3.iter_mut().for_each(|c| c.project());
    }
}

/// Latent vector back to an S² signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub dense: Dense<T>,
    pub start: Stage,
    pub convs: Vec<SO3Conv<T>>,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub struct DecoderCache<T> {
    z: Vec<T>,
    start: SO3Signal<T>,
    ctx: Vec<SO3ConvCtx<T>>,
    outs: Vec<SO3Signal<T>>,
}

impl<T: Real> Decoder<T> {
    pub fn new(latent: usize, start: Stage, stages: &[Stage], relu: bool) -> Result<Self> {
        let dense = Dense::new(latent, start.channels * so3_real_dof(start.bandwidth))?;
        let mut convs = Vec::with_capacity(stages.len());
        let mut prev = start;
        for s in stages {
            convs.push(SO3Conv::new(prev.channels, s.channels, prev.bandwidth, s.bandwidth)?);
            prev = *s;
        }
        Ok(Self { dense, start, convs, relu })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.dense.init(rng, 1.0);
        // Spread the dense output variance over the degrees of the start spectrum.
        let s = T::lit(1.0 / (self.start.bandwidth as f64).sqrt());
        self.dense.weight.iter_mut().for_each(|w| *w *= s);
        self.convs.iter_mut().for_each(|c| c.init(rng));
    }

    pub fn forward(&self, z: &[T]) -> Result<(S2Signal<T>, DecoderCache<T>)> {
        let v = self.dense.forward(z)?;
        let spec = real_to_so3_spectrum(&v, self.start.channels, self.start.bandwidth)?;
        let mut start = so3_synthesize_unchecked(&spec, self.start.bandwidth)?;
        if self.relu {
            relu_inplace(start.data_mut());
        }
        let mut ctx = Vec::with_capacity(self.convs.len());
        let mut outs = Vec::with_capacity(self.convs.len());
        let mut cur = start.clone();
        let n = self.convs.len();
        for (i, conv) in self.convs.iter().enumerate() {
            let (mut o, c) = conv.forward(&cur)?;
            if self.relu && i + 1 < n {
                relu_inplace(o.data_mut());
            }
            ctx.push(c);
            outs.push(o.clone());
            cur = o;
        }
        Ok((gamma_integrate(&cur), DecoderCache { z: z.to_vec(), start, ctx, outs }))
    }

    /// Backpropagates a gradient on the output signal; returns `∂L/∂z`.
    pub fn backward(&self, cache: &DecoderCache<T>, grad_out: &S2Signal<T>, grads: &mut Self) -> Result<Vec<T>> {
        let mut g = gamma_integrate_backward(grad_out);
        let n = self.convs.len();
        for i in (0..n).rev() {
            if self.relu && i + 1 < n {
                relu_backward(cache.outs[i].data(), g.data_mut());
            }
            g = self.convs[i].backward(&cache.ctx[i], &g, &mut grads.convs[i])?;
        }
        if self.relu {
            relu_backward(cache.start.data(), g.data_mut());
        }
        let gs = so3_synthesize_adjoint(&g, self.start.bandwidth)?;
        let gv = so3_spectrum_grad_to_real(&gs);
        self.dense.backward(&cache.z, &gv, &mut grads.dense)
    }
}

impl<T: Real> ParamSet<T> for Decoder<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.dense.tensors();
        self.convs.iter().for_each(|c| v.extend(c.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.dense.tensors_mut();
        self.convs.iter_mut().for_each(|c| v.extend(c.tensors_mut()));
        v
    }

    fn project(&mut self) {
        self.convs.iter_mut().for_each(|c| c.project());
    }
}

/// The rotation-invariant autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub latent: Option<Dense<T>>,
    pub decoder: Decoder<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    enc: EncoderCache<T>,
    pooled: Vec<T>,
    dec: DecoderCache<T>,
}

/// Loss value, alignment and reconstruction of one forward/backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: LossOutput<T>,
    pub reconstruction: S2Signal<T>,
}

impl<T: Real> Model<T> {
    /// All parameters zero; see [`Model::init`].
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config.input_channels, config.input_bandwidth, &config.encoder, config.relu)?;
        let latent =
            if config.encoder_dense { Some(Dense::new(config.pooled_dim(), config.latent_dim)?) } else { None };
        let decoder = Decoder::new(config.latent_dim, config.decoder_start, &config.decoder, config.relu)?;
        Ok(Self { config: config.clone(), encoder, latent, decoder })
    }

    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.init(rng);
        Ok(m)
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.encoder.init(rng);
        if let Some(d) = &mut self.latent {
            d.init(rng, 1.0);
        }
        self.decoder.init(rng);
    }

    /// Zero-filled model of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn check_input(&self, f: &S2Signal<T>) -> Result<()> {
        if f.channels() != self.config.input_channels || f.bandwidth() != self.config.input_bandwidth {
            return Err(dim_err(format!(
                "model expects {} channels at b={}, got {} at b={}",
                self.config.input_channels,
                self.config.input_bandwidth,
                f.channels(),
                f.bandwidth()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, f: &S2Signal<T>) -> Result<Vec<T>> {
        self.check_input(f)?;
        let (pooled, _) = self.encoder.forward(f)?;
        match &self.latent {
            Some(d) => d.forward(&pooled),
            None => Ok(pooled),
        }
    }

    pub fn decode(&self, z: &[T]) -> Result<S2Signal<T>> {
        Ok(self.decoder.forward(z)?.0)
    }

    pub fn reconstruct(&self, f: &S2Signal<T>) -> Result<S2Signal<T>> {
        self.decode(&self.encode(f)?)
    }

    pub fn forward(&self, f: &S2Signal<T>) -> Result<(S2Signal<T>, ForwardCache<T>)> {
        self.check_input(f)?;
        let (pooled, enc) = self.encoder.forward(f)?;
        let z = match &self.latent {
            Some(d) => d.forward(&pooled)?,
            None => pooled.clone(),
        };
        let (out, dec) = self.decoder.forward(&z)?;
        Ok((out, ForwardCache { enc, pooled, dec }))
    }

    /// Backpropagates `∂L/∂f̂` and accumulates parameter gradients into `grads`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &S2Signal<T>, grads: &mut Self) -> Result<()> {
        let gz = self.decoder.backward(&cache.dec, grad_out, &mut grads.decoder)?;
        let gp = match (&self.latent, &mut grads.latent) {
            (Some(d), Some(gd)) => d.backward(&cache.pooled, &gz, gd)?,
            _ => gz,
        };
        self.encoder.backward(&cache.enc, &gp, &mut grads.encoder)
    }

    /// Loss of reconstructing `f` and its parameter gradients (accumulated into `grads`).
    pub fn forward_loss(
        &self,
        f: &S2Signal<T>,
        kind: LossKind,
        b_corr: usize,
        grads: &mut Self,
    ) -> Result<StepOutput<T>> {
        let (out, cache) = self.forward(f)?;
        let loss = eval_loss(kind, f, &out, b_corr)?;
        self.backward(&cache, &loss.grad, grads)?;
        Ok(StepOutput { loss, reconstruction: out })
    }
}

impl<T: Real> ParamSet<T> for Model<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.encoder.tensors();
        if let Some(d) = &self.latent {
            v.extend(d.tensors());
        }
        v.extend(self.decoder.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.encoder.tensors_mut();
        if let Some(d) = &mut self.latent {
            v.extend(d.tensors_mut());
        }
        v.extend(self.decoder.tensors_mut());
        v
    }

    fn project(&mut self) {
        self.encoder.project();
        self.decoder.project();
    }
}

/// Supervised baseline: encoder trunk, pooling, one dense layer, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    pub config: ModelConfig,
    pub classes: usize,
    pub encoder: Encoder<T>,
    pub head: Dense<T>,
}

impl<T: Real> Classifier<T> {
    pub fn zeros(config: &ModelConfig, classes: usize) -> Result<Self> {
        if config.input_channels == 0 || config.input_bandwidth == 0 || config.encoder.is_empty() {
            return Err(crate::error::Error::InvalidConfig("classifier needs an encoder".into()));
        }
        let encoder = Encoder::new(config.input_channels, config.input_bandwidth, &config.encoder, config.relu)?;
        let head = Dense::new(encoder.output_dim(), classes)?;
        Ok(Self { config: config.clone(), classes, encoder, head })
    }

    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, classes: usize, rng: &mut R) -> Result<Self> {
        let mut c = Self::zeros(config, classes)?;
        c.encoder.init(rng);
        c.head.init(rng, 1.0);
        Ok(c)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    pub fn logits(&self, f: &S2Signal<T>) -> Result<Vec<T>> {
        let (p, _) = self.encoder.forward(f)?;
        self.head.forward(&p)
    }

    pub fn predict_proba(&self, f: &S2Signal<T>) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(f)?))
    }

    pub fn predict(&self, f: &S2Signal<T>) -> Result<usize> {
        let l = self.logits(f)?;
        Ok(l.iter().enumerate().fold(0, |b, (i, v)| if *v > l[b] { i } else { b }))
    }

    /// Cross-entropy loss of one sample; gradients accumulated into `grads`.
    pub fn forward_loss(&self, f: &S2Signal<T>, label: usize, grads: &mut Self) -> Result<T> {
        let (p, cache) = self.encoder.forward(f)?;
        let logits = self.head.forward(&p)?;
        let (loss, gl) = softmax_cross_entropy(&logits, label)?;
        let gp = self.head.backward(&p, &gl, &mut grads.head)?;
        self.encoder.backward(&cache, &gp, &mut grads.encoder)?;
        Ok(loss)
    }
}

impl<T: Real> ParamSet<T> for Classifier<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut v = self.encoder.tensors();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }

    fn project(&mut self) {
        self.encoder.project();
    }
}

#[cfg(test)]
mod tests;
