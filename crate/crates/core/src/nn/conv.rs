use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{as_real, as_real_mut, ParamSet};
use crate::corr::{s2_corr_acc, s2_corr_backward_acc, so3_corr_acc, so3_corr_backward_acc};
use crate::error::{dim_err, Error, Result};
use crate::harmonics::{s2_index, so3_offset};
use crate::scalar::Real;
use crate::spectral::{
    s2_analyze_adjoint, s2_analyze_to, so3_analyze_adjoint, so3_analyze_to, so3_synthesize_adjoint,
    so3_synthesize_unchecked, S2Signal, S2Spectrum, SO3Signal, SO3Spectrum,
};

fn check_shape(c_in: usize, c_out: usize, b_in: usize, b_out: usize) -> Result<()> {
    if c_in == 0 || c_out == 0 {
        return Err(Error::InvalidConfig("convolution needs at least one channel".into()));
    }
    if b_in == 0 || b_out == 0 {
        return Err(Error::InvalidBandwidth(0));
    }
    Ok(())
}

fn add_bias<T: Real>(out: &mut SO3Signal<T>, bias: &[T]) {
    for (c, &b) in bias.iter().enumerate() {
        out.channel_mut(c).iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Real>(grad_out: &SO3Signal<T>, acc: &mut [T]) {
    for (c, g) in acc.iter_mut().enumerate() {
        *g += grad_out.channel(c).iter().copied().sum::<T>();
    }
}

/// ReLU gain of the variance-preserving initialization.
const INIT_GAIN: f64 = 2.0;

/// Spectral sampling std for a filter coefficient, split evenly over real and
/// imaginary parts. `fan` is the number of coefficients each output
/// coefficient sums over; with this variance the expected output energy
/// equals `INIT_GAIN` times the input energy at every degree.
fn init_std(fan: usize) -> f64 {
    (INIT_GAIN / fan as f64).sqrt() / std::f64::consts::SQRT_2
}

/// S² → SO(3) correlation layer: `out_c = Σ_i h_{c,i} ⋆ f_i + bias_c`.
///
/// Filters are stored as spectra at `min(b_in, b_out)`; higher degrees could
/// never meet a nonzero input or survive the output band-limit.
#[derive(Debug, Clone, PartialEq)]
pub struct S2Conv<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub b_in: usize,
    pub b_out: usize,
    /// Channel `co * c_in + ci` holds `ĥ_{co,ci}`.
    pub filters: S2Spectrum<T>,
    pub bias: Vec<T>,
}

/// Cached input spectrum of an [`S2Conv`] forward pass.
#[derive(Debug, Clone)]
pub struct S2ConvCtx<T> {
    input: S2Spectrum<T>,
}

impl<T: Real> S2Conv<T> {
    pub fn new(c_in: usize, c_out: usize, b_in: usize, b_out: usize) -> Result<Self> {
        check_shape(c_in, c_out, b_in, b_out)?;
        Ok(Self {
            c_in,
            c_out,
            b_in,
            b_out,
            filters: S2Spectrum::zeros(c_in * c_out, b_in.min(b_out)),
            bias: vec![T::zero(); c_out],
        })
    }

    pub fn filter_bandwidth(&self) -> usize {
        self.filters.bandwidth()
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let b = self.filter_bandwidth();
        for c in 0..self.filters.channels() {
            let ch = self.filters.channel_mut(c);
            for l in 0..b {
                let dist = Normal::new(0.0, init_std(self.c_in)).expect("positive std");
                for m in -(l as i64)..=l as i64 {
                    ch[s2_index(l, m)] = Complex::new(T::lit(dist.sample(rng)), T::lit(dist.sample(rng)));
                }
            }
        }
        self.filters.symmetrize();
        self.bias.iter_mut().for_each(|v| *v = T::zero());
    }

    fn check_input(&self, channels: usize, b: usize) -> Result<()> {
        if channels != self.c_in || b != self.b_in {
            return Err(dim_err(format!(
                "S2Conv expects {} channels at b={}, got {channels} at b={b}",
                self.c_in, self.b_in
            )));
        }
        Ok(())
    }

    /// Output spectrum for an input spectrum at the filter bandwidth.
    pub fn forward_spectrum(&self, input: &S2Spectrum<T>) -> Result<SO3Spectrum<T>> {
        let b = self.filter_bandwidth();
        if input.channels() != self.c_in || input.bandwidth() != b {
            return Err(dim_err("S2Conv spectral input has the wrong shape"));
        }
        let mut out = SO3Spectrum::zeros(self.c_out, b);
        for co in 0..self.c_out {
            let dst = out.channel_mut(co);
            for ci in 0..self.c_in {
                s2_corr_acc(input.channel(ci), self.filters.channel(co * self.c_in + ci), b, dst);
            }
        }
        Ok(out)
    }

    pub fn forward(&self, f: &S2Signal<T>) -> Result<(SO3Signal<T>, S2ConvCtx<T>)> {
        self.check_input(f.channels(), f.bandwidth())?;
        let input = s2_analyze_to(f, self.filter_bandwidth())?;
        let mut out = so3_synthesize_unchecked(&self.forward_spectrum(&input)?, self.b_out)?;
        add_bias(&mut out, &self.bias);
        Ok((out, S2ConvCtx { input }))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, ctx: &S2ConvCtx<T>, grad_out: &SO3Signal<T>, grads: &mut Self) -> Result<S2Signal<T>> {
        if grad_out.channels() != self.c_out || grad_out.bandwidth() != self.b_out {
            return Err(dim_err("S2Conv output gradient has the wrong shape"));
        }
        let b = self.filter_bandwidth();
        let g = so3_synthesize_adjoint(grad_out, b)?;
        bias_grad(grad_out, &mut grads.bias);
        let mut gin = S2Spectrum::zeros(self.c_in, b);
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                let k = co * self.c_in + ci;
                s2_corr_backward_acc(
                    g.channel(co),
                    ctx.input.channel(ci),
                    self.filters.channel(k),
                    b,
                    Some(gin.channel_mut(ci)),
                    Some(grads.filters.channel_mut(k)),
                );
            }
        }
        s2_analyze_adjoint(&gin, self.b_in)
    }
}

impl<T: Real> ParamSet<T> for S2Conv<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![as_real(self.filters.coeffs()), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![as_real_mut(self.filters.coeffs_mut()), &mut self.bias]
    }

    fn project(&mut self) {
        self.filters.symmetrize();
    }
}

/// SO(3) → SO(3) correlation layer: `out_c = Σ_i h_{c,i} ⋆ f_i + bias_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SO3Conv<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub b_in: usize,
    pub b_out: usize,
    pub filters: SO3Spectrum<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SO3ConvCtx<T> {
    input: SO3Spectrum<T>,
}

impl<T: Real> SO3Conv<T> {
    pub fn new(c_in: usize, c_out: usize, b_in: usize, b_out: usize) -> Result<Self> {
        check_shape(c_in, c_out, b_in, b_out)?;
        Ok(Self {
            c_in,
            c_out,
            b_in,
            b_out,
            filters: SO3Spectrum::zeros(c_in * c_out, b_in.min(b_out)),
            bias: vec![T::zero(); c_out],
        })
    }

    pub fn filter_bandwidth(&self) -> usize {
        self.filters.bandwidth()
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let b = self.filter_bandwidth();
        for c in 0..self.filters.channels() {
            let ch = self.filters.channel_mut(c);
            for l in 0..b {
                let dist = Normal::new(0.0, init_std(self.c_in * (2 * l + 1))).expect("positive std");
                for v in &mut ch[so3_offset(l)..so3_offset(l + 1)] {
                    *v = Complex::new(T::lit(dist.sample(rng)), T::lit(dist.sample(rng)));
                }
            }
        }
        self.filters.symmetrize();
        self.bias.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn forward_spectrum(&self, input: &SO3Spectrum<T>) -> Result<SO3Spectrum<T>> {
        let b = self.filter_bandwidth();
        if input.channels() != self.c_in || input.bandwidth() != b {
            return Err(dim_err("SO3Conv spectral input has the wrong shape"));
        }
        let mut out = SO3Spectrum::zeros(self.c_out, b);
        for co in 0..self.c_out {
            let dst = out.channel_mut(co);
            for ci in 0..self.c_in {
                so3_corr_acc(input.channel(ci), self.filters.channel(co * self.c_in + ci), b, dst);
            }
        }
        Ok(out)
    }

    pub fn forward(&self, f: &SO3Signal<T>) -> Result<(SO3Signal<T>, SO3ConvCtx<T>)> {
        if f.channels() != self.c_in || f.bandwidth() != self.b_in {
            return Err(dim_err(format!(
                "SO3Conv expects {} channels at b={}, got {} at b={}",
                self.c_in,
                self.b_in,
                f.channels(),
                f.bandwidth()
            )));
        }
        let input = so3_analyze_to(f, self.filter_bandwidth())?;
        let mut out = so3_synthesize_unchecked(&self.forward_spectrum(&input)?, self.b_out)?;
        add_bias(&mut out, &self.bias);
        Ok((out, SO3ConvCtx { input }))
    }

    /// Forward pass from an input spectrum (used after a spectral dense layer).
    pub fn forward_from_spectrum(&self, input: SO3Spectrum<T>) -> Result<(SO3Signal<T>, SO3ConvCtx<T>)> {
        let mut out = so3_synthesize_unchecked(&self.forward_spectrum(&input)?, self.b_out)?;
        add_bias(&mut out, &self.bias);
        Ok((out, SO3ConvCtx { input }))
    }

    /// Gradient with respect to the input spectrum (at the filter bandwidth).
    pub fn backward_spectrum(
        &self,
        ctx: &SO3ConvCtx<T>,
        grad_out: &SO3Signal<T>,
        grads: &mut Self,
    ) -> Result<SO3Spectrum<T>> {
        if grad_out.channels() != self.c_out || grad_out.bandwidth() != self.b_out {
            return Err(dim_err("SO3Conv output gradient has the wrong shape"));
        }
        let b = self.filter_bandwidth();
        let g = so3_synthesize_adjoint(grad_out, b)?;
        bias_grad(grad_out, &mut grads.bias);
        let mut gin = SO3Spectrum::zeros(self.c_in, b);
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                let k = co * self.c_in + ci;
                so3_corr_backward_acc(
                    g.channel(co),
                    ctx.input.channel(ci),
                    self.filters.channel(k),
                    b,
                    Some(gin.channel_mut(ci)),
                    Some(grads.filters.channel_mut(k)),
                );
            }
        }
        Ok(gin)
    }

    pub fn backward(&self, ctx: &SO3ConvCtx<T>, grad_out: &SO3Signal<T>, grads: &mut Self) -> Result<SO3Signal<T>> {
        let gin = self.backward_spectrum(ctx, grad_out, grads)?;
        so3_analyze_adjoint(&gin, self.b_in)
    }
}

impl<T: Real> ParamSet<T> for SO3Conv<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![as_real(self.filters.coeffs()), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![as_real_mut(self.filters.coeffs_mut()), &mut self.bias]
    }

    fn project(&mut self) {
        self.filters.symmetrize();
    }
}
