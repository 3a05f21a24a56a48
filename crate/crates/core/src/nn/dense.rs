use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::pointwise::check_len;
use super::ParamSet;
use crate::error::{dim_err, Error, Result};
use crate::harmonics::{so3_index, so3_len};
use crate::scalar::{parity, Real};
use crate::spectral::SO3Spectrum;

/// Fully connected layer `y = W x + b`, `W` row-major `(n_out, n_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidConfig("dense layer needs nonzero sizes".into()));
        }
        Ok(Self { n_in, n_out, weight: vec![T::zero(); n_in * n_out], bias: vec![T::zero(); n_out] })
    }

    /// Gaussian weights with variance `gain / n_in`, zero bias.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R, gain: f64) {
        let dist = Normal::new(0.0, (gain / self.n_in as f64).sqrt()).expect("positive std");
        self.weight.iter_mut().for_each(|w| *w = T::lit(dist.sample(rng)));
        self.bias.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(x.len(), self.n_in, "dense input")?;
        Ok((0..self.n_out)
            .map(|o| {
                let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
                row.iter().zip(x).map(|(w, v)| *w * *v).sum::<T>() + self.bias[o]
            })
            .collect())
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grads`; returns `∂L/∂x`.
    pub fn backward(&self, x: &[T], grad_out: &[T], grads: &mut Self) -> Result<Vec<T>> {
        check_len(x.len(), self.n_in, "dense input")?;
        check_len(grad_out.len(), self.n_out, "dense output gradient")?;
        let mut gx = vec![T::zero(); self.n_in];
        for (o, &g) in grad_out.iter().enumerate() {
            grads.bias[o] += g;
            if g == T::zero() {
                continue;
            }
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grads.weight[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        Ok(gx)
    }
}

impl<T: Real> ParamSet<T> for Dense<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Real degrees of freedom of one channel of a real-signal SO(3) spectrum.
pub const fn so3_real_dof(b: usize) -> usize {
    so3_len(b)
}

/// Whether `(m, n)` is the stored representative of its mirror pair.
#[inline]
fn is_positive(m: i64, n: i64) -> bool {
    m > 0 || (m == 0 && n > 0)
}

/// Builds a real-symmetric SO(3) spectrum from `channels · so3_len(b)` reals.
///
/// Per degree, the first value is `f̂⁰⁰ₗ` (real); the pairs `(m, n) > (0, 0)`
/// in lexicographic order then take two values each (real, imaginary), and
/// `f̂⁻ᵐ⁻ⁿₗ = (−1)^{m−n} conj(f̂ᵐⁿₗ)` fills the rest.
pub fn real_to_so3_spectrum<T: Real>(v: &[T], channels: usize, b: usize) -> Result<SO3Spectrum<T>> {
    let per = so3_real_dof(b);
    if v.len() != channels * per {
        return Err(dim_err(format!(
            "expected {} reals for {channels} channels at b={b}, got {}",
            channels * per,
            v.len()
        )));
    }
    let mut out = SO3Spectrum::zeros(channels, b);
    for c in 0..channels {
        let src = &v[c * per..(c + 1) * per];
        let dst = out.channel_mut(c);
        let mut p = 0;
        for l in 0..b {
            let li = l as i64;
            dst[so3_index(l, 0, 0)] = Complex::new(src[p], T::zero());
            p += 1;
            for m in 0..=li {
                for n in -li..=li {
                    if !is_positive(m, n) {
                        continue;
                    }
                    let z = Complex::new(src[p], src[p + 1]);
                    p += 2;
                    dst[so3_index(l, m, n)] = z;
                    dst[so3_index(l, -m, -n)] = z.conj() * parity::<T>(m - n);
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`real_to_so3_spectrum`] under `G = ∂L/∂Re + i ∂L/∂Im`.
pub fn so3_spectrum_grad_to_real<T: Real>(g: &SO3Spectrum<T>) -> Vec<T> {
    let b = g.bandwidth();
    let per = so3_real_dof(b);
    let mut out = Vec::with_capacity(g.channels() * per);
    for c in 0..g.channels() {
        let src = g.channel(c);
        for l in 0..b {
            let li = l as i64;
            out.push(src[so3_index(l, 0, 0)].re);
            for m in 0..=li {
                for n in -li..=li {
                    if !is_positive(m, n) {
                        continue;
                    }
                    let s = parity::<T>(m - n);
                    let (p, q) = (src[so3_index(l, m, n)], src[so3_index(l, -m, -n)]);
                    out.push(p.re + s * q.re);
                    out.push(p.im - s * q.im);
                }
            }
        }
    }
    out
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mx = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|v| (*v - mx).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its logit gradient.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::IndexOutOfRange(format!("label {label} with {} classes", logits.len())));
    }
    let p = softmax(logits);
    let loss = -(p[label].max(T::min_positive_value())).ln();
    let mut g = p;
    g[label] -= T::one();
    Ok((loss, g))
}
