//! Differentiable layers with hand-written backward passes.
//!
//! Every trainable object implements [`ParamSet`], which exposes its
//! parameters as flat real slices in a fixed order. A value of the same type
//! filled with zeros doubles as the gradient accumulator, so optimizers,
//! checkpoints and gradient reductions only ever walk slices.
//!
//! Complex spectral parameters are viewed as interleaved `(re, im)` pairs.
//! Their gradient follows `G = ∂L/∂Re + i ∂L/∂Im`, which is exactly the
//! interleaved real gradient.

mod conv;
mod dense;
mod pointwise;

pub use conv::{S2Conv, S2ConvCtx, SO3Conv, SO3ConvCtx};
pub use dense::{real_to_so3_spectrum, so3_real_dof, so3_spectrum_grad_to_real, softmax, softmax_cross_entropy, Dense};
pub use pointwise::{
    gamma_integrate, gamma_integrate_backward, invariant_pool, invariant_pool_backward, relu_backward, relu_inplace,
};

use crate::scalar::Real;

/// An ordered collection of real parameter tensors.
pub trait ParamSet<T: Real> {
    fn tensors(&self) -> Vec<&[T]>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    /// Restores structural constraints (real-signal symmetry of filter
    /// spectra) after an unconstrained update.
    fn project(&mut self) {}

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    fn scale_params(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn flatten(&self) -> Vec<T> {
        self.tensors().into_iter().flat_map(|t| t.iter().copied()).collect()
    }

    /// Euclidean norm of each tensor, in declaration order.
    fn tensor_norms(&self) -> Vec<T> {
        self.tensors().into_iter().map(|t| t.iter().map(|v| *v * *v).sum::<T>().sqrt()).collect()
    }
}

/// Interleaved real view of complex storage.
#[inline]
pub(crate) fn as_real<T: Real>(c: &[num_complex::Complex<T>]) -> &[T] {
    bytemuck::cast_slice(c)
}

#[inline]
pub(crate) fn as_real_mut<T: Real>(c: &mut [num_complex::Complex<T>]) -> &mut [T] {
    bytemuck::cast_slice_mut(c)
}
