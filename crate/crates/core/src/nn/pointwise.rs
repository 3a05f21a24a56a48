use crate::error::{dim_err, Result};
use crate::scalar::Real;
use crate::spectral::{S2Signal, SO3Signal, SO3Transform};

/// `max(x, 0)` in place; NaN passes through so divergence stays visible.
pub fn relu_inplace<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v <= T::zero() {
            *v = T::zero();
        }
    });
}

/// Zeroes `grad` where the ReLU output was not positive (subgradient 0 at the kink).
pub fn relu_backward<T: Real>(output: &[T], grad: &mut [T]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if !(*y > T::zero()) {
            *g = T::zero();
        }
    }
}

/// Per-channel integral over SO(3), i.e. the degree-0 coefficient.
pub fn invariant_pool<T: Real>(f: &SO3Signal<T>) -> Result<Vec<T>> {
    let t = SO3Transform::<T>::shared(f.bandwidth())?;
    crate::sgrid::integrate_so3(&t.grid, f)
}

/// Adjoint of [`invariant_pool`]: sample `(k, ·, ·)` of channel `c` receives `w_k g_c`.
pub fn invariant_pool_backward<T: Real>(grad: &[T], b: usize) -> Result<SO3Signal<T>> {
    let t = SO3Transform::<T>::shared(b)?;
    let mut out = SO3Signal::zeros(grad.len(), b);
    let side = 2 * b;
    let plane = side * side;
    for (c, &g) in grad.iter().enumerate() {
        let ch = out.channel_mut(c);
        for k in 0..side {
            let w = t.grid.sample_weight(k) * g;
            ch[k * plane..(k + 1) * plane].iter_mut().for_each(|v| *v = w);
        }
    }
    Ok(out)
}

/// Mean over the γ axis, mapping `SO3Signal[C, b]` to `S2Signal[C, b]`.
pub fn gamma_integrate<T: Real>(g: &SO3Signal<T>) -> S2Signal<T> {
    let b = g.bandwidth();
    let side = 2 * b;
    let inv = T::one() / T::from_usize_lossy(side);
    let mut out = S2Signal::zeros(g.channels(), b);
    for c in 0..g.channels() {
        let src = g.channel(c);
        let dst = out.channel_mut(c);
        for (i, v) in dst.iter_mut().enumerate() {
            *v = src[i * side..(i + 1) * side].iter().copied().sum::<T>() * inv;
        }
    }
    out
}

/// Adjoint of [`gamma_integrate`]: broadcast `g / 2b` along γ.
pub fn gamma_integrate_backward<T: Real>(grad: &S2Signal<T>) -> SO3Signal<T> {
    let b = grad.bandwidth();
    let side = 2 * b;
    let inv = T::one() / T::from_usize_lossy(side);
    let mut out = SO3Signal::zeros(grad.channels(), b);
    for c in 0..grad.channels() {
        let src = grad.channel(c);
        let dst = out.channel_mut(c);
        for (i, v) in src.iter().enumerate() {
            dst[i * side..(i + 1) * side].iter_mut().for_each(|d| *d = *v * inv);
        }
    }
    out
}

pub(crate) fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(dim_err(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}
