//! Random signals and spectra for synthetic data and tests.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;
use crate::spectral::{S2Signal, S2Spectrum, SO3Signal, SO3Spectrum};

fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::lit(x)
}

/// Real-symmetric S² spectrum with independent standard-normal coefficients.
pub fn random_s2_spectrum<T: Real, R: Rng + ?Sized>(rng: &mut R, channels: usize, b: usize) -> S2Spectrum<T> {
    random_s2_spectrum_decay(rng, channels, b, 0.0)
}

/// As [`random_s2_spectrum`] with degree-`ℓ` coefficients scaled by `(1+ℓ)^(-decay)`.
pub fn random_s2_spectrum_decay<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    channels: usize,
    b: usize,
    decay: f64,
) -> S2Spectrum<T> {
    let mut s = S2Spectrum::zeros(channels, b);
    for v in s.coeffs_mut() {
        *v = Complex::new(normal(rng), normal(rng));
    }
    for c in 0..channels {
        let ch = s.channel_mut(c);
        for l in 0..b {
            let f = T::lit((1.0 + l as f64).powf(-decay));
            ch[l * l..(l + 1) * (l + 1)].iter_mut().for_each(|v| *v = *v * f);
        }
    }
    s.symmetrize();
    s
}

/// Real-symmetric SO(3) spectrum with independent standard-normal coefficients.
pub fn random_so3_spectrum<T: Real, R: Rng + ?Sized>(rng: &mut R, channels: usize, b: usize) -> SO3Spectrum<T> {
    let mut s = SO3Spectrum::zeros(channels, b);
    for v in s.coeffs_mut() {
        *v = Complex::new(normal(rng), normal(rng));
    }
    s.symmetrize();
    s
}

/// Grid signal with independent standard-normal samples (not band-limited).
pub fn random_s2_signal<T: Real, R: Rng + ?Sized>(rng: &mut R, channels: usize, b: usize) -> S2Signal<T> {
    let mut s = S2Signal::zeros(channels, b);
    s.data_mut().iter_mut().for_each(|v| *v = normal(rng));
    s
}

pub fn random_so3_signal<T: Real, R: Rng + ?Sized>(rng: &mut R, channels: usize, b: usize) -> SO3Signal<T> {
    let mut s = SO3Signal::zeros(channels, b);
    s.data_mut().iter_mut().for_each(|v| *v = normal(rng));
    s
}
