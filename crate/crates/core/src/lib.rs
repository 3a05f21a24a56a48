//! Rotation-invariant autoencoders for signals on the sphere.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the CLI and the
//! training loop use.

pub mod corr;
pub mod data;
pub mod error;
pub mod eval;
pub mod harmonics;
pub mod loss;
pub mod model;
pub mod nn;
pub mod random;
pub mod rotation;
pub mod scalar;
pub mod sgrid;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
pub use rotation::EulerZYZ;
pub use scalar::Real;

pub type S2Signal = spectral::S2Signal<f64>;
pub type SO3Signal = spectral::SO3Signal<f64>;
pub type S2Spectrum = spectral::S2Spectrum<f64>;
pub type SO3Spectrum = spectral::SO3Spectrum<f64>;
pub type S2SignalF32 = spectral::S2Signal<f32>;
pub type SO3SignalF32 = spectral::SO3Signal<f32>;
pub type S2SpectrumF32 = spectral::S2Spectrum<f32>;
pub type SO3SpectrumF32 = spectral::SO3Spectrum<f32>;
