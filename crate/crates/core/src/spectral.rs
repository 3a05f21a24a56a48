//! Fourier analysis on S² and SO(3).
//!
//! Grid layouts (row-major, last index fastest):
//!
//! * `S2Signal`: `[channel][k_β][j_α]`, `2b × 2b` samples per channel.
//! * `SO3Signal`: `[channel][k_β][j_α][j_γ]`, `2b × 2b × 2b` samples.
//!
//! Spectral layouts follow [`crate::harmonics::s2_index`] and
//! [`crate::harmonics::so3_index`]. Forward transforms are
//!
//! ```text
//! f̂ᵐₗ  = ∫ f conj(Yᵐₗ) dx            f    = Σ f̂ᵐₗ Yᵐₗ
//! f̂ᵐⁿₗ = ∫ f conj(Dᵐⁿₗ) dX           f(R) = Σ (2ℓ+1) f̂ᵐⁿₗ Dᵐⁿₗ(R)
//! ```
//!
//! evaluated by separation of variables: a DFT over the azimuthal axes
//! followed by a weighted Legendre / Wigner-d sum over β.
//!
//! The `*_adjoint` functions are exact transposes of the forward maps with
//! respect to the plain Euclidean inner product on stored values (real part
//! of `conj(a)·b` for complex coefficients). They are what backpropagation
//! through a transform needs.

use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{dim_err, Error, Result};
use crate::harmonics::{
    s2_index, s2_len, so3_index, so3_len, so3_offset, wigner_big_d_all, LegendreTable, WignerTable,
};
use crate::rotation::EulerZYZ;
use crate::scalar::{czero, parity, Real, C};
use crate::sgrid::{S2Grid, SO3Grid};

pub use crate::rotation::EulerZYZ as Rotation;

// ---------------------------------------------------------------------------
// Signals and spectra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct S2Signal<T> {
    channels: usize,
    bandwidth: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SO3Signal<T> {
    channels: usize,
    bandwidth: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S2Spectrum<T> {
    channels: usize,
    bandwidth: usize,
    coeffs: Vec<C<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SO3Spectrum<T> {
    channels: usize,
    bandwidth: usize,
    coeffs: Vec<C<T>>,
}

macro_rules! grid_signal_common {
    ($name:ident, $per:expr) => {
        impl<T: Real> $name<T> {
            /// Samples per channel at bandwidth `b`.
            #[inline]
            pub fn channel_len(b: usize) -> usize {
                let f: fn(usize) -> usize = $per;
                f(b)
            }

            pub fn new(channels: usize, bandwidth: usize, data: Vec<T>) -> Result<Self> {
                if bandwidth == 0 {
                    return Err(Error::InvalidBandwidth(0));
                }
                let want = channels * Self::channel_len(bandwidth);
                if data.len() != want {
                    return Err(dim_err(format!(
                        "{} with {channels} channels at b={bandwidth} needs {want} samples, got {}",
                        stringify!($name),
                        data.len()
                    )));
                }
                Ok(Self { channels, bandwidth, data })
            }

            pub fn zeros(channels: usize, bandwidth: usize) -> Self {
                Self { channels, bandwidth, data: vec![T::zero(); channels * Self::channel_len(bandwidth)] }
            }

            pub fn constant(channels: usize, bandwidth: usize, value: T) -> Self {
                Self { channels, bandwidth, data: vec![value; channels * Self::channel_len(bandwidth)] }
            }

            #[inline]
            pub fn channels(&self) -> usize {
                self.channels
            }

            #[inline]
            pub fn bandwidth(&self) -> usize {
                self.bandwidth
            }

            #[inline]
            pub fn side(&self) -> usize {
                2 * self.bandwidth
            }

            #[inline]
            pub fn data(&self) -> &[T] {
                &self.data
            }

            #[inline]
            pub fn data_mut(&mut self) -> &mut [T] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<T> {
                self.data
            }

            #[inline]
            pub fn channel(&self, c: usize) -> &[T] {
                let n = Self::channel_len(self.bandwidth);
                &self.data[c * n..(c + 1) * n]
            }

            #[inline]
            pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
                let n = Self::channel_len(self.bandwidth);
                &mut self.data[c * n..(c + 1) * n]
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.channels == other.channels && self.bandwidth == other.bandwidth
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|v| v.is_finite())
            }

            /// Plain Euclidean inner product of the stored samples.
            pub fn dot(&self, other: &Self) -> T {
                self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).sum()
            }

            pub fn max_abs_diff(&self, other: &Self) -> T {
                self.data.iter().zip(&other.data).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
            }

            pub fn scale(&mut self, s: T) {
                self.data.iter_mut().for_each(|v| *v *= s);
            }

            pub fn add_assign(&mut self, other: &Self) {
                self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += *b);
            }
        }
    };
}

grid_signal_common!(S2Signal, |b| 4 * b * b);
grid_signal_common!(SO3Signal, |b| 8 * b * b * b);

impl<T: Real> S2Signal<T> {
    /// Sample at `(channel, k_β, j_α)`.
    #[inline]
    pub fn get(&self, c: usize, k: usize, j: usize) -> T {
        let s = self.side();
        self.data[c * s * s + k * s + j]
    }

    /// Builds a signal by evaluating `f(channel, α, β)` at every grid point.
    pub fn from_fn(channels: usize, b: usize, mut f: impl FnMut(usize, f64, f64) -> T) -> Result<Self> {
        let grid = S2Grid::<f64>::new(b)?;
        let side = 2 * b;
        let mut data = Vec::with_capacity(channels * side * side);
        for c in 0..channels {
            for k in 0..side {
                for j in 0..side {
                    data.push(f(c, grid.alpha[j], grid.beta[k]));
                }
            }
        }
        Self::new(channels, b, data)
    }

    /// Quadrature-weighted squared norm `∫ |f|² dx` per channel.
    pub fn norm_sq(&self) -> Vec<T> {
        let grid = S2Transform::<T>::shared(self.bandwidth).expect("bandwidth checked at construction");
        let side = self.side();
        (0..self.channels)
            .map(|c| {
                let ch = self.channel(c);
                (0..side)
                    .map(|k| {
                        let row: T = ch[k * side..(k + 1) * side].iter().map(|v| *v * *v).sum();
                        grid.grid.sample_weight(k) * row
                    })
                    .sum()
            })
            .collect()
    }

    /// Quadrature-weighted inner product `∫ f g dx` summed over channels.
    pub fn weighted_dot(&self, other: &Self) -> T {
        let grid = S2Transform::<T>::shared(self.bandwidth).expect("bandwidth checked at construction");
        let side = self.side();
        let mut acc = T::zero();
        for c in 0..self.channels {
            let (a, b) = (self.channel(c), other.channel(c));
            for k in 0..side {
                let row: T = (k * side..(k + 1) * side).map(|i| a[i] * b[i]).sum();
                acc += grid.grid.sample_weight(k) * row;
            }
        }
        acc
    }
}

impl<T: Real> SO3Signal<T> {
    /// Sample at `(channel, k_β, j_α, j_γ)`.
    #[inline]
    pub fn get(&self, c: usize, k: usize, ja: usize, jg: usize) -> T {
        let s = self.side();
        self.data[((c * s + k) * s + ja) * s + jg]
    }

    /// Builds a signal by evaluating `f(channel, rotation)` at every grid point.
    pub fn from_fn(channels: usize, b: usize, mut f: impl FnMut(usize, &EulerZYZ) -> T) -> Result<Self> {
        let grid = SO3Grid::<f64>::new(b)?;
        let side = 2 * b;
        let mut data = Vec::with_capacity(channels * side * side * side);
        for c in 0..channels {
            for k in 0..side {
                for ja in 0..side {
                    for jg in 0..side {
                        data.push(f(c, &grid.euler(k, ja, jg)));
                    }
                }
            }
        }
        Self::new(channels, b, data)
    }

    /// Quadrature-weighted squared norm `∫ |f|² dX` per channel.
    pub fn norm_sq(&self) -> Vec<T> {
        let t = SO3Transform::<T>::shared(self.bandwidth).expect("bandwidth checked at construction");
        let side = self.side();
        let plane = side * side;
        (0..self.channels)
            .map(|c| {
                let ch = self.channel(c);
                (0..side)
                    .map(|k| {
                        let slab: T = ch[k * plane..(k + 1) * plane].iter().map(|v| *v * *v).sum();
                        t.grid.sample_weight(k) * slab
                    })
                    .sum()
            })
            .collect()
    }
}

macro_rules! spectrum_common {
    ($name:ident, $len:path) => {
        impl<T: Real> $name<T> {
            #[inline]
            pub fn channel_len(b: usize) -> usize {
                $len(b)
            }

            pub fn new(channels: usize, bandwidth: usize, coeffs: Vec<C<T>>) -> Result<Self> {
                if bandwidth == 0 {
                    return Err(Error::InvalidBandwidth(0));
                }
                let want = channels * $len(bandwidth);
                if coeffs.len() != want {
                    return Err(dim_err(format!(
                        "{} with {channels} channels at b={bandwidth} needs {want} coefficients, got {}",
                        stringify!($name),
                        coeffs.len()
                    )));
                }
                Ok(Self { channels, bandwidth, coeffs })
            }

            pub fn zeros(channels: usize, bandwidth: usize) -> Self {
                Self { channels, bandwidth, coeffs: vec![czero(); channels * $len(bandwidth)] }
            }

            #[inline]
            pub fn channels(&self) -> usize {
                self.channels
            }

            #[inline]
            pub fn bandwidth(&self) -> usize {
                self.bandwidth
            }

            #[inline]
            pub fn coeffs(&self) -> &[C<T>] {
                &self.coeffs
            }

            #[inline]
            pub fn coeffs_mut(&mut self) -> &mut [C<T>] {
                &mut self.coeffs
            }

            #[inline]
            pub fn channel(&self, c: usize) -> &[C<T>] {
                let n = $len(self.bandwidth);
                &self.coeffs[c * n..(c + 1) * n]
            }

            #[inline]
            pub fn channel_mut(&mut self, c: usize) -> &mut [C<T>] {
                let n = $len(self.bandwidth);
                &mut self.coeffs[c * n..(c + 1) * n]
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.channels == other.channels && self.bandwidth == other.bandwidth
            }

            /// Keeps degrees `ℓ < b_out` (`b_out ≤ bandwidth`).
            pub fn truncate(&self, b_out: usize) -> Result<Self> {
                if b_out == 0 || b_out > self.bandwidth {
                    return Err(dim_err(format!("cannot truncate bandwidth {} to {b_out}", self.bandwidth)));
                }
                let (n_in, n_out) = ($len(self.bandwidth), $len(b_out));
                let mut coeffs = Vec::with_capacity(self.channels * n_out);
                for c in 0..self.channels {
                    coeffs.extend_from_slice(&self.coeffs[c * n_in..c * n_in + n_out]);
                }
                Ok(Self { channels: self.channels, bandwidth: b_out, coeffs })
            }

            /// Zero-extends to degrees `ℓ < b_out` (`b_out ≥ bandwidth`).
            pub fn pad(&self, b_out: usize) -> Result<Self> {
                if b_out < self.bandwidth {
                    return Err(dim_err(format!("cannot pad bandwidth {} to {b_out}", self.bandwidth)));
                }
                let (n_in, n_out) = ($len(self.bandwidth), $len(b_out));
                let mut coeffs = vec![czero(); self.channels * n_out];
                for c in 0..self.channels {
                    coeffs[c * n_out..c * n_out + n_in].copy_from_slice(&self.coeffs[c * n_in..(c + 1) * n_in]);
                }
                Ok(Self { channels: self.channels, bandwidth: b_out, coeffs })
            }

            /// Truncates or pads to `b_out`.
            pub fn resize(&self, b_out: usize) -> Result<Self> {
                if b_out <= self.bandwidth {
                    self.truncate(b_out)
                } else {
                    self.pad(b_out)
                }
            }

            /// Euclidean inner product `Re Σ conj(a) b` of stored coefficients.
            pub fn real_dot(&self, other: &Self) -> T {
                self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
            }

            pub fn max_abs_diff(&self, other: &Self) -> T {
                self.coeffs.iter().zip(&other.coeffs).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()))
            }

            pub fn max_abs(&self) -> T {
                self.coeffs.iter().fold(T::zero(), |m, a| m.max(a.norm()))
            }

            pub fn scale(&mut self, s: T) {
                self.coeffs.iter_mut().for_each(|v| *v = *v * s);
            }

            pub fn add_assign(&mut self, other: &Self) {
                self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a = *a + *b);
            }

            pub fn symmetrize(&mut self) {
                for c in 0..self.channels {
                    let b = self.bandwidth;
                    Self::symmetrize_channel(self.channel_mut(c), b);
                }
            }
        }
    };
}

spectrum_common!(S2Spectrum, s2_len);
spectrum_common!(SO3Spectrum, so3_len);

/// Truncation to a lower bandwidth (degrees `ℓ ≥ b_out` dropped).
pub trait BandLimited: Sized {
    fn truncate_to(&self, b_out: usize) -> Result<Self>;
    fn pad_to(&self, b_out: usize) -> Result<Self>;
}

impl<T: Real> BandLimited for S2Spectrum<T> {
    fn truncate_to(&self, b_out: usize) -> Result<Self> {
        self.truncate(b_out)
    }
    fn pad_to(&self, b_out: usize) -> Result<Self> {
        self.pad(b_out)
    }
}

impl<T: Real> BandLimited for SO3Spectrum<T> {
    fn truncate_to(&self, b_out: usize) -> Result<Self> {
        self.truncate(b_out)
    }
    fn pad_to(&self, b_out: usize) -> Result<Self> {
        self.pad(b_out)
    }
}

pub fn truncate_spectrum<S: BandLimited>(spec: &S, b_out: usize) -> Result<S> {
    spec.truncate_to(b_out)
}

pub fn pad_spectrum<S: BandLimited>(spec: &S, b_out: usize) -> Result<S> {
    spec.pad_to(b_out)
}

impl<T: Real> S2Spectrum<T> {
    #[inline]
    pub fn get(&self, c: usize, l: usize, m: i64) -> C<T> {
        self.channel(c)[s2_index(l, m)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, l: usize, m: i64, v: C<T>) {
        self.channel_mut(c)[s2_index(l, m)] = v;
    }

    /// Parseval energy `Σ |f̂ᵐₗ|²` per channel.
    pub fn energy(&self) -> Vec<T> {
        (0..self.channels).map(|c| self.channel(c).iter().map(|v| v.norm_sqr()).sum()).collect()
    }

    /// Energy per degree for channel `c`.
    pub fn degree_energy(&self, c: usize) -> Vec<T> {
        let ch = self.channel(c);
        (0..self.bandwidth).map(|l| ch[l * l..(l + 1) * (l + 1)].iter().map(|v| v.norm_sqr()).sum()).collect()
    }

    /// Largest violation of `f̂⁻ᵐₗ = (−1)ᵐ conj(f̂ᵐₗ)`.
    pub fn real_symmetry_deviation(&self) -> T {
        let mut dev = T::zero();
        for c in 0..self.channels {
            let ch = self.channel(c);
            for l in 0..self.bandwidth {
                for m in 0..=l as i64 {
                    let a = ch[s2_index(l, m)];
                    let b = ch[s2_index(l, -m)];
                    dev = dev.max((b - a.conj() * parity::<T>(m)).norm());
                }
            }
        }
        dev
    }

    fn symmetrize_channel(ch: &mut [C<T>], b: usize) {
        let half = T::lit(0.5);
        for l in 0..b {
            ch[s2_index(l, 0)].im = T::zero();
            for m in 1..=l as i64 {
                let s = parity::<T>(m);
                let p = ch[s2_index(l, m)];
                let q = ch[s2_index(l, -m)];
                let v = (p + q.conj() * s) * half;
                ch[s2_index(l, m)] = v;
                ch[s2_index(l, -m)] = v.conj() * s;
            }
        }
    }

    /// Evaluates channel `c` of the synthesized (real) signal at `(α, β)`.
    pub fn evaluate(&self, c: usize, alpha: f64, beta: f64) -> f64 {
        let p = crate::harmonics::legendre_all(self.bandwidth, beta);
        let ch = self.channel(c);
        let mut acc = 0.0;
        for l in 0..self.bandwidth {
            for m in -(l as i64)..=l as i64 {
                let i = s2_index(l, m);
                let e = Complex::from_polar(p[i], m as f64 * alpha);
                let v = Complex::new(ch[i].re.as_f64(), ch[i].im.as_f64());
                acc += (v * e).re;
            }
        }
        acc
    }
}

impl<T: Real> SO3Spectrum<T> {
    #[inline]
    pub fn get(&self, c: usize, l: usize, m: i64, n: i64) -> C<T> {
        self.channel(c)[so3_index(l, m, n)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, l: usize, m: i64, n: i64, v: C<T>) {
        self.channel_mut(c)[so3_index(l, m, n)] = v;
    }

    /// Parseval energy `Σ (2ℓ+1) |f̂ᵐⁿₗ|²` per channel.
    pub fn energy(&self) -> Vec<T> {
        (0..self.channels)
            .map(|c| {
                let ch = self.channel(c);
                (0..self.bandwidth)
                    .map(|l| {
                        let blk: T = ch[so3_offset(l)..so3_offset(l + 1)].iter().map(|v| v.norm_sqr()).sum();
                        T::from_usize_lossy(2 * l + 1) * blk
                    })
                    .sum()
            })
            .collect()
    }

    /// Largest violation of `f̂⁻ᵐ⁻ⁿₗ = (−1)^{m−n} conj(f̂ᵐⁿₗ)`.
    pub fn real_symmetry_deviation(&self) -> T {
        let mut dev = T::zero();
        for c in 0..self.channels {
            let ch = self.channel(c);
            for l in 0..self.bandwidth {
                let li = l as i64;
                for m in -li..=li {
                    for n in -li..=li {
                        let a = ch[so3_index(l, m, n)];
                        let b = ch[so3_index(l, -m, -n)];
                        dev = dev.max((b - a.conj() * parity::<T>(m - n)).norm());
                    }
                }
            }
        }
        dev
    }

    fn symmetrize_channel(ch: &mut [C<T>], b: usize) {
        let half = T::lit(0.5);
        for l in 0..b {
            let li = l as i64;
            for m in -li..=li {
                for n in -li..=li {
                    // Visit each mirror pair once: (m, n) > (0, 0) lexicographically.
                    if m < 0 || (m == 0 && n < 0) {
                        continue;
                    }
                    let s = parity::<T>(m - n);
                    let p = ch[so3_index(l, m, n)];
                    if m == 0 && n == 0 {
                        ch[so3_index(l, 0, 0)].im = T::zero();
                        continue;
                    }
                    let q = ch[so3_index(l, -m, -n)];
                    let v = (p + q.conj() * s) * half;
                    ch[so3_index(l, m, n)] = v;
                    ch[so3_index(l, -m, -n)] = v.conj() * s;
                }
            }
        }
    }

    /// Degree-`ℓ` block of channel `c`, row-major `(2ℓ+1)²`.
    #[inline]
    pub fn block(&self, c: usize, l: usize) -> &[C<T>] {
        &self.channel(c)[so3_offset(l)..so3_offset(l + 1)]
    }
}

// ---------------------------------------------------------------------------
// Transform engines
// ---------------------------------------------------------------------------

type Cache = Mutex<HashMap<(TypeId, usize), Arc<dyn Any + Send + Sync>>>;

fn cached<V: Any + Send + Sync>(
    cache: &'static OnceLock<Cache>,
    b: usize,
    build: impl FnOnce() -> Result<V>,
) -> Result<Arc<V>> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (TypeId::of::<V>(), b);
    if let Some(v) = map.lock().expect("transform cache poisoned").get(&key) {
        return Ok(Arc::clone(v).downcast::<V>().expect("cache entry has the keyed type"));
    }
    // Built outside the lock; a concurrent duplicate build is harmless.
    let built = Arc::new(build()?);
    let mut guard = map.lock().expect("transform cache poisoned");
    let entry = guard.entry(key).or_insert_with(|| built.clone() as Arc<dyn Any + Send + Sync>);
    Ok(Arc::clone(entry).downcast::<V>().expect("cache entry has the keyed type"))
}

static S2_CACHE: OnceLock<Cache> = OnceLock::new();
static SO3_CACHE: OnceLock<Cache> = OnceLock::new();

/// Precomputed grid, Legendre table and FFT plans for one S² bandwidth.
pub struct S2Transform<T: Real> {
    pub grid: S2Grid<T>,
    pub legendre: LegendreTable<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

/// Precomputed grid, Wigner table and FFT plans for one SO(3) bandwidth.
pub struct SO3Transform<T: Real> {
    pub grid: SO3Grid<T>,
    pub wigner: WignerTable<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

#[inline]
fn wrap(m: i64, side: usize) -> usize {
    m.rem_euclid(side as i64) as usize
}

fn transpose<V: Copy>(src: &[V], dst: &mut [V], side: usize) {
    for r in 0..side {
        for c in 0..side {
            dst[c * side + r] = src[r * side + c];
        }
    }
}

impl<T: Real> S2Transform<T> {
    pub fn new(b: usize) -> Result<Self> {
        let grid = S2Grid::new(b)?;
        let legendre = LegendreTable::new(b)?;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(2 * b);
        let inv = planner.plan_fft_inverse(2 * b);
        Ok(Self { grid, legendre, fwd, inv })
    }

    /// Shared instance for bandwidth `b` (built once per process).
    pub fn shared(b: usize) -> Result<Arc<Self>> {
        cached(&S2_CACHE, b, || Self::new(b))
    }

    pub fn bandwidth(&self) -> usize {
        self.grid.bandwidth
    }

    /// `out[ℓ,m] += Σ_{j,k} ω_k f[k,j] e^{−imα_j} P̄ᵐₗ(β_k)` for `ℓ < b_spec`,
    /// with `ω_k` the quadrature weight or 1.
    fn analysis_kernel(&self, f: &[T], b_spec: usize, quadrature: bool, out: &mut [C<T>]) {
        let side = 2 * self.bandwidth();
        let mut buf = vec![czero::<T>(); side];
        let mut scratch = vec![czero::<T>(); self.fwd.get_inplace_scratch_len()];
        for k in 0..side {
            for (j, v) in buf.iter_mut().enumerate() {
                *v = Complex::new(f[k * side + j], T::zero());
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            let w = if quadrature { self.grid.sample_weight(k) } else { T::one() };
            let prow = self.legendre.row(k);
            for l in 0..b_spec {
                let li = l as i64;
                for m in -li..=li {
                    let i = s2_index(l, m);
                    out[i] = out[i] + buf[wrap(m, side)] * (w * prow[i]);
                }
            }
        }
    }

    /// `out[k,j] = ω_k Re Σ_{ℓ,m} F[ℓ,m] P̄ᵐₗ(β_k) e^{imα_j}`.
    fn synthesis_kernel(&self, spec: &[C<T>], b_spec: usize, quadrature: bool, out: &mut [T]) {
        let side = 2 * self.bandwidth();
        let mut buf = vec![czero::<T>(); side];
        let mut scratch = vec![czero::<T>(); self.inv.get_inplace_scratch_len()];
        for k in 0..side {
            buf.iter_mut().for_each(|v| *v = czero());
            let prow = self.legendre.row(k);
            for l in 0..b_spec {
                let li = l as i64;
                for m in -li..=li {
                    let i = s2_index(l, m);
                    let slot = wrap(m, side);
                    buf[slot] = buf[slot] + spec[i] * prow[i];
                }
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            let w = if quadrature { self.grid.sample_weight(k) } else { T::one() };
            for j in 0..side {
                out[k * side + j] = buf[j].re * w;
            }
        }
    }
}

impl<T: Real> SO3Transform<T> {
    pub fn new(b: usize) -> Result<Self> {
        let grid = SO3Grid::new(b)?;
        let wigner = WignerTable::new(b)?;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(2 * b);
        let inv = planner.plan_fft_inverse(2 * b);
        Ok(Self { grid, wigner, fwd, inv })
    }

    pub fn shared(b: usize) -> Result<Arc<Self>> {
        cached(&SO3_CACHE, b, || Self::new(b))
    }

    pub fn bandwidth(&self) -> usize {
        self.grid.bandwidth
    }

    /// `out[ℓ,m,n] += s_ℓ Σ ω_k f e^{imα} dᵐⁿₗ(β_k) e^{inγ}` for `ℓ < b_spec`,
    /// with `s_ℓ = 2ℓ+1` when `degree_weighted`, else 1.
    fn analysis_kernel(&self, f: &[T], b_spec: usize, quadrature: bool, degree_weighted: bool, out: &mut [C<T>]) {
        let side = 2 * self.bandwidth();
        let plane = side * side;
        let mut blk = vec![czero::<T>(); plane];
        let mut tr = vec![czero::<T>(); plane];
        let mut scratch = vec![czero::<T>(); self.inv.get_inplace_scratch_len()];
        let scales: Vec<T> =
            (0..b_spec).map(|l| if degree_weighted { T::from_usize_lossy(2 * l + 1) } else { T::one() }).collect();
        for k in 0..side {
            for (v, x) in blk.iter_mut().zip(&f[k * plane..(k + 1) * plane]) {
                *v = Complex::new(*x, T::zero());
            }
            // Rows are γ: A[α][n] = Σ_γ f e^{+inγ}.
            self.inv.process_with_scratch(&mut blk, &mut scratch);
            transpose(&blk, &mut tr, side);
            // tr[n][α] → G[n][m] = Σ_α A e^{+imα}.
            self.inv.process_with_scratch(&mut tr, &mut scratch);
            let w = if quadrature { self.grid.sample_weight(k) } else { T::one() };
            let drow = self.wigner.row(k);
            for l in 0..b_spec {
                let li = l as i64;
                let ws = w * scales[l];
                let base = so3_offset(l);
                let d = 2 * l + 1;
                for m in -li..=li {
                    let mcol = wrap(m, side);
                    let row = base + (m + li) as usize * d;
                    for n in -li..=li {
                        let i = row + (n + li) as usize;
                        out[i] = out[i] + tr[wrap(n, side) * side + mcol] * (ws * drow[i]);
                    }
                }
            }
        }
    }

    /// `out[k,α,γ] = ω_k Re Σ s_ℓ F[ℓ,m,n] e^{−imα} dᵐⁿₗ(β_k) e^{−inγ}`.
    fn synthesis_kernel(&self, spec: &[C<T>], b_spec: usize, quadrature: bool, degree_weighted: bool, out: &mut [T]) {
        let side = 2 * self.bandwidth();
        let plane = side * side;
        let mut blk = vec![czero::<T>(); plane];
        let mut tr = vec![czero::<T>(); plane];
        let mut scratch = vec![czero::<T>(); self.fwd.get_inplace_scratch_len()];
        let scales: Vec<T> =
            (0..b_spec).map(|l| if degree_weighted { T::from_usize_lossy(2 * l + 1) } else { T::one() }).collect();
        for k in 0..side {
            blk.iter_mut().for_each(|v| *v = czero());
            let drow = self.wigner.row(k);
            for l in 0..b_spec {
                let li = l as i64;
                let base = so3_offset(l);
                let d = 2 * l + 1;
                for m in -li..=li {
                    let mrow = wrap(m, side) * side;
                    let row = base + (m + li) as usize * d;
                    for n in -li..=li {
                        let i = row + (n + li) as usize;
                        let slot = mrow + wrap(n, side);
                        blk[slot] = blk[slot] + spec[i] * (scales[l] * drow[i]);
                    }
                }
            }
            // blk[m][n] → rows over n: A[m][γ].
            self.fwd.process_with_scratch(&mut blk, &mut scratch);
            transpose(&blk, &mut tr, side);
            // tr[γ][m] → [γ][α].
            self.fwd.process_with_scratch(&mut tr, &mut scratch);
            let w = if quadrature { self.grid.sample_weight(k) } else { T::one() };
            let dst = &mut out[k * plane..(k + 1) * plane];
            for ja in 0..side {
                for jg in 0..side {
                    dst[ja * side + jg] = tr[jg * side + ja].re * w;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Public transform operations
// ---------------------------------------------------------------------------

/// Tolerance (relative to the largest coefficient, floored at 1) above which a
/// spectrum handed to a synthesis is rejected as not describing a real signal.
pub const REAL_SYMMETRY_TOL: f64 = 1e-6;

fn check_real<T: Real>(dev: T, scale: T) -> Result<()> {
    let tol = T::lit(REAL_SYMMETRY_TOL) * scale.max(T::one());
    if dev > tol {
        Err(Error::NonRealSignal(dev.as_f64()))
    } else {
        Ok(())
    }
}

pub fn s2_analyze<T: Real>(f: &S2Signal<T>) -> Result<S2Spectrum<T>> {
    s2_analyze_to(f, f.bandwidth())
}

/// Analysis keeping degrees `ℓ < b_spec ≤ b`.
pub fn s2_analyze_to<T: Real>(f: &S2Signal<T>, b_spec: usize) -> Result<S2Spectrum<T>> {
    if b_spec == 0 || b_spec > f.bandwidth() {
        return Err(dim_err(format!("cannot analyze b={} signal to b={b_spec}", f.bandwidth())));
    }
    let t = S2Transform::<T>::shared(f.bandwidth())?;
    let mut out = S2Spectrum::zeros(f.channels(), b_spec);
    for c in 0..f.channels() {
        t.analysis_kernel(f.channel(c), b_spec, true, out.channel_mut(c));
    }
    Ok(out)
}

pub fn s2_synthesize<T: Real>(spec: &S2Spectrum<T>) -> Result<S2Signal<T>> {
    s2_synthesize_at(spec, spec.bandwidth())
}

/// Synthesis onto the grid of bandwidth `b_grid ≥ spec.bandwidth()`.
pub fn s2_synthesize_at<T: Real>(spec: &S2Spectrum<T>, b_grid: usize) -> Result<S2Signal<T>> {
    check_real(spec.real_symmetry_deviation(), spec.max_abs())?;
    s2_synthesize_unchecked(spec, b_grid)
}

pub(crate) fn s2_synthesize_unchecked<T: Real>(spec: &S2Spectrum<T>, b_grid: usize) -> Result<S2Signal<T>> {
    if b_grid < spec.bandwidth() {
        return Err(dim_err(format!("cannot synthesize b={} spectrum on a b={b_grid} grid", spec.bandwidth())));
    }
    let t = S2Transform::<T>::shared(b_grid)?;
    let mut out = S2Signal::zeros(spec.channels(), b_grid);
    for c in 0..spec.channels() {
        t.synthesis_kernel(spec.channel(c), spec.bandwidth(), false, out.channel_mut(c));
    }
    Ok(out)
}

/// Transpose of [`s2_analyze_to`] mapping a spectrum gradient to a grid gradient.
pub fn s2_analyze_adjoint<T: Real>(grad: &S2Spectrum<T>, b_grid: usize) -> Result<S2Signal<T>> {
    if b_grid < grad.bandwidth() {
        return Err(dim_err("adjoint grid bandwidth below spectrum bandwidth"));
    }
    let t = S2Transform::<T>::shared(b_grid)?;
    let mut out = S2Signal::zeros(grad.channels(), b_grid);
    for c in 0..grad.channels() {
        t.synthesis_kernel(grad.channel(c), grad.bandwidth(), true, out.channel_mut(c));
    }
    Ok(out)
}

/// Transpose of [`s2_synthesize_at`] mapping a grid gradient to a spectrum gradient.
pub fn s2_synthesize_adjoint<T: Real>(grad: &S2Signal<T>, b_spec: usize) -> Result<S2Spectrum<T>> {
    if b_spec == 0 || b_spec > grad.bandwidth() {
        return Err(dim_err("adjoint spectrum bandwidth above grid bandwidth"));
    }
    let t = S2Transform::<T>::shared(grad.bandwidth())?;
    let mut out = S2Spectrum::zeros(grad.channels(), b_spec);
    for c in 0..grad.channels() {
        t.analysis_kernel(grad.channel(c), b_spec, false, out.channel_mut(c));
    }
    Ok(out)
}

pub fn so3_analyze<T: Real>(f: &SO3Signal<T>) -> Result<SO3Spectrum<T>> {
    so3_analyze_to(f, f.bandwidth())
}

pub fn so3_analyze_to<T: Real>(f: &SO3Signal<T>, b_spec: usize) -> Result<SO3Spectrum<T>> {
    if b_spec == 0 || b_spec > f.bandwidth() {
        return Err(dim_err(format!("cannot analyze b={} signal to b={b_spec}", f.bandwidth())));
    }
    let t = SO3Transform::<T>::shared(f.bandwidth())?;
    let mut out = SO3Spectrum::zeros(f.channels(), b_spec);
    for c in 0..f.channels() {
        t.analysis_kernel(f.channel(c), b_spec, true, false, out.channel_mut(c));
    }
    Ok(out)
}

pub fn so3_synthesize<T: Real>(spec: &SO3Spectrum<T>) -> Result<SO3Signal<T>> {
    so3_synthesize_at(spec, spec.bandwidth())
}

pub fn so3_synthesize_at<T: Real>(spec: &SO3Spectrum<T>, b_grid: usize) -> Result<SO3Signal<T>> {
    check_real(spec.real_symmetry_deviation(), spec.max_abs())?;
    so3_synthesize_unchecked(spec, b_grid)
}

pub(crate) fn so3_synthesize_unchecked<T: Real>(spec: &SO3Spectrum<T>, b_grid: usize) -> Result<SO3Signal<T>> {
    if b_grid < spec.bandwidth() {
        return Err(dim_err(format!("cannot synthesize b={} spectrum on a b={b_grid} grid", spec.bandwidth())));
    }
    let t = SO3Transform::<T>::shared(b_grid)?;
    let mut out = SO3Signal::zeros(spec.channels(), b_grid);
    for c in 0..spec.channels() {
        t.synthesis_kernel(spec.channel(c), spec.bandwidth(), false, true, out.channel_mut(c));
    }
    Ok(out)
}

pub fn so3_analyze_adjoint<T: Real>(grad: &SO3Spectrum<T>, b_grid: usize) -> Result<SO3Signal<T>> {
    if b_grid < grad.bandwidth() {
        return Err(dim_err("adjoint grid bandwidth below spectrum bandwidth"));
    }
    let t = SO3Transform::<T>::shared(b_grid)?;
    let mut out = SO3Signal::zeros(grad.channels(), b_grid);
    for c in 0..grad.channels() {
        t.synthesis_kernel(grad.channel(c), grad.bandwidth(), true, false, out.channel_mut(c));
    }
    Ok(out)
}

pub fn so3_synthesize_adjoint<T: Real>(grad: &SO3Signal<T>, b_spec: usize) -> Result<SO3Spectrum<T>> {
    if b_spec == 0 || b_spec > grad.bandwidth() {
        return Err(dim_err("adjoint spectrum bandwidth above grid bandwidth"));
    }
    let t = SO3Transform::<T>::shared(grad.bandwidth())?;
    let mut out = SO3Spectrum::zeros(grad.channels(), b_spec);
    for c in 0..grad.channels() {
        t.analysis_kernel(grad.channel(c), b_spec, false, true, out.channel_mut(c));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rotation
// ---------------------------------------------------------------------------

/// `f̂ₗ → D_ℓ(R) f̂ₗ`, the spectrum of `x ↦ f(R⁻¹x)`.
pub fn rotate_s2_spectrum<T: Real>(spec: &S2Spectrum<T>, rot: &EulerZYZ) -> S2Spectrum<T> {
    let b = spec.bandwidth();
    let d = wigner_big_d_all::<T>(b, rot);
    let mut out = S2Spectrum::zeros(spec.channels(), b);
    for c in 0..spec.channels() {
        let src = spec.channel(c);
        let dst = out.channel_mut(c);
        for l in 0..b {
            let dim = 2 * l + 1;
            let blk = &d[so3_offset(l)..so3_offset(l + 1)];
            let v = &src[l * l..(l + 1) * (l + 1)];
            for i in 0..dim {
                let mut acc = czero::<T>();
                for k in 0..dim {
                    acc = acc + blk[i * dim + k] * v[k];
                }
                dst[l * l + i] = acc;
            }
        }
    }
    out
}

/// `F_ℓ → conj(D_ℓ(R)) F_ℓ`, the spectrum of `X ↦ f(R⁻¹X)`.
///
/// The conjugate appears because SO(3) coefficients expand in `Dᵐⁿₗ`
/// while S² coefficients expand in `Yᵐₗ ∝ conj(Dᵐ⁰ₗ)`.
pub fn rotate_so3_spectrum<T: Real>(spec: &SO3Spectrum<T>, rot: &EulerZYZ) -> SO3Spectrum<T> {
    let b = spec.bandwidth();
    let d = wigner_big_d_all::<T>(b, rot);
    let mut out = SO3Spectrum::zeros(spec.channels(), b);
    for c in 0..spec.channels() {
        let src = spec.channel(c);
        let dst = out.channel_mut(c);
        for l in 0..b {
            let dim = 2 * l + 1;
            let o = so3_offset(l);
            let blk = &d[o..o + dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = czero::<T>();
                    for k in 0..dim {
                        acc = acc + blk[i * dim + k].conj() * src[o + k * dim + j];
                    }
                    dst[o + i * dim + j] = acc;
                }
            }
        }
    }
    out
}

/// Rotates an S² signal spectrally (analysis, per-degree Wigner-D, synthesis).
pub fn rotate_s2<T: Real>(f: &S2Signal<T>, rot: &EulerZYZ) -> Result<S2Signal<T>> {
    let spec = s2_analyze(f)?;
    s2_synthesize_unchecked(&rotate_s2_spectrum(&spec, rot), f.bandwidth())
}

pub fn rotate_so3<T: Real>(f: &SO3Signal<T>, rot: &EulerZYZ) -> Result<SO3Signal<T>> {
    let spec = so3_analyze(f)?;
    so3_synthesize_unchecked(&rotate_so3_spectrum(&spec, rot), f.bandwidth())
}
