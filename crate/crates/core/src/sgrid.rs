//! Driscoll–Healy sampling grids on S² and SO(3).
//!
//! Both grids use `2b` equispaced azimuths `2πj/(2b)` and `2b` polar angles
//! `β_k = π(2k+1)/(4b)`, which never touch the poles. Quadrature weights are
//! taken with respect to the normalized measures `dα sinβ dβ / 4π` (S²) and
//! `dα sinβ dβ dγ / 8π²` (SO(3)), so the total measure of either space is 1
//! and the weights are exact for band-limited integrands of degree `< 2b`.

use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;
use crate::spectral::{S2Signal, SO3Signal};

/// Polar sample angles `β_k = π(2k+1)/(4b)`, `k = 0..2b`.
pub fn beta_samples(b: usize) -> Vec<f64> {
    (0..2 * b).map(|k| std::f64::consts::PI * (2 * k + 1) as f64 / (4 * b) as f64).collect()
}

/// Azimuthal sample angles `2πj/(2b)`, `j = 0..2b`.
pub fn azimuth_samples(b: usize) -> Vec<f64> {
    (0..2 * b).map(|j| std::f64::consts::PI * j as f64 / b as f64).collect()
}

/// Per-β Driscoll–Healy weights, normalized to sum to one.
///
/// The closed form `(2/b) sin β_k Σ_{p<b} sin((2p+1)β_k)/(2p+1)` integrates
/// `g(β) sinβ dβ` exactly for polynomials in `cos β` of degree `< 2b`;
/// dividing by its total turns it into the normalized `sinβ dβ / 2` rule.
pub fn dh_weights(b: usize) -> Vec<f64> {
    let raw: Vec<f64> = beta_samples(b)
        .into_iter()
        .map(|beta| {
            let s: f64 = (0..b)
                .map(|p| {
                    let q = (2 * p + 1) as f64;
                    (q * beta).sin() / q
                })
                .sum();
            2.0 / b as f64 * beta.sin() * s
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn check_bandwidth(b: usize) -> Result<()> {
    if b == 0 {
        Err(Error::InvalidBandwidth(b))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct S2Grid<T> {
    pub bandwidth: usize,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    /// Per-β weights; a sample at `(j, k)` carries weight `weights[k] / (2b)`.
    pub weights: Vec<T>,
}

impl<T: Real> S2Grid<T> {
    pub fn new(b: usize) -> Result<Self> {
        check_bandwidth(b)?;
        Ok(Self {
            bandwidth: b,
            alpha: azimuth_samples(b).into_iter().map(T::lit).collect(),
            beta: beta_samples(b).into_iter().map(T::lit).collect(),
            weights: dh_weights(b).into_iter().map(T::lit).collect(),
        })
    }

    /// Number of samples per angle (`2b`).
    pub fn side(&self) -> usize {
        2 * self.bandwidth
    }

    /// Quadrature weight of the sample at polar index `k`.
    pub fn sample_weight(&self, k: usize) -> T {
        self.weights[k] / T::from_usize_lossy(self.side())
    }

    /// Unit vector of grid point `(j_α, k_β)`.
    pub fn point(&self, j: usize, k: usize) -> [f64; 3] {
        let (a, b) = (self.alpha[j].as_f64(), self.beta[k].as_f64());
        [b.sin() * a.cos(), b.sin() * a.sin(), b.cos()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SO3Grid<T> {
    pub bandwidth: usize,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    /// Per-β weights; a sample at `(k, j_α, j_γ)` carries `weights[k] / (2b)²`.
    pub weights: Vec<T>,
}

impl<T: Real> SO3Grid<T> {
    pub fn new(b: usize) -> Result<Self> {
        check_bandwidth(b)?;
        let az: Vec<T> = azimuth_samples(b).into_iter().map(T::lit).collect();
        Ok(Self {
            bandwidth: b,
            alpha: az.clone(),
            beta: beta_samples(b).into_iter().map(T::lit).collect(),
            gamma: az,
            weights: dh_weights(b).into_iter().map(T::lit).collect(),
        })
    }

    pub fn side(&self) -> usize {
        2 * self.bandwidth
    }

    pub fn sample_weight(&self, k: usize) -> T {
        let s = T::from_usize_lossy(self.side());
        self.weights[k] / (s * s)
    }

    /// ZYZ Euler angles `(α, β, γ)` of the grid rotation at `(k_β, j_α, j_γ)`.
    pub fn euler(&self, k: usize, ja: usize, jg: usize) -> crate::rotation::EulerZYZ {
        crate::rotation::EulerZYZ::new(self.alpha[ja].as_f64(), self.beta[k].as_f64(), self.gamma[jg].as_f64())
    }
}

pub fn make_s2_grid<T: Real>(b: usize) -> Result<S2Grid<T>> {
    S2Grid::new(b)
}

pub fn make_so3_grid<T: Real>(b: usize) -> Result<SO3Grid<T>> {
    SO3Grid::new(b)
}

/// Per-channel normalized integral of an S² signal.
pub fn integrate_s2<T: Real>(grid: &S2Grid<T>, f: &S2Signal<T>) -> Result<Vec<T>> {
    if f.bandwidth() != grid.bandwidth {
        return Err(dim_err(format!(
            "signal bandwidth {} does not match grid bandwidth {}",
            f.bandwidth(),
            grid.bandwidth
        )));
    }
    let side = grid.side();
    Ok((0..f.channels())
        .map(|c| {
            let ch = f.channel(c);
            let mut acc = T::zero();
            for k in 0..side {
                let row: T = ch[k * side..(k + 1) * side].iter().copied().sum();
                acc += grid.sample_weight(k) * row;
            }
            acc
        })
        .collect())
}

/// Per-channel normalized integral of an SO(3) signal.
pub fn integrate_so3<T: Real>(grid: &SO3Grid<T>, f: &SO3Signal<T>) -> Result<Vec<T>> {
    if f.bandwidth() != grid.bandwidth {
        return Err(dim_err(format!(
            "signal bandwidth {} does not match grid bandwidth {}",
            f.bandwidth(),
            grid.bandwidth
        )));
    }
    let side = grid.side();
    let plane = side * side;
    Ok((0..f.channels())
        .map(|c| {
            let ch = f.channel(c);
            let mut acc = T::zero();
            for k in 0..side {
                let slab: T = ch[k * plane..(k + 1) * plane].iter().copied().sum();
                acc += grid.sample_weight(k) * slab;
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Legendre polynomial by the Bonnet recurrence.
    fn legendre(l: usize, x: f64) -> f64 {
        let (mut p0, mut p1) = (1.0, x);
        if l == 0 {
            return p0;
        }
        for n in 1..l {
            let nf = n as f64;
            let p2 = ((2.0 * nf + 1.0) * x * p1 - nf * p0) / (nf + 1.0);
            p0 = p1;
            p1 = p2;
        }
        p1
    }

    /// Composite Simpson on [0, π] of P_l(cos β) sin β / 2.
    fn simpson_legendre(l: usize, n: usize) -> f64 {
        let h = std::f64::consts::PI / n as f64;
        let g = |b: f64| legendre(l, b.cos()) * b.sin() / 2.0;
        let mut s = g(0.0) + g(std::f64::consts::PI);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn zero_bandwidth_rejected() {
        assert!(matches!(make_s2_grid::<f64>(0), Err(Error::InvalidBandwidth(0))));
        assert!(matches!(make_so3_grid::<f64>(0), Err(Error::InvalidBandwidth(0))));
    }

    #[test]
    fn grid_shapes() {
        let g = make_s2_grid::<f64>(30).unwrap();
        assert_eq!((g.alpha.len(), g.beta.len()), (60, 60));
        let h = make_so3_grid::<f64>(6).unwrap();
        assert_eq!((h.alpha.len(), h.beta.len(), h.gamma.len()), (12, 12, 12));
    }

    #[test]
    fn total_measure_is_one() {
        for b in [1usize, 2, 4, 7, 16, 33] {
            let g = make_s2_grid::<f64>(b).unwrap();
            let tot: f64 = (0..2 * b).flat_map(|_j| (0..2 * b).map(|k| g.sample_weight(k))).sum();
            assert!((tot - 1.0).abs() < 1e-12, "b={b} total={tot}");
            let h = make_so3_grid::<f64>(b).unwrap();
            let tot: f64 = (0..2 * b).map(|k| h.sample_weight(k) * (4 * b * b) as f64).sum();
            assert!((tot - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_exactness_matches_simpson() {
        let b = 8;
        let w = dh_weights(b);
        let beta = beta_samples(b);
        for l in 0..2 * b {
            let quad: f64 = (0..2 * b).map(|k| w[k] * legendre(l, beta[k].cos())).sum();
            let expected = if l == 0 { 1.0 } else { 0.0 };
            assert!((quad - expected).abs() < 1e-10, "l={l}: {quad}");
        }
        // Independent oracle for the l = 3 example.
        let oracle = simpson_legendre(3, 1_000_000);
        let quad: f64 = (0..2 * b).map(|k| w[k] * legendre(3, beta[k].cos())).sum();
        assert!(oracle.abs() < 1e-10);
        assert!((quad - oracle).abs() < 1e-10);
    }

    #[test]
    fn f32_grid_is_consistent() {
        let g = make_s2_grid::<f32>(5).unwrap();
        let tot: f32 = g.weights.iter().copied().sum();
        assert!((tot - 1.0).abs() < 1e-6);
    }
}
