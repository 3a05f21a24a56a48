//! Spherical harmonics and Wigner d/D functions.
//!
//! Conventions:
//!
//! * `Yᵐₗ(α, β) = P̄ᵐₗ(cos β) e^{imα}` is orthonormal under the normalized
//!   measure `dα sinβ dβ / 4π`, so `Y⁰₀ ≡ 1`. The Condon–Shortley phase is
//!   included and `P̄⁻ᵐₗ = (−1)ᵐ P̄ᵐₗ`.
//! * `Dᵐⁿₗ(α, β, γ) = e^{−imα} dᵐⁿₗ(β) e^{−inγ}` is the matrix element of the
//!   irreducible representation, so `D(R₁R₂) = D(R₁) D(R₂)`; under the
//!   normalized SO(3) measure `∫ Dᵐⁿₗ conj(Dᵐⁿₗ) = 1/(2ℓ+1)`.
//! * The two are linked by `P̄ᵐₗ(cos β) = √(2ℓ+1) dᵐ⁰ₗ(β)`.
//!
//! Wigner little-d values come from the three-term recurrence in `ℓ` at
//! fixed `(m, n)`, seeded at `ℓ = max(|m|, |n|)` where the explicit sum has a
//! single term. This is the Jacobi-polynomial recurrence and is forward stable
//! on `(0, π)`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::rotation::EulerZYZ;
use crate::scalar::Real;
use crate::sgrid::beta_samples;

/// Coefficient count of an S² spectrum with bandwidth `b`.
#[inline]
pub const fn s2_len(b: usize) -> usize {
    b * b
}

/// Flat index of `(ℓ, m)` in an S² spectrum.
#[inline]
pub fn s2_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// Offset of degree `ℓ`'s `(2ℓ+1)²` block in an SO(3) spectrum.
#[inline]
pub const fn so3_offset(l: usize) -> usize {
    l * (4 * l * l - if l == 0 { 0 } else { 1 }) / 3
}

/// Coefficient count of an SO(3) spectrum with bandwidth `b`.
#[inline]
pub const fn so3_len(b: usize) -> usize {
    so3_offset(b)
}

/// Flat index of `(ℓ, m, n)` in an SO(3) spectrum (row `m`, column `n`).
#[inline]
pub fn so3_index(l: usize, m: i64, n: i64) -> usize {
    let d = 2 * l + 1;
    let li = l as i64;
    so3_offset(l) + (m + li) as usize * d + (n + li) as usize
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for i in 1..=n {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// `dʲ_{m'm}(β)` from the explicit sum, used only where the sum has one term.
fn seed_d(j: i64, mp: i64, m: i64, half_cos: f64, half_sin: f64, lnf: &[f64]) -> f64 {
    let smin = 0.max(m - mp);
    let smax = (j + m).min(j - mp);
    let f = |k: i64| lnf[k as usize];
    let mut acc = 0.0;
    for s in smin..=smax {
        let ln_mag =
            0.5 * (f(j + mp) + f(j - mp) + f(j + m) + f(j - m)) - (f(j + m - s) + f(s) + f(mp - m + s) + f(j - mp - s));
        let sign = if (mp - m + s).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let e_cos = (2 * j + m - mp - 2 * s) as i32;
        let e_sin = (mp - m + 2 * s) as i32;
        acc += sign * ln_mag.exp() * half_cos.powi(e_cos) * half_sin.powi(e_sin);
    }
    acc
}

/// All Wigner little-d values `dᵐⁿₗ(β)` for `ℓ < lmax`, in SO(3) spectral layout.
pub fn wigner_d_all(lmax: usize, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; so3_len(lmax)];
    if lmax == 0 {
        return out;
    }
    let lnf = ln_factorials(2 * lmax + 2);
    let (hs, hc) = (beta / 2.0).sin_cos();
    let cb = beta.cos();
    let top = lmax as i64 - 1;
    for m in -top..=top {
        for n in -top..=top {
            let l0 = m.abs().max(n.abs());
            let mut prev = 0.0;
            let mut cur = seed_d(l0, m, n, hc, hs, &lnf);
            out[so3_index(l0 as usize, m, n)] = cur;
            let (m2, n2) = ((m * m) as f64, (n * n) as f64);
            for l in l0..top {
                let lf = l as f64;
                let l1 = lf + 1.0;
                let denom = ((l1 * l1 - m2) * (l1 * l1 - n2)).sqrt();
                let a = l1 * (2.0 * lf + 1.0) / denom;
                let shift = if l == 0 { 0.0 } else { (m * n) as f64 / (lf * l1) };
                let bcoef = if l == 0 { 0.0 } else { l1 * ((lf * lf - m2) * (lf * lf - n2)).sqrt() / (lf * denom) };
                let next = a * (cb - shift) * cur - bcoef * prev;
                prev = cur;
                cur = next;
                out[so3_index(l as usize + 1, m, n)] = cur;
            }
        }
    }
    out
}

/// The `(2ℓ+1)×(2ℓ+1)` little-d matrix of degree `ℓ` at `β`, row-major in `(m, n)`.
pub fn wigner_d_matrix(l: usize, beta: f64) -> Vec<f64> {
    let all = wigner_d_all(l + 1, beta);
    all[so3_offset(l)..so3_offset(l + 1)].to_vec()
}

/// Single Wigner D-function value `Dᵐⁿₗ(α, β, γ) = e^{−imα} dᵐⁿₗ(β) e^{−inγ}`.
#[allow(non_snake_case)]
pub fn wigner_D(l: usize, m: i64, n: i64, rot: &EulerZYZ) -> Result<Complex<f64>> {
    let li = l as i64;
    if m.abs() > li || n.abs() > li {
        return Err(Error::IndexOutOfRange(format!("(m, n) = ({m}, {n}) outside degree {l}")));
    }
    let d = wigner_d_matrix(l, rot.beta)[((m + li) * (2 * li + 1) + n + li) as usize];
    Ok(Complex::from_polar(d, -(m as f64) * rot.alpha - (n as f64) * rot.gamma))
}

/// Full Wigner D matrices `D_ℓ(R)` for `ℓ < lmax`, in SO(3) spectral layout.
pub fn wigner_big_d_all<T: Real>(lmax: usize, rot: &EulerZYZ) -> Vec<Complex<T>> {
    let d = wigner_d_all(lmax, rot.beta);
    let mut out = Vec::with_capacity(d.len());
    for l in 0..lmax as i64 {
        for m in -l..=l {
            for n in -l..=l {
                let v = d[so3_index(l as usize, m, n)];
                let c = Complex::from_polar(v, -(m as f64) * rot.alpha - (n as f64) * rot.gamma);
                out.push(Complex::new(T::lit(c.re), T::lit(c.im)));
            }
        }
    }
    out
}

/// Fully normalized associated Legendre values `P̄ᵐₗ(cos β)` for `ℓ < lmax`,
/// in S² spectral layout (negative `m` included).
pub fn legendre_all(lmax: usize, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; s2_len(lmax)];
    if lmax == 0 {
        return out;
    }
    let (s, x) = beta.sin_cos();
    let mut diag = 1.0;
    for m in 0..lmax {
        if m > 0 {
            let mf = m as f64;
            diag *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        let mi = m as i64;
        out[s2_index(m, mi)] = diag;
        if m + 1 < lmax {
            let mut p_prev = diag;
            let mut p_cur = (2.0 * m as f64 + 3.0).sqrt() * x * diag;
            out[s2_index(m + 1, mi)] = p_cur;
            for l in m + 2..lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let c = ((2.0 * lf + 1.0) * ((lf - 1.0).powi(2) - mf * mf) / ((2.0 * lf - 3.0) * (lf * lf - mf * mf)))
                    .sqrt();
                let p_next = a * x * p_cur - c * p_prev;
                p_prev = p_cur;
                p_cur = p_next;
                out[s2_index(l, mi)] = p_cur;
            }
        }
    }
    for l in 1..lmax {
        for m in 1..=l as i64 {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            out[s2_index(l, -m)] = sign * out[s2_index(l, m)];
        }
    }
    out
}

/// Spherical harmonic `Yᵐₗ(α, β)` under the normalized convention.
pub fn spherical_harmonic(l: usize, m: i64, alpha: f64, beta: f64) -> Result<Complex<f64>> {
    if m.abs() > l as i64 {
        return Err(Error::IndexOutOfRange(format!("m = {m} outside degree {l}")));
    }
    let p = legendre_all(l + 1, beta)[s2_index(l, m)];
    Ok(Complex::from_polar(p, m as f64 * alpha))
}

/// `P̄ᵐₗ(cos β_k)` on the Driscoll–Healy polar samples.
#[derive(Debug, Clone)]
pub struct LegendreTable<T> {
    bandwidth: usize,
    values: Vec<T>,
}

impl<T: Real> LegendreTable<T> {
    pub fn new(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidBandwidth(0));
        }
        let mut values = Vec::with_capacity(2 * b * s2_len(b));
        for beta in beta_samples(b) {
            values.extend(legendre_all(b, beta).into_iter().map(T::lit));
        }
        Ok(Self { bandwidth: b, values })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, m: i64) -> T {
        self.values[k * s2_len(self.bandwidth) + s2_index(l, m)]
    }

    /// All degrees at polar sample `k`, S² layout.
    #[inline]
    pub fn row(&self, k: usize) -> &[T] {
        let n = s2_len(self.bandwidth);
        &self.values[k * n..(k + 1) * n]
    }
}

pub fn legendre_table<T: Real>(b: usize) -> Result<LegendreTable<T>> {
    LegendreTable::new(b)
}

/// `dᵐⁿₗ(β_k)` on the Driscoll–Healy polar samples.
#[derive(Debug, Clone)]
pub struct WignerTable<T> {
    bandwidth: usize,
    values: Vec<T>,
}

impl<T: Real> WignerTable<T> {
    pub fn new(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidBandwidth(0));
        }
        let mut values = Vec::with_capacity(2 * b * so3_len(b));
        for beta in beta_samples(b) {
            values.extend(wigner_d_all(b, beta).into_iter().map(T::lit));
        }
        Ok(Self { bandwidth: b, values })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize, m: i64, n: i64) -> T {
        self.values[k * so3_len(self.bandwidth) + so3_index(l, m, n)]
    }

    /// All degrees at polar sample `k`, SO(3) layout.
    #[inline]
    pub fn row(&self, k: usize) -> &[T] {
        let n = so3_len(self.bandwidth);
        &self.values[k * n..(k + 1) * n]
    }
}

pub fn wigner_d_table<T: Real>(b: usize) -> Result<WignerTable<T>> {
    WignerTable::new(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::EulerZYZ;
    use crate::sgrid::{dh_weights, make_s2_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Independent route: Jacobi-polynomial form of little-d.
    ///
    /// With `k = min(j+m, j−m, j+n, j−n)`, the standard reduction gives
    /// `d = ξ √(k!(k+a+b)!/((k+a)!(k+b)!)) sin^a(β/2) cos^b(β/2) P_k^{(a,b)}(cos β)`,
    /// where `P^{(a,b)}` is evaluated with its own recurrence in `k`.
    fn jacobi_d(j: i64, m: i64, n: i64, beta: f64) -> f64 {
        // Row index `m`, column index `n`.
        let cands = [j + n, j - n, j + m, j - m];
        let k = *cands.iter().min().unwrap();
        let (a, lam) = if k == j + n {
            (m - n, m - n)
        } else if k == j - n {
            (n - m, 0)
        } else if k == j + m {
            (n - m, 0)
        } else {
            (m - n, m - n)
        };
        let b = 2 * j - 2 * k - a;
        let xi = if lam.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let x = beta.cos();
        let (af, bf) = (a as f64, b as f64);
        // Jacobi recurrence.
        let mut p0 = 1.0;
        let mut p1 = 0.5 * (af - bf + (af + bf + 2.0) * x);
        let p = if k == 0 {
            p0
        } else {
            for nn in 1..k {
                let nf = nn as f64;
                let c = 2.0 * nf + af + bf;
                let a1 = 2.0 * (nf + 1.0) * (nf + af + bf + 1.0) * c;
                let a2 = (c + 1.0) * (af * af - bf * bf);
                let a3 = c * (c + 1.0) * (c + 2.0);
                let a4 = 2.0 * (nf + af) * (nf + bf) * (c + 2.0);
                let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
                p0 = p1;
                p1 = p2;
            }
            p1
        };
        let lnf = ln_factorials(4 * j as usize + 4);
        let f = |q: i64| lnf[q as usize];
        let norm = (0.5 * (f(k) + f(k + a + b) - f(k + a) - f(k + b))).exp();
        xi * norm * (beta / 2.0).sin().powi(a as i32) * (beta / 2.0).cos().powi(b as i32) * p
    }

    #[test]
    fn index_layout() {
        assert_eq!(so3_len(1), 1);
        assert_eq!(so3_len(2), 10);
        assert_eq!(so3_len(3), 35);
        assert_eq!(so3_index(1, -1, -1), 1);
        assert_eq!(so3_index(2, 2, 2), 34);
        assert_eq!(s2_index(2, -2), 4);
    }

    #[test]
    fn low_degree_closed_forms() {
        for &beta in &[0.0, 0.3, 1.1, 2.9, PI] {
            let d1 = wigner_d_matrix(1, beta);
            assert!((d1[4] - beta.cos()).abs() < 1e-14);
            assert!((d1[8] - (1.0 + beta.cos()) / 2.0).abs() < 1e-14);
            assert!((d1[5] - beta.sin() / 2f64.sqrt()).abs() < 1e-14); // d¹₀₁
            assert!((d1[7] + beta.sin() / 2f64.sqrt()).abs() < 1e-14); // d¹₁₀
            let p = legendre_all(2, beta);
            assert!((p[0] - 1.0).abs() < 1e-15);
            assert!((p[s2_index(1, 0)] - 3f64.sqrt() * beta.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn d_at_zero_is_identity() {
        let d = wigner_d_all(20, 0.0);
        for l in 0..20i64 {
            for m in -l..=l {
                for n in -l..=l {
                    let e = if m == n { 1.0 } else { 0.0 };
                    assert!((d[so3_index(l as usize, m, n)] - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn d_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let beta: f64 = rng.random::<f64>() * PI;
            let all = wigner_d_all(33, beta);
            for l in [0i64, 1, 5, 17, 32] {
                for m in -l..=l {
                    for n in -l..=l {
                        let got = all[so3_index(l as usize, m, n)];
                        let want = jacobi_d(l, m, n, beta);
                        assert!((got - want).abs() < 1e-9, "l={l} m={m} n={n} β={beta}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn degree_32_rows_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let beta: f64 = rng.random::<f64>() * PI;
            let d = wigner_d_matrix(32, beta);
            let dim = 65;
            for r in 0..dim {
                let norm: f64 = (0..dim).map(|c| d[r * dim + c].powi(2)).sum();
                assert!((norm - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn degree_64_is_orthogonal() {
        for &beta in &[0.01, 0.7, 1.5707, 2.2, 3.13] {
            let all = wigner_d_all(65, beta);
            let l = 64usize;
            let dim = 2 * l + 1;
            let d = &all[so3_offset(l)..so3_offset(l + 1)];
            for r in (0..dim).step_by(7) {
                for s in (0..dim).step_by(5) {
                    let dot: f64 = (0..dim).map(|c| d[r * dim + c] * d[s * dim + c]).sum();
                    let e = if r == s { 1.0 } else { 0.0 };
                    assert!((dot - e).abs() < 1e-9, "β={beta} r={r} s={s} dot={dot}");
                }
            }
        }
    }

    #[test]
    fn symmetries() {
        let beta = 0.83;
        let d = wigner_d_all(12, beta);
        for l in 0..12i64 {
            for m in -l..=l {
                for n in -l..=l {
                    let v = d[so3_index(l as usize, m, n)];
                    let sym1 = d[so3_index(l as usize, -n, -m)];
                    let sgn = if (m - n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    let sym2 = sgn * d[so3_index(l as usize, n, m)];
                    assert!((v - sym1).abs() < 1e-12 && (v - sym2).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn legendre_is_scaled_d_column() {
        let beta = 1.234;
        let d = wigner_d_all(16, beta);
        let p = legendre_all(16, beta);
        for l in 0..16i64 {
            for m in -l..=l {
                let want = ((2 * l + 1) as f64).sqrt() * d[so3_index(l as usize, m, 0)];
                assert!((p[s2_index(l as usize, m)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn legendre_gram_is_identity() {
        let b = 6;
        let t = legendre_table::<f64>(b).unwrap();
        let g = make_s2_grid::<f64>(b).unwrap();
        // Direct quadrature Gram matrix of Yᵐₗ over the full grid.
        let idx: Vec<(usize, i64)> = (0..b).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m))).collect();
        for &(l1, m1) in &idx {
            for &(l2, m2) in &idx {
                let mut acc = Complex::new(0.0, 0.0);
                for k in 0..2 * b {
                    for j in 0..2 * b {
                        let a = g.alpha[j];
                        let y1 = Complex::from_polar(t.get(k, l1, m1), m1 as f64 * a);
                        let y2 = Complex::from_polar(t.get(k, l2, m2), m2 as f64 * a);
                        acc += y1 * y2.conj() * g.sample_weight(k);
                    }
                }
                let e = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
                assert!((acc.re - e).abs() < 1e-9 && acc.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn big_d_basics_and_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = EulerZYZ::random(&mut rng);
        assert!((wigner_D(0, 0, 0, &r).unwrap() - Complex::new(1.0, 0.0)).norm() < 1e-15);
        let id = EulerZYZ::identity();
        assert!((wigner_D(3, 1, 1, &id).unwrap().re - 1.0).abs() < 1e-12);
        assert!(wigner_D(3, 1, 2, &id).unwrap().norm() < 1e-12);
        assert!(matches!(wigner_D(2, 3, 0, &id), Err(Error::IndexOutOfRange(_))));
        for _ in 0..10 {
            let r1 = EulerZYZ::random(&mut rng);
            let r2 = EulerZYZ::random(&mut rng);
            let r12 = r1.compose(&r2);
            let (a, b, c) =
                (wigner_big_d_all::<f64>(9, &r1), wigner_big_d_all::<f64>(9, &r2), wigner_big_d_all::<f64>(9, &r12));
            for l in 0..9usize {
                let d = 2 * l + 1;
                let o = so3_offset(l);
                for i in 0..d {
                    for j in 0..d {
                        let mut s = Complex::new(0.0, 0.0);
                        for k in 0..d {
                            s += a[o + i * d + k] * b[o + k * d + j];
                        }
                        assert!((s - c[o + i * d + j]).norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn so3_orthogonality_under_quadrature() {
        let b = 4;
        let w = dh_weights(b);
        let betas = beta_samples(b);
        let side = 2 * b;
        let mut basis = Vec::new();
        for l in 0..b as i64 {
            for m in -l..=l {
                for n in -l..=l {
                    basis.push((l, m, n));
                }
            }
        }
        // α, γ sums of exponentials are exact; check the β factor and phases together.
        for &(l1, m1, n1) in basis.iter().step_by(3) {
            for &(l2, m2, n2) in basis.iter().step_by(2) {
                let mut acc = Complex::new(0.0, 0.0);
                for (k, &beta) in betas.iter().enumerate() {
                    for ja in 0..side {
                        for jg in 0..side {
                            let rot = EulerZYZ::new(PI * ja as f64 / b as f64, beta, PI * jg as f64 / b as f64);
                            let x = wigner_D(l1 as usize, m1, n1, &rot).unwrap();
                            let y = wigner_D(l2 as usize, m2, n2, &rot).unwrap();
                            acc += x * y.conj() * (w[k] / (side * side) as f64);
                        }
                    }
                }
                acc *= (2 * l1 + 1) as f64;
                let e = if (l1, m1, n1) == (l2, m2, n2) { 1.0 } else { 0.0 };
                assert!((acc - Complex::new(e, 0.0)).norm() < 1e-8);
            }
        }
    }
}
