//! Cross-correlations on S² and SO(3) via the correlation theorem.
//!
//! For real signals the correlations are
//!
//! ```text
//! (h ⋆ f)(R) = ∫_{S²}    f(x) h(R⁻¹x) dx      Ĉₗ = conj(f̂ₗ) ĥₗᵀ / (2ℓ+1)
//! (h ⋆ f)(R) = ∫_{SO(3)} f(X) h(R⁻¹X) dX      Ĉₗ = f̂ₗ ĥₗ†
//! ```
//!
//! Both are left-equivariant: correlating a rotated `f` rotates the output.
//! Multi-channel inputs are correlated channel-wise and summed.
//!
//! Gradient helpers use the convention `G = ∂L/∂Re z + i ∂L/∂Im z`, so a
//! perturbation `dz` changes a real loss by `Re(conj(G) dz)`.

use crate::error::{dim_err, Result};
use crate::harmonics::{s2_index, so3_offset};
use crate::rotation::EulerZYZ;
use crate::scalar::{czero, Real, C};
use crate::sgrid::SO3Grid;
use crate::spectral::{
    s2_analyze_to, so3_analyze_to, so3_synthesize_unchecked, S2Signal, S2Spectrum, SO3Signal, SO3Spectrum,
};

/// `out += conj(f) hᵀ / (2ℓ+1)` for degrees `ℓ < b` of one channel pair.
pub(crate) fn s2_corr_acc<T: Real>(f: &[C<T>], h: &[C<T>], b: usize, out: &mut [C<T>]) {
    for l in 0..b {
        let li = l as i64;
        let inv = T::one() / T::from_usize_lossy(2 * l + 1);
        let o = so3_offset(l);
        let d = 2 * l + 1;
        for m in -li..=li {
            let fm = f[s2_index(l, m)].conj() * inv;
            let row = o + (m + li) as usize * d;
            for n in -li..=li {
                out[row + (n + li) as usize] += fm * h[s2_index(l, n)];
            }
        }
    }
}

/// Given the output gradient `g` of [`s2_corr_acc`], accumulates the
/// gradients of `f` and `h` (either may be skipped).
pub(crate) fn s2_corr_backward_acc<T: Real>(
    g: &[C<T>],
    f: &[C<T>],
    h: &[C<T>],
    b: usize,
    mut gf: Option<&mut [C<T>]>,
    mut gh: Option<&mut [C<T>]>,
) {
    for l in 0..b {
        let li = l as i64;
        let inv = T::one() / T::from_usize_lossy(2 * l + 1);
        let o = so3_offset(l);
        let d = 2 * l + 1;
        for m in -li..=li {
            let row = o + (m + li) as usize * d;
            let im = s2_index(l, m);
            let mut acc_f = czero::<T>();
            for n in -li..=li {
                let gmn = g[row + (n + li) as usize];
                let i_n = s2_index(l, n);
                if let Some(gh) = gh.as_deref_mut() {
                    gh[i_n] += gmn * f[im] * inv;
                }
                acc_f += gmn.conj() * h[i_n];
            }
            if let Some(gf) = gf.as_deref_mut() {
                gf[im] += acc_f * inv;
            }
        }
    }
}

/// `out += f h†` per degree `ℓ < b` for one channel pair of block spectra.
pub(crate) fn so3_corr_acc<T: Real>(f: &[C<T>], h: &[C<T>], b: usize, out: &mut [C<T>]) {
    for l in 0..b {
        let o = so3_offset(l);
        let d = 2 * l + 1;
        let (fb, hb) = (&f[o..o + d * d], &h[o..o + d * d]);
        let ob = &mut out[o..o + d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = czero::<T>();
                for k in 0..d {
                    acc += fb[i * d + k] * hb[j * d + k].conj();
                }
                ob[i * d + j] += acc;
            }
        }
    }
}

/// Backward of [`so3_corr_acc`]: `gf += g h`, `gh += g† f`.
pub(crate) fn so3_corr_backward_acc<T: Real>(
    g: &[C<T>],
    f: &[C<T>],
    h: &[C<T>],
    b: usize,
    mut gf: Option<&mut [C<T>]>,
    mut gh: Option<&mut [C<T>]>,
) {
    for l in 0..b {
        let o = so3_offset(l);
        let d = 2 * l + 1;
        let (gb, fb, hb) = (&g[o..o + d * d], &f[o..o + d * d], &h[o..o + d * d]);
        if let Some(gf) = gf.as_deref_mut() {
            let out = &mut gf[o..o + d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut acc = czero::<T>();
                    for k in 0..d {
                        acc += gb[i * d + k] * hb[k * d + j];
                    }
                    out[i * d + j] += acc;
                }
            }
        }
        if let Some(gh) = gh.as_deref_mut() {
            let out = &mut gh[o..o + d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut acc = czero::<T>();
                    for k in 0..d {
                        acc += gb[k * d + i].conj() * fb[k * d + j];
                    }
                    out[i * d + j] += acc;
                }
            }
        }
    }
}

fn check_channels(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(dim_err(format!("channel mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Spectrum of `h ⋆ f` on SO(3), bandwidth `min(b_f, b_h, b_out)`, summed over channels.
pub fn s2_correlate_spectra<T: Real>(f: &S2Spectrum<T>, h: &S2Spectrum<T>, b_out: usize) -> Result<SO3Spectrum<T>> {
    check_channels(f.channels(), h.channels())?;
    let b = f.bandwidth().min(h.bandwidth()).min(b_out);
    if b == 0 {
        return Err(dim_err("correlation bandwidth must be positive"));
    }
    let mut out = SO3Spectrum::zeros(1, b);
    for c in 0..f.channels() {
        s2_corr_acc(f.channel(c), h.channel(c), b, out.channel_mut(0));
    }
    Ok(out)
}

/// `h ⋆ f` for S² signals, sampled on the SO(3) grid of bandwidth `b_out`.
pub fn s2_correlate<T: Real>(f: &S2Signal<T>, h: &S2Signal<T>, b_out: usize) -> Result<SO3Signal<T>> {
    let b = f.bandwidth().min(h.bandwidth()).min(b_out);
    if b == 0 {
        return Err(dim_err("correlation bandwidth must be positive"));
    }
    let fs = s2_analyze_to(f, b)?;
    let hs = s2_analyze_to(h, b)?;
    so3_synthesize_unchecked(&s2_correlate_spectra(&fs, &hs, b)?, b_out)
}

pub fn so3_correlate_spectra<T: Real>(f: &SO3Spectrum<T>, h: &SO3Spectrum<T>, b_out: usize) -> Result<SO3Spectrum<T>> {
    check_channels(f.channels(), h.channels())?;
    let b = f.bandwidth().min(h.bandwidth()).min(b_out);
    if b == 0 {
        return Err(dim_err("correlation bandwidth must be positive"));
    }
    let mut out = SO3Spectrum::zeros(1, b);
    for c in 0..f.channels() {
        so3_corr_acc(f.channel(c), h.channel(c), b, out.channel_mut(0));
    }
    Ok(out)
}

/// `h ⋆ f` for SO(3) signals, sampled on the SO(3) grid of bandwidth `b_out`.
pub fn so3_correlate<T: Real>(f: &SO3Signal<T>, h: &SO3Signal<T>, b_out: usize) -> Result<SO3Signal<T>> {
    let b = f.bandwidth().min(h.bandwidth()).min(b_out);
    if b == 0 {
        return Err(dim_err("correlation bandwidth must be positive"));
    }
    let fs = so3_analyze_to(f, b)?;
    let hs = so3_analyze_to(h, b)?;
    so3_synthesize_unchecked(&so3_correlate_spectra(&fs, &hs, b)?, b_out)
}

/// Grid index `(k_β, j_α, j_γ)` and value of the largest sample of a
/// single-channel SO(3) signal. Ties go to the first index in that order.
pub fn argmax_index<T: Real>(c: &SO3Signal<T>) -> Result<((usize, usize, usize), T)> {
    if c.channels() != 1 {
        return Err(dim_err(format!("argmax expects one channel, got {}", c.channels())));
    }
    let side = c.side();
    let data = c.channel(0);
    let mut best = 0;
    for (i, v) in data.iter().enumerate() {
        if *v > data[best] {
            best = i;
        }
    }
    let k = best / (side * side);
    let ja = (best / side) % side;
    let jg = best % side;
    Ok(((k, ja, jg), data[best]))
}

/// Rotation at the largest sample of `c` and that sample's value.
pub fn argmax_so3<T: Real>(c: &SO3Signal<T>) -> Result<(EulerZYZ, T)> {
    let ((k, ja, jg), v) = argmax_index(c)?;
    let grid = SO3Grid::<f64>::new(c.bandwidth())?;
    Ok((grid.euler(k, ja, jg), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_s2_spectrum, random_so3_spectrum};
    use crate::spectral::{rotate_s2_spectrum, rotate_so3_spectrum, s2_synthesize, so3_analyze, so3_synthesize};
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Quadrature oracle for the S² correlation: rotate `h` spectrally to
    /// every grid rotation and integrate its product with `f` on the grid.
    fn s2_brute(f: &S2Spectrum<f64>, h: &S2Spectrum<f64>) -> SO3Signal<f64> {
        let b = f.bandwidth();
        let fs = s2_synthesize(f).unwrap();
        SO3Signal::from_fn(1, b, |_, r| {
            let hr = s2_synthesize(&rotate_s2_spectrum(h, r)).unwrap();
            fs.weighted_dot(&hr)
        })
        .unwrap()
    }

    fn so3_weighted_dot(a: &SO3Signal<f64>, b: &SO3Signal<f64>) -> f64 {
        let grid = SO3Grid::<f64>::new(a.bandwidth()).unwrap();
        let side = a.side();
        let plane = side * side;
        (0..side)
            .map(|k| {
                let s: f64 = (k * plane..(k + 1) * plane).map(|i| a.data()[i] * b.data()[i]).sum();
                grid.sample_weight(k) * s
            })
            .sum()
    }

    #[test]
    fn constant_self_correlation_is_one() {
        let one = S2Signal::<f64>::constant(1, 4, 1.0);
        let c = s2_correlate(&one, &one, 4).unwrap();
        assert!(c.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let one = SO3Signal::<f64>::constant(1, 3, 2.0);
        let c = so3_correlate(&one, &one, 3).unwrap();
        assert!(c.data().iter().all(|v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn self_correlation_at_identity_is_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fs = random_s2_spectrum::<f64, _>(&mut rng, 1, 8);
        let spec = s2_correlate_spectra(&fs, &fs, 8).unwrap();
        let d = crate::harmonics::wigner_big_d_all::<f64>(8, &EulerZYZ::identity());
        let mut at_id = 0.0;
        for l in 0..8 {
            let o = so3_offset(l);
            let n = (2 * l + 1) * (2 * l + 1);
            let s: Complex<f64> = (0..n).map(|i| spec.channel(0)[o + i] * d[o + i]).sum();
            at_id += (2 * l + 1) as f64 * s.re;
        }
        assert!((at_id - fs.energy()[0]).abs() < 1e-9);
    }

    #[test]
    fn s2_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_s2_spectrum::<f64, _>(&mut rng, 1, 4);
        let h = random_s2_spectrum::<f64, _>(&mut rng, 1, 4);
        let fast = so3_synthesize(&s2_correlate_spectra(&f, &h, 4).unwrap()).unwrap();
        let slow = s2_brute(&f, &h);
        assert!(fast.max_abs_diff(&slow) < 1e-8);
    }

    #[test]
    fn so3_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = random_so3_spectrum::<f64, _>(&mut rng, 1, 3);
        let h = random_so3_spectrum::<f64, _>(&mut rng, 1, 3);
        let fast = so3_synthesize(&so3_correlate_spectra(&f, &h, 3).unwrap()).unwrap();
        let fg = so3_synthesize(&f).unwrap();
        let slow = SO3Signal::from_fn(1, 3, |_, r| {
            let hr = so3_synthesize(&rotate_so3_spectrum(&h, r)).unwrap();
            so3_weighted_dot(&fg, &hr)
        })
        .unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-8);
    }

    #[test]
    fn identity_delta_reproduces_truncated_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = random_so3_spectrum::<f64, _>(&mut rng, 1, 5);
        let mut delta = SO3Spectrum::<f64>::zeros(1, 3);
        for l in 0..3 {
            for m in -(l as i64)..=l as i64 {
                delta.set(0, l, m, m, Complex::new(1.0, 0.0));
            }
        }
        let c = so3_correlate_spectra(&f, &delta, 5).unwrap();
        assert!(c.max_abs_diff(&f.truncate(3).unwrap()) < 1e-14);
    }

    #[test]
    fn equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..5 {
            let f = random_s2_spectrum::<f64, _>(&mut rng, 2, 6);
            let h = random_s2_spectrum::<f64, _>(&mut rng, 2, 6);
            let r = EulerZYZ::random(&mut rng);
            let lhs = s2_correlate_spectra(&rotate_s2_spectrum(&f, &r), &h, 6).unwrap();
            let rhs = rotate_so3_spectrum(&s2_correlate_spectra(&f, &h, 6).unwrap(), &r);
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
            let f = random_so3_spectrum::<f64, _>(&mut rng, 2, 4);
            let h = random_so3_spectrum::<f64, _>(&mut rng, 2, 4);
            let lhs = so3_correlate_spectra(&rotate_so3_spectrum(&f, &r), &h, 4).unwrap();
            let rhs = rotate_so3_spectrum(&so3_correlate_spectra(&f, &h, 4).unwrap(), &r);
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
    }

    #[test]
    fn argmax_constant_takes_first_index() {
        let c = SO3Signal::<f64>::constant(1, 3, 0.5);
        let ((k, a, g), v) = argmax_index(&c).unwrap();
        assert_eq!((k, a, g, v), (0, 0, 0, 0.5));
    }

    #[test]
    fn argmax_recovers_planted_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let b = 10;
        let f = crate::random::random_s2_spectrum_decay::<f64, _>(&mut rng, 1, b, 1.0);
        for _ in 0..5 {
            let r = EulerZYZ::random(&mut rng);
            let g = rotate_s2_spectrum(&f, &r);
            // (f ⋆ g)(S) = ⟨S f, g⟩ peaks at S = R.
            let c = so3_synthesize(&s2_correlate_spectra(&g, &f, b).unwrap()).unwrap();
            let (est, _) = argmax_so3(&c).unwrap();
            assert!(est.distance(&r) < 2.0 * std::f64::consts::PI / b as f64);
        }
    }

    #[test]
    fn gradient_helpers_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = 4;
        let f = random_s2_spectrum::<f64, _>(&mut rng, 1, b);
        let h = random_s2_spectrum::<f64, _>(&mut rng, 1, b);
        let g = random_so3_spectrum::<f64, _>(&mut rng, 1, b);
        let df = random_s2_spectrum::<f64, _>(&mut rng, 1, b);
        let dh = random_s2_spectrum::<f64, _>(&mut rng, 1, b);
        let mut gf = S2Spectrum::<f64>::zeros(1, b);
        let mut gh = S2Spectrum::<f64>::zeros(1, b);
        s2_corr_backward_acc(
            g.channel(0),
            f.channel(0),
            h.channel(0),
            b,
            Some(gf.channel_mut(0)),
            Some(gh.channel_mut(0)),
        );
        // L(f, h) = Re <g, C(f, h)> is bilinear, so the directional derivative is exact.
        let lin = |f: &S2Spectrum<f64>, h: &S2Spectrum<f64>| g.real_dot(&s2_correlate_spectra(f, h, b).unwrap());
        let want = lin(&df, &h) + lin(&f, &dh);
        let got = gf.real_dot(&df) + gh.real_dot(&dh);
        assert!((want - got).abs() < 1e-10);

        let f = random_so3_spectrum::<f64, _>(&mut rng, 1, b);
        let h = random_so3_spectrum::<f64, _>(&mut rng, 1, b);
        let df = random_so3_spectrum::<f64, _>(&mut rng, 1, b);
        let dh = random_so3_spectrum::<f64, _>(&mut rng, 1, b);
        let mut gf = SO3Spectrum::<f64>::zeros(1, b);
        let mut gh = SO3Spectrum::<f64>::zeros(1, b);
        so3_corr_backward_acc(
            g.channel(0),
            f.channel(0),
            h.channel(0),
            b,
            Some(gf.channel_mut(0)),
            Some(gh.channel_mut(0)),
        );
        let lin = |f: &SO3Spectrum<f64>, h: &SO3Spectrum<f64>| g.real_dot(&so3_correlate_spectra(f, h, b).unwrap());
        let want = lin(&df, &h) + lin(&f, &dh);
        let got = gf.real_dot(&df) + gh.real_dot(&dh);
        assert!((want - got).abs() < 1e-10);
    }

    #[test]
    fn correlation_of_signals_matches_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let f = random_so3_spectrum::<f64, _>(&mut rng, 1, 3);
        let fg = so3_synthesize(&f).unwrap();
        let via_signals = so3_correlate(&fg, &fg, 3).unwrap();
        let back = so3_analyze(&via_signals).unwrap();
        assert!(back.max_abs_diff(&so3_correlate_spectra(&f, &f, 3).unwrap()) < 1e-10);
    }
}
