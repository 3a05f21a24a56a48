//! Built-in invariant checks. Each check reports its worst observed error
//! against a fixed tolerance.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sphae::corr::{argmax_so3, s2_correlate_spectra, so3_correlate_spectra};
use sphae::loss::{rotinv_loss, LossKind};
use sphae::model::{Checkpoint, Model, ModelConfig, Stage};
use sphae::nn::{ParamSet, S2Conv, SO3Conv};
use sphae::random::{random_s2_spectrum, random_s2_spectrum_decay, random_so3_spectrum};
use sphae::spectral::{
    rotate_s2, rotate_s2_spectrum, rotate_so3_spectrum, s2_analyze, s2_synthesize, so3_analyze, so3_synthesize,
};
use sphae::{EulerZYZ, Result, S2Signal, SO3Signal};

use crate::{CliError, CliResult, Level, EXIT_SELFTEST};

struct Check {
    name: &'static str,
    tol: f64,
    run: fn(&mut ChaCha8Rng, bool) -> Result<f64>,
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(f64::MIN_POSITIVE)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn bandwidths(full: bool) -> &'static [usize] {
    if full {
        &[2, 4, 8, 16, 32]
    } else {
        &[2, 4, 8]
    }
}

fn s2_round_trip(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &b in bandwidths(full) {
        let f = s2_synthesize(&random_s2_spectrum::<f64, _>(rng, 1, b))?;
        let g = s2_synthesize(&s2_analyze(&f)?)?;
        worst = worst.max(rel(f.max_abs_diff(&g), max_abs(f.data())));
    }
    Ok(worst)
}

fn so3_round_trip(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &b in bandwidths(full).iter().filter(|&&b| full || b <= 4) {
        let f = so3_synthesize(&random_so3_spectrum::<f64, _>(rng, 1, b))?;
        let g = so3_synthesize(&so3_analyze(&f)?)?;
        worst = worst.max(rel(f.max_abs_diff(&g), max_abs(f.data())));
    }
    Ok(worst)
}

fn parseval(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &b in bandwidths(full).iter().filter(|&&b| b <= 16) {
        let s = random_s2_spectrum::<f64, _>(rng, 1, b);
        let grid = s2_synthesize(&s)?.norm_sq()[0];
        worst = worst.max(rel((grid - s.energy()[0]).abs(), grid));
        if b <= 8 || full {
            let s = random_so3_spectrum::<f64, _>(rng, 1, b);
            let grid = so3_synthesize(&s)?.norm_sq()[0];
            worst = worst.max(rel((grid - s.energy()[0]).abs(), grid));
        }
    }
    Ok(worst)
}

/// Compares the spectral S² correlation with direct pointwise evaluation of
/// `h(R⁻¹x)` integrated against `f` on the grid.
fn s2_correlation_oracle(rng: &mut ChaCha8Rng, _full: bool) -> Result<f64> {
    let b = 3;
    let f = random_s2_spectrum::<f64, _>(rng, 1, b);
    let h = random_s2_spectrum::<f64, _>(rng, 1, b);
    let fast = so3_synthesize(&s2_correlate_spectra(&f, &h, b)?)?;
    let fs = s2_synthesize(&f)?;
    let slow = SO3Signal::from_fn(1, b, |_, r| {
        let inv = r.inverse();
        let hr = S2Signal::from_fn(1, b, |_, alpha, beta| {
            let x = [beta.sin() * alpha.cos(), beta.sin() * alpha.sin(), beta.cos()];
            let (a2, b2) = sphae::rotation::to_spherical(inv.apply(x));
            h.evaluate(0, a2, b2)
        })
        .expect("valid bandwidth");
        fs.weighted_dot(&hr)
    })?;
    Ok(fast.max_abs_diff(&slow))
}

fn so3_correlation_oracle(rng: &mut ChaCha8Rng, _full: bool) -> Result<f64> {
    let b = 2;
    let f = random_so3_spectrum::<f64, _>(rng, 1, b);
    let h = random_so3_spectrum::<f64, _>(rng, 1, b);
    let fast = so3_synthesize(&so3_correlate_spectra(&f, &h, b)?)?;
    let fg = so3_synthesize(&f)?;
    let grid = sphae::sgrid::SO3Grid::<f64>::new(b)?;
    let slow = SO3Signal::from_fn(1, b, |_, r| {
        let hr = so3_synthesize(&rotate_so3_spectrum(&h, r)).expect("valid bandwidth");
        let side = fg.side();
        let plane = side * side;
        (0..side)
            .map(|k| {
                grid.sample_weight(k) * (k * plane..(k + 1) * plane).map(|i| fg.data()[i] * hr.data()[i]).sum::<f64>()
            })
            .sum()
    })?;
    Ok(fast.max_abs_diff(&slow))
}

fn trials(full: bool, fast: usize, slow: usize) -> usize {
    if full {
        slow
    } else {
        fast
    }
}

fn conv_equivariance(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let b = 8;
    let mut s2 = S2Conv::<f64>::new(2, 3, b, b)?;
    s2.init(rng);
    let mut so3 = SO3Conv::<f64>::new(2, 2, b, b)?;
    so3.init(rng);
    let mut worst: f64 = 0.0;
    for _ in 0..trials(full, 5, 100) {
        let r = EulerZYZ::random(rng);
        let f = random_s2_spectrum::<f64, _>(rng, 2, b);
        let lhs = s2.forward_spectrum(&rotate_s2_spectrum(&f, &r))?;
        let rhs = rotate_so3_spectrum(&s2.forward_spectrum(&f)?, &r);
        worst = worst.max(rel(lhs.max_abs_diff(&rhs), rhs.max_abs()));
        let g = random_so3_spectrum::<f64, _>(rng, 2, b);
        let lhs = so3.forward_spectrum(&rotate_so3_spectrum(&g, &r))?;
        let rhs = rotate_so3_spectrum(&so3.forward_spectrum(&g)?, &r);
        worst = worst.max(rel(lhs.max_abs_diff(&rhs), rhs.max_abs()));
    }
    Ok(worst)
}

fn linear_latent_invariance(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let cfg = ModelConfig {
        input_bandwidth: 6,
        encoder: vec![Stage::new(3, 6), Stage::new(4, 6)],
        decoder: vec![Stage::new(2, 3), Stage::new(1, 6)],
        relu: false,
        ..ModelConfig::toy()
    };
    let m = Model::<f64>::new(&cfg, rng)?;
    let f = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(rng, 1, 6, 0.5))?;
    let z = m.encode(&f)?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials(full, 10, 100) {
        let zr = m.encode(&rotate_s2(&f, &EulerZYZ::random(rng))?)?;
        let d = z.iter().zip(&zr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(rel(d, max_abs(&z)));
    }
    Ok(worst)
}

fn gradient_check(rng: &mut ChaCha8Rng, _full: bool) -> Result<f64> {
    let m = Model::<f64>::new(&ModelConfig::toy(), rng)?;
    let f = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(rng, 1, 4, 1.0))?;
    let mut worst: f64 = 0.0;
    for kind in [LossKind::L2, LossKind::RotInv] {
        let mut grads = m.zeros_like();
        m.forward_loss(&f, kind, 4, &mut grads)?;
        let analytic = grads.flatten();
        let n = analytic.len();
        let h = 1e-5;
        for idx in (0..n).step_by((n / 40).max(1)) {
            let eval = |delta: f64| -> Result<f64> {
                let mut q = m.clone();
                let mut seen = 0;
                for t in q.tensors_mut() {
                    if idx < seen + t.len() {
                        t[idx - seen] += delta;
                        break;
                    }
                    seen += t.len();
                }
                let mut g = m.zeros_like();
                Ok(q.forward_loss(&f, kind, 4, &mut g)?.loss.loss)
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let a = analytic[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    Ok(worst)
}

fn loss_invariance(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let b = if full { 16 } else { 8 };
    let mut worst: f64 = 0.0;
    for _ in 0..trials(full, 3, 50) {
        let f = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(rng, 1, b, 1.0))?;
        let g = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(rng, 1, b, 1.0))?;
        let base = rotinv_loss(&f, &g, b)?.loss;
        let moved =
            rotinv_loss(&rotate_s2(&f, &EulerZYZ::random(rng))?, &rotate_s2(&g, &EulerZYZ::random(rng))?, b)?.loss;
        worst = worst.max(rel((base - moved).abs(), f.norm_sq()[0]));
    }
    Ok(worst)
}

/// Fraction of planted rotations not recovered within one grid cell.
fn argmax_recovery(rng: &mut ChaCha8Rng, full: bool) -> Result<f64> {
    let b = if full { 16 } else { 8 };
    let n = trials(full, 5, 50);
    let mut misses = 0;
    for _ in 0..n {
        let f = random_s2_spectrum_decay::<f64, _>(rng, 1, b, 1.0);
        let r = EulerZYZ::random(rng);
        let c = so3_synthesize(&s2_correlate_spectra(&rotate_s2_spectrum(&f, &r), &f, b)?)?;
        let (est, _) = argmax_so3(&c)?;
        if est.distance(&r) > 2.0 * std::f64::consts::PI / b as f64 {
            misses += 1;
        }
    }
    Ok(misses as f64 / n as f64)
}

fn checkpoint_round_trip(rng: &mut ChaCha8Rng, _full: bool) -> Result<f64> {
    let m = Model::<f64>::new(&ModelConfig::toy(), rng)?;
    let back: Model<f64> = Checkpoint::from_bytes(&Checkpoint::from_model(&m, 1).to_bytes())?.to_model()?;
    let same = m.flatten().iter().zip(back.flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok(if same { 0.0 } else { 1.0 })
}

const CHECKS: &[Check] = &[
    Check { name: "s2 transform round trip", tol: 1e-10, run: s2_round_trip },
    Check { name: "so3 transform round trip", tol: 1e-10, run: so3_round_trip },
    Check { name: "parseval identity", tol: 1e-9, run: parseval },
    Check { name: "s2 correlation vs quadrature", tol: 1e-8, run: s2_correlation_oracle },
    Check { name: "so3 correlation vs quadrature", tol: 1e-8, run: so3_correlation_oracle },
    Check { name: "convolution equivariance", tol: 1e-9, run: conv_equivariance },
    Check { name: "linear latent invariance", tol: 1e-10, run: linear_latent_invariance },
    Check { name: "gradient check", tol: 1e-4, run: gradient_check },
    Check { name: "rotinv loss invariance (grid-quantized)", tol: 1e-1, run: loss_invariance },
    Check { name: "argmax alignment misses", tol: 0.0, run: argmax_recovery },
    Check { name: "checkpoint round trip", tol: 0.0, run: checkpoint_round_trip },
];

pub fn run(level: Level) -> CliResult<()> {
    let full = level == Level::Full;
    let mut failed = Vec::new();
    println!("check,value,tolerance,status,seconds");
    for (i, c) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let t = Instant::now();
        let (value, ok) = match (c.run)(&mut rng, full) {
            Ok(v) => (format!("{v:.3e}"), v <= c.tol),
            Err(e) => (format!("error: {e}"), false),
        };
        let status = if ok { "pass" } else { "FAIL" };
        println!("{},{value},{:.0e},{status},{:.2}", c.name, c.tol, t.elapsed().as_secs_f64());
        if !ok {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(EXIT_SELFTEST, format!("failed checks: {}", failed.join(", "))))
    }
}
