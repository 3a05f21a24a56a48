//! Reconstruction losses on S² signals.
//!
//! Norms are quadrature-weighted. The rotation-invariant loss
//!
//! ```text
//! L(f, f̂) = ‖f‖² + ‖f̂‖² − 2 max_R ⟨R f̂, f⟩
//! ```
//!
//! takes the max over the SO(3) grid of bandwidth `b_corr` and then evaluates
//! `⟨A f̂, f⟩` exactly (spectrally) at the winning grid rotation `A`. For a
//! band-limited `f̂` this equals `‖f − A f̂‖²`, so the loss is nonnegative up
//! to rounding. The gradient holds `A` fixed.

use crate::corr::{argmax_so3, s2_correlate_spectra};
use crate::error::{dim_err, Error, Result};
use crate::rotation::EulerZYZ;
use crate::scalar::Real;
use crate::spectral::{rotate_s2_spectrum, s2_analyze, s2_analyze_adjoint, so3_synthesize_unchecked, S2Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    L2,
    RotInv,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "rotinv" => Ok(Self::RotInv),
            other => Err(Error::InvalidConfig(format!("unknown loss kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::L2 => "l2",
            Self::RotInv => "rotinv",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Gradient with respect to the grid samples of `f̂`.
    pub grad: S2Signal<T>,
    /// Rotation applied to `f̂` to align it with `f` (identity for L2).
    pub rotation: EulerZYZ,
}

fn check_pair<T: Real>(f: &S2Signal<T>, f_hat: &S2Signal<T>) -> Result<()> {
    if !f.same_shape(f_hat) {
        return Err(dim_err(format!(
            "loss inputs differ: {}ch b={} vs {}ch b={}",
            f.channels(),
            f.bandwidth(),
            f_hat.channels(),
            f_hat.bandwidth()
        )));
    }
    Ok(())
}

/// Multiplies each sample by its quadrature weight.
fn weighted<T: Real>(f: &S2Signal<T>, scale: T) -> S2Signal<T> {
    let grid = crate::spectral::S2Transform::<T>::shared(f.bandwidth()).expect("valid bandwidth");
    let side = f.side();
    let mut out = f.clone();
    for c in 0..f.channels() {
        let ch = out.channel_mut(c);
        for k in 0..side {
            let w = grid.grid.sample_weight(k) * scale;
            ch[k * side..(k + 1) * side].iter_mut().for_each(|v| *v *= w);
        }
    }
    out
}

/// `∫ |f − f̂|²`, summed over channels.
pub fn l2_loss<T: Real>(f: &S2Signal<T>, f_hat: &S2Signal<T>) -> Result<LossOutput<T>> {
    check_pair(f, f_hat)?;
    let mut diff = f_hat.clone();
    diff.data_mut().iter_mut().zip(f.data()).for_each(|(a, b)| *a -= *b);
    let loss = diff.weighted_dot(&diff);
    Ok(LossOutput { loss, grad: weighted(&diff, T::lit(2.0)), rotation: EulerZYZ::identity() })
}

/// Rotation-invariant loss with the max over the SO(3) grid of bandwidth `b_corr`.
pub fn rotinv_loss<T: Real>(f: &S2Signal<T>, f_hat: &S2Signal<T>, b_corr: usize) -> Result<LossOutput<T>> {
    check_pair(f, f_hat)?;
    if b_corr == 0 {
        return Err(Error::InvalidBandwidth(0));
    }
    let b = f.bandwidth();
    let fs = s2_analyze(f)?;
    let gs = s2_analyze(f_hat)?;
    let b_spec = b.min(b_corr);
    // c(S) = ∫ f(x) f̂(S⁻¹x) dx = ⟨S f̂, f⟩.
    let corr_spec = s2_correlate_spectra(&fs.truncate(b_spec)?, &gs.truncate(b_spec)?, b_spec)?;
    let corr = so3_synthesize_unchecked(&corr_spec, b_corr)?;
    let (rotation, _) = argmax_so3(&corr)?;

    let aligned = fs.real_dot(&rotate_s2_spectrum(&gs, &rotation));
    let norm_f: T = f.weighted_dot(f);
    let norm_g: T = f_hat.weighted_dot(f_hat);
    let two = T::lit(2.0);
    let loss = norm_f + norm_g - two * aligned;

    // ∂⟨A f̂, f⟩/∂f̂ = analysisᵀ(D(A)† F), the band-limited f rotated by A⁻¹.
    let back = rotate_s2_spectrum(&fs, &rotation.inverse());
    let mut grad = weighted(f_hat, two);
    let pull = s2_analyze_adjoint(&back, b)?;
    grad.data_mut().iter_mut().zip(pull.data()).for_each(|(g, p)| *g -= two * *p);
    Ok(LossOutput { loss, grad, rotation })
}

/// Dispatches on [`LossKind`]; `b_corr` is ignored for L2.
pub fn loss<T: Real>(kind: LossKind, f: &S2Signal<T>, f_hat: &S2Signal<T>, b_corr: usize) -> Result<LossOutput<T>> {
    match kind {
        LossKind::L2 => l2_loss(f, f_hat),
        LossKind::RotInv => rotinv_loss(f, f_hat, b_corr),
    }
}
