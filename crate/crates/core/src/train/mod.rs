//! Mini-batch training with Adam, deterministic gradient reduction and CSV logging.

mod adam;

pub use adam::{Adam, AdamConfig};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Variant;
use crate::error::{Error, Result};
use crate::eval::{psnr, psnr_aligned};
use crate::loss::{loss as eval_loss, LossKind};
use crate::model::{Classifier, Model};
use crate::nn::ParamSet;
use crate::scalar::Real;
use crate::spectral::S2Signal;

/// Which dataset variant is used for training and for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    NrNr,
    RR,
    NrR,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::NrNr, Regime::RR, Regime::NrR];

    pub fn train_variant(self) -> Variant {
        match self {
            Self::NrNr | Self::NrR => Variant::Nr,
            Self::RR => Variant::R,
        }
    }

    pub fn test_variant(self) -> Variant {
        match self {
            Self::NrNr => Variant::Nr,
            Self::RR | Self::NrR => Variant::R,
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('/', "").as_str() {
            "nrnr" => Ok(Self::NrNr),
            "rr" => Ok(Self::RR),
            "nrr" => Ok(Self::NrR),
            other => Err(Error::InvalidConfig(format!("unknown regime `{other}`"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NrNr => "nrnr",
            Self::RR => "rr",
            Self::NrR => "nrr",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub loss: LossKind,
    /// SO(3) grid bandwidth of the max in the rotation-invariant loss.
    pub b_corr: usize,
    /// Global gradient-norm clip; off when `None`.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            loss: LossKind::RotInv,
            b_corr: 16,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.b_corr == 0 {
            return Err(Error::InvalidConfig("epochs, batch size and b_corr must be positive".into()));
        }
        if self.clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::InvalidConfig("clip must be positive".into()));
        }
        self.adam.validate()
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub split: &'static str,
    pub loss: f64,
    pub psnr: Option<f64>,
}

impl LogRow {
    pub const HEADER: &'static str = "epoch,step,split,loss,psnr";

    pub fn csv(&self) -> String {
        let p = self.psnr.map_or(String::new(), |v| format!("{v:.6}"));
        format!("{},{},{},{:.10e},{}", self.epoch, self.step, self.split, self.loss, p)
    }
}

/// Writes [`LogRow`]s as CSV with the standard header.
pub struct CsvLog<W: Write> {
    out: W,
}

impl<W: Write> CsvLog<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{}", LogRow::HEADER)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &LogRow) -> Result<()> {
        writeln!(self.out, "{}", row.csv())?;
        Ok(self.out.flush()?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

fn norms_string<T: Real, P: ParamSet<T>>(p: &P) -> String {
    p.tensor_norms().iter().map(|n| format!("{:.3e}", n.as_f64())).collect::<Vec<_>>().join(" ")
}

/// Generic mini-batch loop.
///
/// `sample_grad(params, i, grads)` returns the loss of sample `i` and adds its
/// gradient to `grads`. Samples of a batch are evaluated in parallel, each
/// into its own zeroed accumulator; the accumulators are then summed in
/// sample order, so results do not depend on the thread count. The epoch
/// permutation comes from stream `epoch` of a ChaCha8 generator seeded with
/// `cfg.seed`, which makes resumed runs shuffle identically.
pub fn fit<T, P, F>(
    params: &mut P,
    adam: &mut Adam<T>,
    n: usize,
    cfg: &TrainConfig,
    sample_grad: F,
    mut on_epoch: impl FnMut(usize, &P, f64, u64) -> Result<()>,
) -> Result<TrainReport>
where
    T: Real,
    P: ParamSet<T> + Clone + Send + Sync,
    F: Fn(&P, usize, &mut P) -> Result<T> + Sync,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut zero = params.clone();
    zero.zero();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let p: &P = params;
            let parts: Vec<(T, P)> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = zero.clone();
                    sample_grad(p, i, &mut g).map(|l| (l, g))
                })
                .collect::<Result<_>>()?;
            let mut grads = zero.clone();
            let mut loss = 0.0;
            for (l, g) in &parts {
                loss += l.as_f64();
                grads.accumulate(g);
            }
            loss /= batch.len() as f64;
            if !loss.is_finite() || grads.flatten().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, norms: norms_string(params) });
            }
            grads.scale_params(T::lit(1.0 / batch.len() as f64));
            if let Some(c) = cfg.clip {
                let norm = grads.flatten().iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
                if norm > c {
                    grads.scale_params(T::lit(c / norm));
                }
            }
            adam.step(params, &grads)?;
            report.step_losses.push(loss);
            epoch_sum += loss * batch.len() as f64;
        }
        let mean = epoch_sum / n as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, params, mean, adam.t)?;
    }
    Ok(report)
}

/// Mean loss and mean PSNR of `model` on `data`.
///
/// PSNR is aligned by the rotation-invariant loss's rotation when
/// `aligned`, and computed directly otherwise.
pub fn evaluate_autoencoder<T: Real>(
    model: &Model<T>,
    data: &[S2Signal<T>],
    kind: LossKind,
    b_corr: usize,
    aligned: bool,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per: Vec<(f64, f64)> = data
        .par_iter()
        .map(|f| {
            let rec = model.reconstruct(f)?;
            let l = eval_loss(kind, f, &rec, b_corr)?.loss.as_f64();
            let p = if aligned { psnr_aligned(f, &rec, b_corr)?.0 } else { psnr(f, &rec)? };
            Ok((l, p))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok((per.iter().map(|v| v.0).sum::<f64>() / n, per.iter().map(|v| v.1).sum::<f64>() / n))
}

/// Trains the autoencoder; after each epoch logs the training loss and,
/// when `val` is given, the validation loss and PSNR.
pub fn train_autoencoder<T: Real>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    train: &[S2Signal<T>],
    val: Option<&[S2Signal<T>]>,
    cfg: &TrainConfig,
    mut log: impl FnMut(&LogRow) -> Result<()>,
) -> Result<TrainReport> {
    let (kind, b_corr) = (cfg.loss, cfg.b_corr);
    fit(
        model,
        adam,
        train.len(),
        cfg,
        |m, i, g| Ok(m.forward_loss(&train[i], kind, b_corr, g)?.loss.loss),
        |epoch, m, loss, step| {
            log(&LogRow { epoch, step, split: "train", loss, psnr: None })?;
            if let Some(v) = val {
                let (l, p) = evaluate_autoencoder(m, v, kind, b_corr, kind == LossKind::RotInv)?;
                log(&LogRow { epoch, step, split: "val", loss: l, psnr: Some(p) })?;
            }
            Ok(())
        },
    )
}

/// Cross-entropy training of the supervised baseline.
pub fn train_classifier<T: Real>(
    model: &mut Classifier<T>,
    adam: &mut Adam<T>,
    data: &[S2Signal<T>],
    labels: &[usize],
    cfg: &TrainConfig,
    mut log: impl FnMut(&LogRow) -> Result<()>,
) -> Result<TrainReport> {
    if data.len() != labels.len() {
        return Err(crate::error::dim_err("samples and labels differ in length"));
    }
    fit(
        model,
        adam,
        data.len(),
        cfg,
        |m, i, g| m.forward_loss(&data[i], labels[i], g),
        |epoch, _, loss, step| log(&LogRow { epoch, step, split: "train", loss, psnr: None }),
    )
}

/// Classification accuracy of the supervised baseline.
pub fn classifier_accuracy<T: Real>(model: &Classifier<T>, data: &[S2Signal<T>], labels: &[usize]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits: Vec<bool> =
        data.par_iter().zip(labels).map(|(f, &l)| Ok(model.predict(f)? == l)).collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}
