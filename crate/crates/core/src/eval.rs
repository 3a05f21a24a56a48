//! Reconstruction quality, clustering and classification metrics.
//!
//! Feature-space routines work on `f64` rows; embeddings are small and the
//! metrics are not on any hot path.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};
use crate::loss::rotinv_loss;
use crate::nn::{softmax_cross_entropy, Dense, ParamSet};
use crate::rotation::EulerZYZ;
use crate::scalar::Real;
use crate::spectral::{rotate_s2, S2Signal};
use crate::train::{Adam, AdamConfig};

/// PSNR cap for (near-)perfect reconstructions.
pub const PSNR_CAP: f64 = 99.0;

/// `10 log₁₀(1 / MSE)` with the unweighted mean over grid samples, capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(f: &S2Signal<T>, f_hat: &S2Signal<T>) -> Result<f64> {
    if !f.same_shape(f_hat) {
        return Err(dim_err("psnr inputs differ in shape"));
    }
    let n = f.data().len() as f64;
    let mse: f64 = f.data().iter().zip(f_hat.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum::<f64>() / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// PSNR after rotating `f̂` by the loss module's aligning rotation.
///
/// Returns the PSNR and the rotation applied to `f̂`.
pub fn psnr_aligned<T: Real>(f: &S2Signal<T>, f_hat: &S2Signal<T>, b_corr: usize) -> Result<(f64, EulerZYZ)> {
    let rot = rotinv_loss(f, f_hat, b_corr)?.rotation;
    Ok((psnr(f, &rotate_s2(f_hat, &rot)?)?, rot))
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != d) {
        return Err(dim_err("feature rows have different lengths"));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITERS: usize = 300;

fn kmeans_once(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = x.len();
    // k-means++ seeding.
    let mut centroids = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        };
        centroids.push(x[pick].clone());
        let c = centroids.last().unwrap();
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, c));
        }
    }

    let dim = x[0].len();
    let mut assign = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(j, c)| (j, sq_dist(p, c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if assign[i] != best {
                changed = true;
                assign[i] = best;
            }
            inertia += d;
        }
        history.push(inertia);
        if !changed && history.len() > 1 {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in x.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let inertia = *history.last().unwrap();
    KMeansResult { assignments: assign, centroids, inertia, history }
}

/// Lloyd's algorithm with k-means++ seeding; the best of [`KMEANS_RESTARTS`] runs.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    check_rows(x)?;
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > x.len() {
        return Err(Error::InvalidConfig(format!("k = {k} with {} points", x.len())));
    }
    let runs: Vec<KMeansResult> = (0..KMEANS_RESTARTS as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            kmeans_once(x, k, &mut rng)
        })
        .collect();
    Ok(runs.into_iter().reduce(|a, b| if b.inertia < a.inertia { b } else { a }).unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMetrics {
    pub purity: f64,
    pub homogeneity: f64,
    pub completeness: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

pub fn clustering_metrics(assignments: &[usize], labels: &[usize]) -> Result<ClusterMetrics> {
    if assignments.len() != labels.len() {
        return Err(dim_err(format!("{} assignments for {} labels", assignments.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = assignments.iter().max().unwrap() + 1;
    let c = labels.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; c]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1;
    }
    let n = labels.len() as f64;
    let purity = table.iter().map(|row| *row.iter().max().unwrap()).sum::<usize>() as f64 / n;
    let class_counts: Vec<usize> = (0..c).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let cluster_counts: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let h_class = entropy(class_counts.iter().copied(), n);
    let h_cluster = entropy(cluster_counts.iter().copied(), n);
    // H(class | cluster) and H(cluster | class).
    let mut h_class_given = 0.0;
    let mut h_cluster_given = 0.0;
    for (a, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let p = nij as f64 / n;
            h_class_given -= p * (nij as f64 / cluster_counts[a] as f64).ln();
            h_cluster_given -= p * (nij as f64 / class_counts[j] as f64).ln();
        }
    }
    let ratio = |num: f64, den: f64| if den <= 0.0 { 1.0 } else { 1.0 - num / den };
    Ok(ClusterMetrics {
        purity,
        homogeneity: ratio(h_class_given, h_class),
        completeness: ratio(h_cluster_given, h_cluster),
    })
}

/// Full-batch Adam iterations used by [`linear_probe`].
pub const PROBE_ITERS: usize = 500;
const PROBE_LR: f64 = 0.05;
const PROBE_L2: f64 = 1e-4;

/// Per-feature mean and standard deviation of the training rows.
fn standardizer(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Softmax regression on standardized features, trained full-batch from zero
/// weights; returns the fitted layer and the standardization.
pub struct Probe {
    pub layer: Dense<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Probe {
    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let l = self.layer.forward(&self.transform(x))?;
        Ok(l.iter().enumerate().fold(0, |b, (i, v)| if *v > l[b] { i } else { b }))
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(dim_err("features and labels differ in length"));
        }
        if x.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut hits = 0;
        for (r, &l) in x.iter().zip(y) {
            hits += usize::from(self.predict(r)? == l);
        }
        Ok(hits as f64 / x.len() as f64)
    }
}

pub fn fit_probe(x: &[Vec<f64>], y: &[usize], classes: usize) -> Result<Probe> {
    let d = check_rows(x)?;
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(dim_err("features and labels differ in length"));
    }
    let (mean, std) = standardizer(x);
    let mut probe = Probe { layer: Dense::new(d, classes)?, mean, std };
    let xs: Vec<Vec<f64>> = x.iter().map(|r| probe.transform(r)).collect();
    let mut adam = Adam::new(AdamConfig { lr: PROBE_LR, ..AdamConfig::default() }, &probe.layer);
    let inv_n = 1.0 / x.len() as f64;
    for _ in 0..PROBE_ITERS {
        let mut g = probe.layer.clone();
        g.zero();
        for (r, &l) in xs.iter().zip(y) {
            let logits = probe.layer.forward(r)?;
            let (_, gl) = softmax_cross_entropy(&logits, l)?;
            probe.layer.backward(r, &gl, &mut g)?;
        }
        g.scale_params(inv_n);
        g.weight.iter_mut().zip(&probe.layer.weight).for_each(|(gw, w)| *gw += 2.0 * PROBE_L2 * w);
        adam.step(&mut probe.layer, &g)?;
    }
    Ok(probe)
}

/// Test accuracy of a softmax probe trained on frozen features.
pub fn linear_probe(train_x: &[Vec<f64>], train_y: &[usize], test_x: &[Vec<f64>], test_y: &[usize]) -> Result<f64> {
    let classes = train_y.iter().chain(test_y).max().map_or(1, |m| m + 1);
    fit_probe(train_x, train_y, classes)?.accuracy(test_x, test_y)
}

/// Label fractions (percent) of the few-shot protocol.
pub const FEW_SHOT_PERCENTS: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 100.0];

/// Stratified subsample: `round(frac · n_c)` indices per class, at least one.
pub fn stratified_subset(labels: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let take = ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len());
        out.extend_from_slice(&idx[..take]);
    }
    out.sort_unstable();
    out
}

/// Probe accuracy for each label fraction (in percent) of the training set.
pub fn few_shot_eval(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    percents: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    percents
        .iter()
        .map(|&p| {
            let idx = stratified_subset(train_y, p / 100.0, seed);
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| train_x[i].clone()).collect();
            let y: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let classes = train_y.iter().chain(test_y).max().map_or(1, |m| m + 1);
            Ok((p, fit_probe(&x, &y, classes)?.accuracy(test_x, test_y)?))
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Mean fraction of the `k` cosine-nearest gallery items sharing the query's label.
pub fn nn_retrieval(
    queries: &[Vec<f64>],
    query_labels: &[usize],
    gallery: &[Vec<f64>],
    gallery_labels: &[usize],
    k: usize,
) -> Result<f64> {
    if queries.len() != query_labels.len() || gallery.len() != gallery_labels.len() {
        return Err(dim_err("features and labels differ in length"));
    }
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > gallery.len() {
        return Err(Error::InvalidConfig(format!("k = {k} with {} gallery items", gallery.len())));
    }
    let per: Vec<f64> = queries
        .par_iter()
        .zip(query_labels)
        .map(|(q, &l)| {
            let mut sims: Vec<(f64, usize)> = gallery.iter().enumerate().map(|(i, g)| (cosine(q, g), i)).collect();
            // Stable order: higher similarity first, then lower index.
            sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            sims[..k].iter().filter(|(_, i)| gallery_labels[*i] == l).count() as f64 / k as f64
        })
        .collect();
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_s2_spectrum_decay;
    use crate::spectral::s2_synthesize;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn psnr_examples() {
        let f = S2Signal::<f64>::constant(1, 4, 0.5);
        assert_eq!(psnr(&f, &f).unwrap(), PSNR_CAP);
        let g = S2Signal::<f64>::constant(1, 4, 0.6);
        assert!((psnr(&f, &g).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn aligned_psnr_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = 16;
        let spec = random_s2_spectrum_decay::<f64, _>(&mut rng, 1, b, 3.0);
        let f = s2_synthesize(&spec).unwrap();
        let r = EulerZYZ::random(&mut rng);
        let g = rotate_s2(&f, &r).unwrap();
        let (aligned, _) = psnr_aligned(&f, &g, 2 * b).unwrap();
        let plain = psnr(&f, &g).unwrap();
        assert!(aligned > plain);
        assert!(aligned > 30.0, "{aligned}");
    }

    #[test]
    fn kmeans_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Normal::new(0.0, 0.1).unwrap();
        let mut x = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { 0.0 } else { 5.0 };
            x.push(vec![c + n.sample(&mut rng), c + n.sample(&mut rng)]);
            truth.push(i % 2);
        }
        let one = kmeans(&x, 1, 0).unwrap();
        assert!(one.assignments.iter().all(|&a| a == 0));
        let two = kmeans(&x, 2, 0).unwrap();
        let m = clustering_metrics(&two.assignments, &truth).unwrap();
        assert_eq!(m.purity, 1.0);
        assert!((m.homogeneity - 1.0).abs() < 1e-12 && (m.completeness - 1.0).abs() < 1e-12);
        for w in two.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert_eq!(kmeans(&x, 2, 0).unwrap(), two);
    }

    #[test]
    fn clustering_metric_examples() {
        let m = clustering_metrics(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!((m.purity, m.homogeneity, m.completeness), (1.0, 1.0, 1.0));
        let m = clustering_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!(m.completeness, 1.0);
        assert_eq!(m.homogeneity, 0.0);
        assert_eq!(m.purity, 0.5);
        // Clusters {0,0,1} and {1,1,0}: purity 4/6; both conditional entropies are
        // H(1/3, 2/3) and both marginals are ln 2, so homogeneity = completeness
        // = 1 − H(1/3)/ln 2.
        let m = clustering_metrics(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 0]).unwrap();
        let h = -(1.0f64 / 3.0) * (1.0f64 / 3.0).ln() - (2.0f64 / 3.0) * (2.0f64 / 3.0).ln();
        let want = 1.0 - h / 2f64.ln();
        assert!((m.purity - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.homogeneity - want).abs() < 1e-12);
        assert!((m.completeness - want).abs() < 1e-12);
        assert!(clustering_metrics(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn probe_examples() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        assert_eq!(linear_probe(&x, &y, &x, &y).unwrap(), 1.0);
        let perm: Vec<Vec<f64>> = x.iter().map(|r| vec![r[1], r[0]]).collect();
        assert_eq!(linear_probe(&perm, &y, &perm, &y).unwrap(), 1.0);
    }

    #[test]
    fn few_shot_keeps_every_class() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let s = stratified_subset(&labels, 0.01, 3);
        assert_eq!(s.len(), 5);
        let full = stratified_subset(&labels, 1.0, 3);
        assert_eq!(full, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn retrieval_examples() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| (0..3).map(|j| f64::from(u8::from(j == i % 3))).collect()).collect();
        let y: Vec<usize> = (0..6).map(|i| i % 3).collect();
        assert_eq!(nn_retrieval(&x, &y, &x, &y, 1).unwrap(), 1.0);
        assert_eq!(nn_retrieval(&x, &y, &x, &y, 2).unwrap(), 1.0);
    }
}
