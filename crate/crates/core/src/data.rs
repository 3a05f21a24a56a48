//! Spherical MNIST construction, synthetic datasets and the dataset file format.
//!
//! Dataset file (all integers and floats little-endian):
//!
//! ```text
//! u32      magic 0x53504453
//! u32      format version
//! u64      sample count N
//! u32      bandwidth b
//! u8       variant (0 = NR, 1 = R)
//! u64      generation seed
//! N × u32  labels
//! N × 3 f64  applied rotation (α, β, γ); NaN for unrotated samples
//! N × (2b)² f64  samples, each in [β][α] order
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corr::s2_correlate;
use crate::error::{dim_err, Error, Result};
use crate::random::random_s2_spectrum_decay;
use crate::rotation::EulerZYZ;
use crate::spectral::{rotate_s2_spectrum, s2_analyze, s2_synthesize, S2Signal};

pub const IDX_UBYTE: u8 = 0x08;

/// A parsed IDX file with unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxFile {
    pub fn len(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per item (product of all dimensions but the first).
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }

    pub fn item(&self, i: usize) -> &[u8] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, IDX_UBYTE, self.dims.len() as u8];
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

/// Parses big-endian IDX bytes (magic `0x0000_08RR`, `RR` = rank).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    if bytes.len() < 4 {
        let mut m = [0u8; 4];
        m[..bytes.len()].copy_from_slice(bytes);
        return Err(Error::BadMagic(u32::from_be_bytes(m)));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let rank = bytes[3] as usize;
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || rank == 0 {
        return Err(Error::BadMagic(magic));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Corrupt("IDX header truncated".into()));
    }
    let dims: Vec<usize> =
        (0..rank).map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize).collect();
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Corrupt("IDX size overflow".into()))?;
    let payload = &bytes[header..];
    if payload.len() != count {
        return Err(Error::Corrupt(format!("IDX declares {count} elements, payload has {}", payload.len())));
    }
    Ok(IdxFile { dims, data: payload.to_vec() })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxFile> {
    parse_idx(&std::fs::read(path)?)
}

/// Standard MNIST file names within a directory.
pub fn mnist_paths(dir: &Path, train: bool) -> (std::path::PathBuf, std::path::PathBuf) {
    let p = if train { "train" } else { "t10k" };
    (dir.join(format!("{p}-images-idx3-ubyte")), dir.join(format!("{p}-labels-idx1-ubyte")))
}

/// Reads an MNIST split; returns images (`N × rows × cols`) and labels.
pub fn read_mnist(dir: &Path, train: bool) -> Result<(IdxFile, Vec<usize>)> {
    let (ip, lp) = mnist_paths(dir, train);
    let images = read_idx(ip)?;
    let labels = read_idx(lp)?;
    if images.dims.len() != 3 || labels.dims.len() != 1 || images.len() != labels.len() {
        return Err(Error::ShapeConflict(format!(
            "MNIST images {:?} and labels {:?} do not match",
            images.dims, labels.dims
        )));
    }
    Ok((images, labels.data.iter().map(|&v| v as usize).collect()))
}

/// Angular radius of the cap covered by the image square's inscribed circle.
pub const CAP_RADIUS: f64 = std::f64::consts::FRAC_PI_3;

/// Lifts a grayscale image onto the northern hemisphere.
///
/// A grid point at colatitude `β < π/2` maps to the plane point at radius
/// `tan(β/2)` (stereographic projection from the south pole onto the
/// equatorial plane) and azimuth `α`. The plane is scaled so that the image's
/// half-width equals the radius of the cap `β = CAP_RADIUS`, the image `x`
/// axis runs along `α = 0` and its rows run top to bottom along `−y`.
/// Samples are bilinear with zero outside the image; values are divided by 255.
pub fn project_to_sphere(img: &[u8], rows: usize, cols: usize, b: usize) -> Result<S2Signal<f64>> {
    if img.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(dim_err(format!("image of {} bytes is not {rows}×{cols}", img.len())));
    }
    let r_cap = (CAP_RADIUS / 2.0).tan();
    let px = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            img[r as usize * cols + c as usize] as f64 / 255.0
        }
    };
    S2Signal::from_fn(1, b, |_, alpha, beta| {
        if beta >= std::f64::consts::FRAC_PI_2 {
            return 0.0;
        }
        let r = (beta / 2.0).tan() / r_cap;
        let (u, v) = (r * alpha.cos(), r * alpha.sin());
        // Continuous pixel coordinates with pixel centers at integers.
        let col = (u + 1.0) / 2.0 * cols as f64 - 0.5;
        let row = (1.0 - v) / 2.0 * rows as f64 - 0.5;
        let (c0, r0) = (col.floor(), row.floor());
        let (fc, fr) = (col - c0, row - r0);
        let (c0, r0) = (c0 as isize, r0 as isize);
        (1.0 - fr) * ((1.0 - fc) * px(r0, c0) + fc * px(r0, c0 + 1))
            + fr * ((1.0 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Unrotated.
    Nr,
    /// Each sample rotated by an independent uniform rotation.
    R,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nr" => Ok(Self::Nr),
            "r" => Ok(Self::R),
            other => Err(Error::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nr => "nr",
            Self::R => "r",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalDataset {
    pub bandwidth: usize,
    pub variant: Variant,
    pub seed: u64,
    pub images: Vec<S2Signal<f64>>,
    pub labels: Vec<usize>,
    /// Rotation applied to each sample (`None` for NR).
    pub rotations: Vec<Option<EulerZYZ>>,
}

pub const DATASET_MAGIC: u32 = 0x5350_4453;
pub const DATASET_VERSION: u32 = 1;

impl SphericalDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The first `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            rotations: idx.iter().map(|&i| self.rotations[i]).collect(),
            bandwidth: self.bandwidth,
            variant: self.variant,
            seed: self.seed,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let side = 2 * self.bandwidth;
        let mut out = Vec::with_capacity(40 + self.len() * (28 + 8 * side * side));
        out.extend_from_slice(&DATASET_MAGIC.to_le_bytes());
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.bandwidth as u32).to_le_bytes());
        out.push(u8::from(self.variant == Variant::R));
        out.extend_from_slice(&self.seed.to_le_bytes());
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        for r in &self.rotations {
            let v = r.map_or([f64::NAN; 3], |r| [r.alpha, r.beta, r.gamma]);
            v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        for img in &self.images {
            img.data().iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Corrupt("dataset truncated".into()))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        let magic = u32::from_le_bytes(take(4).map_err(|_| Error::BadMagic(0))?.try_into().unwrap());
        if magic != DATASET_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: DATASET_VERSION });
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let b = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if b == 0 {
            return Err(Error::Corrupt("bandwidth 0".into()));
        }
        let variant = match take(1)?[0] {
            0 => Variant::Nr,
            1 => Variant::R,
            v => return Err(Error::Corrupt(format!("unknown variant code {v}"))),
        };
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let side = 2 * b;
        let need =
            n.checked_mul(4 + 24 + 8 * side * side).ok_or_else(|| Error::Corrupt("dataset size overflow".into()))?;
        if bytes.len() < need {
            return Err(Error::Corrupt("dataset truncated".into()));
        }
        let f64s =
            |s: &[u8]| -> Vec<f64> { s.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect() };
        let labels: Vec<usize> =
            take(4 * n)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
        let rotations = f64s(take(24 * n)?)
            .chunks_exact(3)
            .map(|r| if r[0].is_nan() { None } else { Some(EulerZYZ::new(r[0], r[1], r[2])) })
            .collect();
        let mut images = Vec::with_capacity(n);
        for _ in 0..n {
            images.push(S2Signal::new(1, b, f64s(take(8 * side * side)?))?);
        }
        if pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self { bandwidth: b, variant, seed, images, labels, rotations })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Uniform rotation for sample `index` under `seed`, independent of any other index.
pub fn sample_rotation(seed: u64, index: usize) -> EulerZYZ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    EulerZYZ::random(&mut rng)
}

/// Projects images onto the sphere and band-limits them to `b`.
///
/// Both variants go through the same analysis/synthesis at `b`; for `R`
/// each spectrum is additionally rotated by [`sample_rotation`]`(seed, i)`.
/// NR and R samples of the same index therefore have identical norms.
pub fn spherical_mnist(
    images: &IdxFile,
    labels: &[usize],
    indices: &[usize],
    b: usize,
    variant: Variant,
    seed: u64,
) -> Result<SphericalDataset> {
    if images.dims.len() != 3 {
        return Err(dim_err("expected a rank-3 image file"));
    }
    let (rows, cols) = (images.dims[1], images.dims[2]);
    let out: Vec<(S2Signal<f64>, Option<EulerZYZ>)> = indices
        .par_iter()
        .map(|&i| {
            let raw = project_to_sphere(images.item(i), rows, cols, b)?;
            let mut spec = s2_analyze(&raw)?;
            let rot = (variant == Variant::R).then(|| sample_rotation(seed, i));
            if let Some(r) = &rot {
                spec = rotate_s2_spectrum(&spec, r);
            }
            Ok((s2_synthesize(&spec)?, rot))
        })
        .collect::<Result<_>>()?;
    let (imgs, rots) = out.into_iter().unzip();
    Ok(SphericalDataset {
        bandwidth: b,
        variant,
        seed,
        images: imgs,
        labels: indices.iter().map(|&i| labels[i]).collect(),
        rotations: rots,
    })
}

/// Rotates every sample of an NR dataset spectrally (variant R).
pub fn randomly_rotate(ds: &SphericalDataset, seed: u64) -> Result<SphericalDataset> {
    let out: Vec<(S2Signal<f64>, EulerZYZ)> = ds
        .images
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let r = sample_rotation(seed, i);
            Ok((s2_synthesize(&rotate_s2_spectrum(&s2_analyze(f)?, &r))?, r))
        })
        .collect::<Result<_>>()?;
    let (images, rots): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    Ok(SphericalDataset {
        variant: Variant::R,
        seed,
        images,
        rotations: rots.into_iter().map(Some).collect(),
        ..ds.clone()
    })
}

/// Relative noise amplitude of synthetic samples.
const NOISE: f64 = 0.1;
/// Spectral decay exponent of synthetic templates and noise.
const DECAY: f64 = 0.5;

/// Labeled band-limited signals: class `c` is a fixed random zero-mean
/// spectral template with amplitudes decaying like `(1 + ℓ)^−1/2`, plus
/// independent noise of the same spectral shape at a tenth of the amplitude.
pub fn synth_dataset(n: usize, b: usize, classes: usize, seed: u64) -> Result<SphericalDataset> {
    if classes == 0 {
        return Err(Error::InvalidConfig("at least one class".into()));
    }
    let draw = |stream: u64, zero_mean: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut spec = random_s2_spectrum_decay::<f64, _>(&mut rng, 1, b, DECAY);
        if zero_mean {
            spec.set(0, 0, 0, num_complex::Complex::new(0.0, 0.0));
        }
        spec
    };
    let templates: Vec<_> = (0..classes).map(|c| draw(1 << 32 | c as u64, true)).collect();
    let images: Vec<S2Signal<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut spec = draw(i as u64, false);
            spec.scale(NOISE);
            spec.add_assign(&templates[i % classes]);
            s2_synthesize(&spec)
        })
        .collect::<Result<_>>()?;
    Ok(SphericalDataset {
        bandwidth: b,
        variant: Variant::Nr,
        seed,
        images,
        labels: (0..n).map(|i| i % classes).collect(),
        rotations: vec![None; n],
    })
}

/// Maximum over the SO(3) grid of bandwidth `b_corr` of `∫ f (R g) / (‖f‖ ‖g‖)`.
pub fn max_correlation(f: &S2Signal<f64>, g: &S2Signal<f64>, b_corr: usize) -> Result<f64> {
    let c = s2_correlate(f, g, b_corr)?;
    let norm = (f.weighted_dot(f) * g.weighted_dot(g)).sqrt();
    Ok(c.data().iter().copied().fold(f64::NEG_INFINITY, f64::max) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgrid::S2Grid;

    fn fixture() -> IdxFile {
        IdxFile { dims: vec![2, 2, 2], data: vec![0, 1, 2, 3, 4, 5, 6, 7] }
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let f = fixture();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx(&bytes).unwrap(), f);
        assert!(matches!(parse_idx(&[]), Err(Error::BadMagic(0))));
        assert!(matches!(parse_idx(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[2] = 0x0d;
        assert!(matches!(parse_idx(&bad), Err(Error::BadMagic(0x0000_0d03))));
        assert_eq!(f.item(1), &[4, 5, 6, 7]);
    }

    #[test]
    fn projection_examples() {
        let b = 16;
        let zero = project_to_sphere(&[0; 784], 28, 28, b).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let ones = project_to_sphere(&[255; 784], 28, 28, b).unwrap();
        let grid = S2Grid::<f64>::new(b).unwrap();
        for k in 0..2 * b {
            for j in 0..2 * b {
                let v = ones.get(0, k, j);
                assert!((0.0..=1.0).contains(&v));
                if grid.beta[k] >= std::f64::consts::FRAC_PI_2 {
                    assert_eq!(v, 0.0);
                }
                if grid.beta[k] < CAP_RADIUS * 0.9 {
                    assert_eq!(v, 1.0);
                }
            }
        }

        let mut img = [0u8; 784];
        img[14 * 28 + 14] = 255;
        let dot = project_to_sphere(&img, 28, 28, 30).unwrap();
        let (best, _) =
            dot.data().iter().enumerate().fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        let grid = S2Grid::<f64>::new(30).unwrap();
        // Pixel center (14, 14) sits half a pixel right of and below the image center:
        // plane offset (1/28, −1/28) in units of the half-width, i.e. β ≈ 2·atan(0.0505·tan(π/6)).
        let want_beta = 2.0 * ((2f64).sqrt() / 28.0 * (CAP_RADIUS / 2.0).tan()).atan();
        let k = best / 60;
        assert!((grid.beta[k] - want_beta).abs() <= std::f64::consts::PI / 60.0 + 1e-12, "{}", grid.beta[k]);
    }

    #[test]
    fn rotation_preserves_norms_and_is_reproducible() {
        let ds = synth_dataset(6, 8, 3, 1).unwrap();
        let r1 = randomly_rotate(&ds, 5).unwrap();
        let r2 = randomly_rotate(&ds, 5).unwrap();
        assert_eq!(r1, r2);
        for (a, b) in ds.images.iter().zip(&r1.images) {
            assert!((a.norm_sq()[0] - b.norm_sq()[0]).abs() < 1e-9 * a.norm_sq()[0]);
        }
        assert_eq!(r1.variant, Variant::R);
        assert!(r1.rotations.iter().all(Option::is_some));
    }

    #[test]
    fn rotation_angle_distribution_matches_haar() {
        // Under Haar measure the rotation angle θ has density (1 − cos θ)/π on [0, π],
        // whose mean is π/2 + 2/π.
        let n = 10_000;
        let mean = (0..n).map(|i| sample_rotation(42, i).angle()).sum::<f64>() / n as f64;
        let want = std::f64::consts::FRAC_PI_2 + 2.0 / std::f64::consts::PI;
        assert!((mean - want).abs() < 0.02 * want, "{mean} vs {want}");
    }

    #[test]
    fn synthetic_dataset_properties() {
        assert!(synth_dataset(0, 8, 3, 0).unwrap().is_empty());
        let a = synth_dataset(12, 8, 4, 7).unwrap();
        assert_eq!(a, synth_dataset(12, 8, 4, 7).unwrap());
        assert_eq!(a.labels, (0..12).map(|i| i % 4).collect::<Vec<_>>());
        // Every cross-class maximal correlation stays below 0.9 of the smallest within-class one.
        let mut within = f64::INFINITY;
        let mut across: f64 = 0.0;
        for i in 0..12 {
            for j in i..12 {
                let c = max_correlation(&a.images[i], &a.images[j], 8).unwrap();
                if a.labels[i] == a.labels[j] {
                    within = within.min(c);
                } else {
                    across = across.max(c);
                }
            }
        }
        assert!(across < 0.9 * within, "{across} vs {within}");
    }

    #[test]
    fn dataset_file_round_trip() {
        let ds = randomly_rotate(&synth_dataset(3, 4, 2, 2).unwrap(), 3).unwrap();
        let bytes = ds.to_bytes();
        let back = SphericalDataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.labels, ds.labels);
        assert!(matches!(SphericalDataset::from_bytes(&bytes[..10]), Err(Error::Corrupt(_))));
        assert!(matches!(SphericalDataset::from_bytes(b"nope"), Err(Error::BadMagic(_))));
        let nr = synth_dataset(2, 4, 2, 2).unwrap();
        assert_eq!(SphericalDataset::from_bytes(&nr.to_bytes()).unwrap(), nr);
    }
}
