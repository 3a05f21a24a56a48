//! Small training run on projected MNIST, printing per-epoch metrics.
//!
//! Usage: pilot <loss> <n_train> <n_test> <epochs> <lr> [b_corr]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sphae::data::{read_mnist, spherical_mnist, Variant};
use sphae::eval::linear_probe;
use sphae::loss::LossKind;
use sphae::model::{Model, ModelConfig};
use sphae::train::{train_autoencoder, Adam, AdamConfig, TrainConfig};

fn main() -> sphae::Result<()> {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let kind: LossKind = a[0].parse()?;
    let n_train: usize = a[1].parse().unwrap();
    let n_test: usize = a[2].parse().unwrap();
    let epochs: usize = a[3].parse().unwrap();
    let lr: f64 = a[4].parse().unwrap();
    let b_corr: usize = a.get(5).map_or(16, |s| s.parse().unwrap());
    let cfg = ModelConfig::desk();
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let (tr, trl) = read_mnist(&dir, true)?;
    let (te, tel) = read_mnist(&dir, false)?;
    let b = cfg.input_bandwidth;
    let train = spherical_mnist(&tr, &trl, &(0..n_train).collect::<Vec<_>>(), b, Variant::Nr, 1)?;
    let test_r = spherical_mnist(&te, &tel, &(0..n_test).collect::<Vec<_>>(), b, Variant::R, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::<f64>::new(&cfg, &mut rng)?;
    let tc =
        TrainConfig { epochs, adam: AdamConfig { lr, ..Default::default() }, loss: kind, b_corr, ..Default::default() };
    let mut adam = Adam::new(tc.adam, &model);
    let t = std::time::Instant::now();
    train_autoencoder(&mut model, &mut adam, &train.images, Some(&test_r.images), &tc, |r| {
        println!("{} t={:.0}s", r.csv(), t.elapsed().as_secs_f64());
        Ok(())
    })?;
    let emb = |imgs: &[sphae::S2Signal]| imgs.iter().map(|f| model.encode(f).unwrap()).collect::<Vec<_>>();
    let acc = linear_probe(&emb(&train.images), &train.labels, &emb(&test_r.images), &test_r.labels)?;
    let plain = sphae::train::evaluate_autoencoder(&model, &test_r.images, kind, b_corr, false)?;
    let aligned = sphae::train::evaluate_autoencoder(&model, &test_r.images, kind, b_corr, true)?;
    println!("probe acc {acc:.4} psnr plain {:.2} aligned {:.2}", plain.1, aligned.1);
    Ok(())
}
