//! Times one forward/backward pass of a model preset on projected MNIST digits.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sphae::data::{read_mnist, spherical_mnist, Variant};
use sphae::loss::LossKind;
use sphae::model::{Model, ModelConfig};

fn main() -> sphae::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "desk".into());
    let b_corr: usize = args.next().map_or(16, |s| s.parse().unwrap());
    let cfg = ModelConfig::preset(&preset)?;
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let (imgs, labels) = read_mnist(&dir, true)?;
    let t = Instant::now();
    let ds = spherical_mnist(&imgs, &labels, &(0..20).collect::<Vec<_>>(), cfg.input_bandwidth, Variant::R, 1)?;
    println!("projection: {:.2} ms/sample", t.elapsed().as_secs_f64() * 1e3 / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Model::<f64>::new(&cfg, &mut rng)?;
    for kind in [LossKind::L2, LossKind::RotInv] {
        let mut g = model.zeros_like();
        model.forward_loss(&ds.images[0], kind, b_corr, &mut g)?;
        let t = Instant::now();
        for f in &ds.images {
            model.forward_loss(f, kind, b_corr, &mut g)?;
        }
        println!("{kind}: {:.1} ms/sample", t.elapsed().as_secs_f64() * 1e3 / ds.images.len() as f64);
    }
    let t = Instant::now();
    for f in &ds.images {
        model.encode(f)?;
    }
    println!("encode: {:.1} ms/sample", t.elapsed().as_secs_f64() * 1e3 / ds.images.len() as f64);
    Ok(())
}
