use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sphae::data::{read_mnist, spherical_mnist, SphericalDataset, Variant};
use sphae::eval::{
    clustering_metrics, few_shot_eval, kmeans, linear_probe, psnr, psnr_aligned, stratified_subset, FEW_SHOT_PERCENTS,
};
use sphae::loss::LossKind;
use sphae::model::{Checkpoint, Classifier, Model, ModelConfig};
use sphae::train::{
    classifier_accuracy, train_autoencoder, train_classifier as fit_classifier, Adam, AdamConfig, CsvLog, Regime,
    TrainConfig,
};

use crate::embeddings::{self, Embeddings};
use crate::{
    BenchArgs, BenchOp, ClassifyArgs, CliError, CliResult, ClusterArgs, EmbedArgs, GenDataArgs, LossArg,
    ReconstructArgs, RegimeArg, SplitArg, TrainArgs, TrainClassifierArgs, VariantArg,
};

fn load_config(spec: &str) -> CliResult<ModelConfig> {
    match ModelConfig::preset(spec) {
        Ok(c) => Ok(c),
        Err(_) if Path::new(spec).exists() => {
            Ok(ModelConfig::from_kv(&std::fs::read_to_string(spec)?, &ModelConfig::full())?)
        }
        Err(_) => Err(CliError::config(format!("`{spec}` is neither a preset nor a config file"))),
    }
}

fn load_dataset(path: &Path) -> CliResult<SphericalDataset> {
    SphericalDataset::load(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.msg = format!("{}: {}", path.display(), err.msg);
        err
    })
}

fn check_bandwidth(cfg: &ModelConfig, ds: &SphericalDataset, what: &str) -> CliResult<()> {
    if ds.bandwidth != cfg.input_bandwidth {
        return Err(CliError::config(format!(
            "{what} has bandwidth {} but the model expects {}",
            ds.bandwidth, cfg.input_bandwidth
        )));
    }
    Ok(())
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let (images, labels) = read_mnist(&a.mnist_dir, a.split == SplitArg::Train)?;
    let n = a.count.unwrap_or(images.len());
    if n > images.len() {
        return Err(CliError::config(format!("--count {n} exceeds the {} available images", images.len())));
    }
    let variant = match a.variant {
        VariantArg::Nr => Variant::Nr,
        VariantArg::R => Variant::R,
    };
    let idx: Vec<usize> = (0..n).collect();
    let ds = spherical_mnist(&images, &labels, &idx, a.bandwidth, variant, a.seed)?;
    ds.save(&a.out)?;
    eprintln!("wrote {n} samples ({variant}, b={}) to {}", a.bandwidth, a.out.display());
    Ok(())
}

fn regime(r: RegimeArg) -> Regime {
    match r {
        RegimeArg::Nrnr => Regime::NrNr,
        RegimeArg::Rr => Regime::RR,
        RegimeArg::Nrr => Regime::NrR,
    }
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(n) = a.latent_dim {
        cfg.latent_dim = n;
        cfg.validate()?;
    }
    let data = load_dataset(&a.data)?;
    let val = a.val.as_deref().map(load_dataset).transpose()?;
    if let Some(r) = a.regime.map(regime) {
        if data.variant != r.train_variant() {
            return Err(CliError::config(format!(
                "regime {r} trains on {} data but --data is {}",
                r.train_variant(),
                data.variant
            )));
        }
        if let Some(v) = &val {
            if v.variant != r.test_variant() {
                return Err(CliError::config(format!(
                    "regime {r} evaluates on {} data but --val is {}",
                    r.test_variant(),
                    v.variant
                )));
            }
        }
    }
    check_bandwidth(&cfg, &data, "--data")?;
    if let Some(v) = &val {
        check_bandwidth(&cfg, v, "--val")?;
    }
    let loss = match a.loss {
        LossArg::L2 => LossKind::L2,
        LossArg::Rotinv => LossKind::RotInv,
    };
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        seed: a.seed,
        loss,
        b_corr: a.b_corr.unwrap_or(cfg.input_bandwidth),
        clip: a.clip,
    };
    tc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut model = Model::<f64>::new(&cfg, &mut rng)?;
    let mut adam = Adam::new(tc.adam, &model);
    let mut log = CsvLog::new(output(a.log.as_deref())?)?;
    train_autoencoder(&mut model, &mut adam, &data.images, val.as_ref().map(|v| v.images.as_slice()), &tc, |r| {
        log.write(r)
    })?;
    let mut ck = Checkpoint::from_model(&model, a.seed);
    (ck.adam_m, ck.adam_v) = adam.moments_f64();
    ck.step = adam.t;
    ck.extra.insert("loss".into(), loss.to_string());
    ck.extra.insert("b_corr".into(), tc.b_corr.to_string());
    ck.extra.insert("lr".into(), format!("{:?}", a.lr));
    if let Some(r) = a.regime {
        ck.extra.insert("regime".into(), regime(r).to_string());
    }
    ck.save(&a.out_ckpt)?;
    Ok(())
}

pub fn train_classifier(a: TrainClassifierArgs) -> CliResult<()> {
    let cfg = load_config(&a.config)?;
    let data = load_dataset(&a.data)?;
    check_bandwidth(&cfg, &data, "--data")?;
    if !(a.percent > 0.0 && a.percent <= 100.0) {
        return Err(CliError::config("--percent must be in (0, 100]"));
    }
    let idx = stratified_subset(&data.labels, a.percent / 100.0, a.seed);
    let sub = data.select(&idx);
    let classes = data.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut clf = Classifier::<f64>::new(&cfg, classes, &mut rng)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        seed: a.seed,
        ..TrainConfig::default()
    };
    let mut adam = Adam::new(tc.adam, &clf);
    fit_classifier(&mut clf, &mut adam, &sub.images, &sub.labels, &tc, |r| {
        eprintln!("{}", r.csv());
        Ok(())
    })?;
    let mut out = output(a.out_metrics.as_deref())?;
    writeln!(out, "percent,train_size,split,accuracy")?;
    let train_acc = classifier_accuracy(&clf, &sub.images, &sub.labels)?;
    writeln!(out, "{},{},train,{train_acc:.6}", a.percent, sub.len())?;
    if let Some(t) = &a.test {
        let test = load_dataset(t)?;
        check_bandwidth(&cfg, &test, "--test")?;
        let acc = classifier_accuracy(&clf, &test.images, &test.labels)?;
        writeln!(out, "{},{},test,{acc:.6}", a.percent, sub.len())?;
    }
    if let Some(p) = &a.out_ckpt {
        Checkpoint::from_classifier(&clf, a.seed).save(p)?;
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<(Model<f64>, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.to_model()?, ck))
}

pub fn reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let (model, ck) = load_model(&a.ckpt)?;
    let data = load_dataset(&a.data)?;
    check_bandwidth(&model.config, &data, "--data")?;
    let b_corr = a
        .b_corr
        .or_else(|| ck.extra.get("b_corr").and_then(|v| v.parse().ok()))
        .unwrap_or(model.config.input_bandwidth);
    if let Some(d) = &a.dump_grids {
        std::fs::create_dir_all(d)?;
    }
    let results: Vec<(f64, sphae::S2Signal)> = data
        .images
        .par_iter()
        .map(|f| {
            let rec = model.reconstruct(f)?;
            if a.align {
                let (p, rot) = psnr_aligned(f, &rec, b_corr)?;
                Ok((p, sphae::spectral::rotate_s2(&rec, &rot)?))
            } else {
                Ok((psnr(f, &rec)?, rec))
            }
        })
        .collect::<sphae::Result<_>>()?;
    if let Some(p) = &a.out_csv {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["index", "label", "psnr"])?;
        for (i, ((p, _), l)) in results.iter().zip(&data.labels).enumerate() {
            w.write_record([i.to_string(), l.to_string(), format!("{p:.6}")])?;
        }
        w.flush()?;
    }
    if let Some(d) = &a.dump_grids {
        let side = 2 * data.bandwidth;
        for (i, ((_, rec), f)) in results.iter().zip(&data.images).enumerate() {
            let mut w = csv::Writer::from_path(d.join(format!("sample_{i:05}.csv")))?;
            w.write_record(["beta_index", "alpha_index", "input", "reconstruction"])?;
            for k in 0..side {
                for j in 0..side {
                    w.write_record([
                        k.to_string(),
                        j.to_string(),
                        format!("{:?}", f.get(0, k, j)),
                        format!("{:?}", rec.get(0, k, j)),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    if a.report_psnr || a.out_csv.is_none() {
        let mean = results.iter().map(|r| r.0).sum::<f64>() / results.len().max(1) as f64;
        println!("mean_psnr,{mean:.6}");
    }
    Ok(())
}

pub fn embed(a: EmbedArgs) -> CliResult<()> {
    let (model, _) = load_model(&a.ckpt)?;
    let data = load_dataset(&a.data)?;
    check_bandwidth(&model.config, &data, "--data")?;
    let features: Vec<Vec<f64>> = data.images.par_iter().map(|f| model.encode(f)).collect::<sphae::Result<_>>()?;
    embeddings::write(
        &a.out_csv,
        &Embeddings { index: (0..data.len()).collect(), labels: data.labels.clone(), features },
    )
}

pub fn cluster(a: ClusterArgs) -> CliResult<()> {
    let e = embeddings::read(&a.embeddings)?;
    let labels = match &a.labels {
        Some(p) => embeddings::read_labels(p)?,
        None => e.labels.clone(),
    };
    if labels.len() != e.features.len() {
        return Err(CliError::config(format!("{} labels for {} embeddings", labels.len(), e.features.len())));
    }
    let km = kmeans(&e.features, a.k, a.seed)?;
    let m = clustering_metrics(&km.assignments, &labels)?;
    let mut out = output(a.out_metrics.as_deref())?;
    writeln!(out, "k,purity,homogeneity,completeness,inertia")?;
    writeln!(out, "{},{:.6},{:.6},{:.6},{:.6e}", a.k, m.purity, m.homogeneity, m.completeness, km.inertia)?;
    Ok(())
}

pub fn classify(a: ClassifyArgs) -> CliResult<()> {
    let tr = embeddings::read(&a.train_emb)?;
    let te = embeddings::read(&a.test_emb)?;
    if tr.features.first().map(Vec::len) != te.features.first().map(Vec::len) {
        return Err(CliError::config("train and test embeddings differ in dimension"));
    }
    let rows = if a.few_shot {
        few_shot_eval(&tr.features, &tr.labels, &te.features, &te.labels, &FEW_SHOT_PERCENTS, a.seed)?
    } else {
        vec![(100.0, linear_probe(&tr.features, &tr.labels, &te.features, &te.labels)?)]
    };
    let mut out = output(a.out_metrics.as_deref())?;
    writeln!(out, "percent,accuracy")?;
    for (p, acc) in rows {
        writeln!(out, "{p},{acc:.6}")?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> CliResult<()> {
    use sphae::corr::{s2_correlate, so3_correlate};
    use sphae::random::{random_s2_signal, random_so3_signal};
    use sphae::spectral::{s2_analyze, s2_synthesize, so3_analyze, so3_synthesize};

    if a.reps == 0 {
        return Err(CliError::config("--reps must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("op,bandwidth,reps,mean_ms");
    for &b in &a.bandwidths {
        if b == 0 {
            return Err(CliError::config("bandwidths must be positive"));
        }
        let time = |f: &mut dyn FnMut() -> sphae::Result<()>| -> CliResult<f64> {
            f()?;
            let t = Instant::now();
            for _ in 0..a.reps {
                f()?;
            }
            Ok(t.elapsed().as_secs_f64() * 1e3 / a.reps as f64)
        };
        let ms = match a.op {
            BenchOp::S2fft => {
                let f: sphae::S2Signal = random_s2_signal(&mut rng, 1, b);
                time(&mut || s2_synthesize(&s2_analyze(&f)?).map(drop))?
            }
            BenchOp::So3fft => {
                let f: sphae::SO3Signal = random_so3_signal(&mut rng, 1, b);
                time(&mut || so3_synthesize(&so3_analyze(&f)?).map(drop))?
            }
            BenchOp::S2corr => {
                let f: sphae::S2Signal = random_s2_signal(&mut rng, 1, b);
                let h: sphae::S2Signal = random_s2_signal(&mut rng, 1, b);
                time(&mut || s2_correlate(&f, &h, b).map(drop))?
            }
            BenchOp::So3corr => {
                let f: sphae::SO3Signal = random_so3_signal(&mut rng, 1, b);
                let h: sphae::SO3Signal = random_so3_signal(&mut rng, 1, b);
                time(&mut || so3_correlate(&f, &h, b).map(drop))?
            }
        };
        let name = format!("{:?}", a.op).to_lowercase();
        println!("{name},{b},{},{ms:.4}", a.reps);
    }
    Ok(())
}
