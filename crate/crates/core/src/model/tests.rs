use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::loss::LossKind;
use crate::nn::tests::fd_check;
use crate::random::{random_s2_signal, random_s2_spectrum_decay};
use crate::rotation::EulerZYZ;
use crate::spectral::{rotate_s2, s2_synthesize};

fn toy_model(seed: u64) -> Model<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Model::new(&ModelConfig::toy(), &mut rng).unwrap();
    // Nonzero biases exercise the bias paths and move activations off the ReLU kink.
    for (i, v) in m.encoder.s2.bias.iter_mut().enumerate() {
        *v = 0.05 * (i as f64 + 1.0);
    }
    m.decoder.convs[0].bias = vec![0.02, -0.03];
    m
}

#[test]
fn toy_model_gradients_match_finite_differences() {
    let m = toy_model(11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(&mut rng, 1, 4, 1.0)).unwrap();
    for kind in [LossKind::L2, LossKind::RotInv] {
        let mut grads = m.zeros_like();
        let out = m.forward_loss(&f, kind, 4, &mut grads).unwrap();
        let loss = |p: &Model<f64>| {
            let mut g = p.zeros_like();
            let o = p.forward_loss(&f, kind, 4, &mut g).unwrap();
            if kind == LossKind::RotInv {
                assert_eq!(o.loss.rotation, out.loss.rotation);
            }
            o.loss.loss
        };
        let err = fd_check(&m, &grads, loss, 300);
        assert!(err < 1e-4, "{kind}: relative error {err}");
    }
}

#[test]
fn shapes_round_trip() {
    let m = toy_model(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_s2_signal(&mut rng, 1, 4);
    let z = m.encode(&f).unwrap();
    assert_eq!(z.len(), 5);
    let r = m.decode(&z).unwrap();
    assert!(r.same_shape(&f));
    assert!(m.encode(&random_s2_signal(&mut rng, 1, 5)).is_err());
}

#[test]
fn zero_input_latent_is_bias_driven() {
    let mut m = toy_model(3);
    m.encoder.s2.bias.iter_mut().for_each(|v| *v = 0.0);
    m.encoder.so3.iter_mut().for_each(|c| c.bias.iter_mut().for_each(|v| *v = 0.0));
    let bias = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    m.latent.as_mut().unwrap().bias = bias.clone();
    let z = m.encode(&S2Signal::zeros(1, 4)).unwrap();
    assert_eq!(z, bias);
}

#[test]
fn linear_encoder_latent_is_exactly_invariant() {
    let mut cfg = ModelConfig::toy();
    cfg.relu = false;
    cfg.input_bandwidth = 6;
    cfg.encoder = vec![Stage::new(3, 6), Stage::new(4, 6)];
    cfg.decoder = vec![Stage::new(2, 3), Stage::new(1, 6)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = Model::<f64>::new(&cfg, &mut rng).unwrap();
    let f = s2_synthesize(&random_s2_spectrum_decay::<f64, _>(&mut rng, 1, 6, 0.5)).unwrap();
    let z = m.encode(&f).unwrap();
    for _ in 0..10 {
        let r = EulerZYZ::random(&mut rng);
        let zr = m.encode(&rotate_s2(&f, &r).unwrap()).unwrap();
        let scale = z.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (a, b) in z.iter().zip(&zr) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let m = toy_model(7);
    let mut ck = Checkpoint::from_model(&m, 99);
    ck.step = 17;
    ck.adam_m = ck.params.iter().map(|t| t.iter().map(|v| v * 0.5).collect()).collect();
    ck.adam_v = ck.params.iter().map(|t| t.iter().map(|v| v * v).collect()).collect();
    ck.extra.insert("loss".into(), "rotinv".into());
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.to_model::<f64>().unwrap(), m);

    let dir = std::env::temp_dir().join(format!("sphae-ckpt-{}", std::process::id()));
    ck.save(&dir).unwrap();
    assert_eq!(std::fs::read(&dir).unwrap(), bytes);
    assert_eq!(Checkpoint::load(&dir).unwrap(), ck);
    std::fs::remove_file(&dir).unwrap();
}

#[test]
fn checkpoint_errors() {
    let ck = Checkpoint::from_model(&toy_model(8), 0);
    let bytes = ck.to_bytes();
    assert!(matches!(Checkpoint::from_bytes(&[]), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::VersionMismatch { found: 9, expected: 1 })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Corrupt(_))));

    let mut other = ck.clone();
    other.config.latent_dim = 7;
    assert!(matches!(other.to_model::<f64>(), Err(Error::ShapeConflict(_))));
    assert!(matches!(ck.to_classifier::<f64>(), Err(Error::ShapeConflict(_))));
}

#[test]
fn classifier_basics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = Classifier::<f64>::new(&ModelConfig::toy(), 10, &mut rng).unwrap();
    let f = random_s2_signal(&mut rng, 1, 4);
    let p = c.predict_proba(&f).unwrap();
    assert_eq!(p.len(), 10);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(c.predict(&f).unwrap() < 10);

    let mut grads = c.zeros_like();
    c.forward_loss(&f, 3, &mut grads).unwrap();
    let loss = |q: &Classifier<f64>| {
        let mut g = q.zeros_like();
        q.forward_loss(&f, 3, &mut g).unwrap()
    };
    assert!(fd_check(&c, &grads, loss, 200) < 1e-4);

    let ck = Checkpoint::from_classifier(&c, 1);
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap().to_classifier::<f64>().unwrap();
    assert_eq!(back, c);
}
