use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sphae");

fn sphae(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("SPHAE_DATA_DIR").output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sphae(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    sphae(dir, args).status.code().expect("exit code")
}

fn idx_bytes(dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Writes a 40-image stand-in for MNIST: each class draws a bar at its own
/// orientation, so the classes are separable.
fn fake_mnist(dir: &Path) -> PathBuf {
    let root = dir.join("mnist");
    fs::create_dir_all(&root).unwrap();
    let n = 40u32;
    let mut pixels = Vec::with_capacity(n as usize * 784);
    let mut labels = Vec::with_capacity(n as usize);
    for i in 0..n {
        let class = i % 4;
        let angle = class as f64 * std::f64::consts::FRAC_PI_4;
        let (s, c) = angle.sin_cos();
        for r in 0..28 {
            for col in 0..28 {
                let (x, y) = (col as f64 - 13.5, r as f64 - 13.5);
                let along = x * c + y * s;
                let across = -x * s + y * c;
                let on = across.abs() < 2.0 + (i / 4 % 3) as f64 * 0.3 && along.abs() < 10.0;
                pixels.push(if on { 255 } else { 0 });
            }
        }
        labels.push(class as u8);
    }
    for prefix in ["train", "t10k"] {
        fs::write(root.join(format!("{prefix}-images-idx3-ubyte")), idx_bytes(&[n, 28, 28], &pixels)).unwrap();
        fs::write(root.join(format!("{prefix}-labels-idx1-ubyte")), idx_bytes(&[n], &labels)).unwrap();
    }
    root
}

/// Generates toy-bandwidth training (unrotated) and test (rotated) sets.
fn datasets(dir: &Path) {
    let mnist = fake_mnist(dir);
    let m = mnist.to_str().unwrap();
    ok(
        dir,
        &["gen-data", "--mnist-dir", m, "--out", "train.sph", "--variant", "nr", "--bandwidth", "4", "--count", "24"],
    );
    ok(
        dir,
        &[
            "gen-data",
            "--mnist-dir",
            m,
            "--out",
            "test.sph",
            "--split",
            "test",
            "--variant",
            "r",
            "--bandwidth",
            "4",
            "--count",
            "16",
            "--seed",
            "3",
        ],
    );
}

fn train_args<'a>(ckpt: &'a str, log: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        "train.sph",
        "--val",
        "test.sph",
        "--regime",
        "nrr",
        "--config",
        "toy",
        "--epochs",
        "2",
        "--batch",
        "8",
        "--lr",
        "0.01",
        "--seed",
        "7",
        "--out-ckpt",
        ckpt,
        "--log",
        log,
    ]
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(dir.path(), &["--no-such-flag"]), 2);
    assert_eq!(code(dir.path(), &["train", "--loss", "l3"]), 2);
    assert_eq!(code(dir.path(), &["frobnicate"]), 2);
}

#[test]
fn missing_file_exits_3() {
    let dir = TempDir::new().unwrap();
    let args = ["train", "--data", "absent.sph", "--config", "toy", "--out-ckpt", "m.ckpt"];
    assert_eq!(code(dir.path(), &args), 3);
    assert_eq!(code(dir.path(), &["gen-data", "--mnist-dir", "nowhere", "--out", "x.sph"]), 3);
}

#[test]
fn regime_conflict_exits_4() {
    let dir = TempDir::new().unwrap();
    datasets(dir.path());
    let p = dir.path();
    // rr trains on rotated data, but train.sph is unrotated.
    let args = ["train", "--data", "train.sph", "--regime", "rr", "--config", "toy", "--out-ckpt", "m.ckpt"];
    assert_eq!(code(p, &args), 4);
    // nrnr evaluates on unrotated data, but test.sph is rotated.
    let args = [
        "train",
        "--data",
        "train.sph",
        "--val",
        "test.sph",
        "--regime",
        "nrnr",
        "--config",
        "toy",
        "--out-ckpt",
        "m.ckpt",
    ];
    assert_eq!(code(p, &args), 4);
    // The full preset expects bandwidth 30.
    assert_eq!(code(p, &["train", "--data", "train.sph", "--out-ckpt", "m.ckpt"]), 4);
    assert_eq!(code(p, &["train", "--data", "train.sph", "--config", "nonsense", "--out-ckpt", "m.ckpt"]), 4);
    assert!(!p.join("m.ckpt").exists());
}

#[test]
fn malformed_files_exit_5() {
    let dir = TempDir::new().unwrap();
    datasets(dir.path());
    let p = dir.path();
    let bytes = fs::read(p.join("train.sph")).unwrap();
    fs::write(p.join("short.sph"), &bytes[..bytes.len() / 2]).unwrap();
    fs::write(p.join("garbage.sph"), b"not a dataset at all").unwrap();
    for f in ["short.sph", "garbage.sph"] {
        assert_eq!(code(p, &["train", "--data", f, "--config", "toy", "--out-ckpt", "m.ckpt"]), 5, "{f}");
    }
    fs::write(p.join("bad.ckpt"), b"\x45\x41\x50\x53\x09\x00\x00\x00").unwrap();
    assert_eq!(code(p, &["embed", "--ckpt", "bad.ckpt", "--data", "train.sph", "--out-csv", "e.csv"]), 5);
}

#[test]
fn selftest_fast_passes() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["selftest", "--level", "fast"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("check,value,tolerance,status,seconds"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() >= 10);
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("pass")), "{out}");
}

#[test]
fn bench_prints_a_table() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["bench", "--op", "s2corr", "--bandwidths", "2,4", "--reps", "1"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "op,bandwidth,reps,mean_ms");
    assert!(lines[1].starts_with("s2corr,2,1,"));
    assert!(lines[2].starts_with("s2corr,4,1,"));
}

#[test]
fn full_pipeline_writes_csv_outputs() {
    let dir = TempDir::new().unwrap();
    datasets(dir.path());
    let p = dir.path();
    ok(p, &train_args("m.ckpt", "log.csv"));
    let log = fs::read_to_string(p.join("log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], "epoch,step,split,loss,psnr");
    assert_eq!(rows.len(), 1 + 2 * 2);
    assert!(rows[2].starts_with("0,3,val,"));

    let out = ok(
        p,
        &[
            "reconstruct",
            "--ckpt",
            "m.ckpt",
            "--data",
            "test.sph",
            "--align",
            "--report-psnr",
            "--out-csv",
            "rec.csv",
            "--dump-grids",
            "grids",
        ],
    );
    let mean: f64 = out.trim().strip_prefix("mean_psnr,").unwrap().parse().unwrap();
    assert!(mean.is_finite() && mean > 0.0);
    let rec = fs::read_to_string(p.join("rec.csv")).unwrap();
    assert_eq!(rec.lines().count(), 17);
    let grid = fs::read_to_string(p.join("grids/sample_00000.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("beta_index,alpha_index,input,reconstruction"));
    assert_eq!(grid.lines().count(), 1 + 8 * 8);

    ok(p, &["embed", "--ckpt", "m.ckpt", "--data", "train.sph", "--out-csv", "train_emb.csv"]);
    ok(p, &["embed", "--ckpt", "m.ckpt", "--data", "test.sph", "--out-csv", "test_emb.csv"]);
    let emb = fs::read_to_string(p.join("test_emb.csv")).unwrap();
    assert_eq!(emb.lines().next(), Some("index,label,z_0,z_1,z_2,z_3,z_4"));
    assert_eq!(emb.lines().count(), 17);

    ok(p, &["cluster", "--embeddings", "test_emb.csv", "--k", "4", "--out-metrics", "cluster.csv"]);
    let cl = fs::read_to_string(p.join("cluster.csv")).unwrap();
    assert_eq!(cl.lines().next(), Some("k,purity,homogeneity,completeness,inertia"));
    let purity: f64 = cl.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.25..=1.0).contains(&purity));

    ok(
        p,
        &[
            "classify",
            "--train-emb",
            "train_emb.csv",
            "--test-emb",
            "test_emb.csv",
            "--few-shot",
            "--out-metrics",
            "fs.csv",
        ],
    );
    let fs_csv = fs::read_to_string(p.join("fs.csv")).unwrap();
    let percents: Vec<&str> = fs_csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(fs_csv.lines().next(), Some("percent,accuracy"));
    assert_eq!(percents, ["1", "2", "5", "10", "100"]);

    let out = ok(
        p,
        &[
            "train-classifier",
            "--data",
            "train.sph",
            "--test",
            "test.sph",
            "--config",
            "toy",
            "--epochs",
            "1",
            "--percent",
            "50",
        ],
    );
    assert!(out.starts_with("percent,train_size,split,accuracy\n50,12,train,"));
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    datasets(dir.path());
    let p = dir.path();
    ok(p, &train_args("a.ckpt", "a.csv"));
    let mut threaded = vec!["--threads", "1"];
    threaded.extend(train_args("b.ckpt", "b.csv"));
    ok(p, &threaded);
    assert_eq!(fs::read(p.join("a.ckpt")).unwrap(), fs::read(p.join("b.ckpt")).unwrap());
    assert_eq!(fs::read(p.join("a.csv")).unwrap(), fs::read(p.join("b.csv")).unwrap());

    ok(p, &["embed", "--ckpt", "a.ckpt", "--data", "test.sph", "--out-csv", "ea.csv"]);
    ok(p, &["embed", "--ckpt", "b.ckpt", "--data", "test.sph", "--out-csv", "eb.csv"]);
    assert_eq!(fs::read(p.join("ea.csv")).unwrap(), fs::read(p.join("eb.csv")).unwrap());

    let mut other = train_args("c.ckpt", "c.csv");
    let seed = other.iter().position(|a| *a == "7").unwrap();
    other[seed] = "8";
    ok(p, &other);
    assert_ne!(fs::read(p.join("a.ckpt")).unwrap(), fs::read(p.join("c.ckpt")).unwrap());
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let mnist = fake_mnist(dir.path());
    let out = Command::new(BIN)
        .args(["gen-data", "--out", "env.sph", "--bandwidth", "4", "--count", "4"])
        .current_dir(dir.path())
        .env("SPHAE_DATA_DIR", &mnist)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env.sph").exists());
}

#[test]
fn divergent_training_exits_6() {
    let dir = TempDir::new().unwrap();
    datasets(dir.path());
    let args =
        ["train", "--data", "train.sph", "--config", "toy", "--lr", "1e300", "--batch", "4", "--out-ckpt", "m.ckpt"];
    let out = sphae(dir.path(), &args);
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
    assert!(!dir.path().join("m.ckpt").exists());
}
