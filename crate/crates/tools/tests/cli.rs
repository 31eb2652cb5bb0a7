use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use manifold_core::adequacy::{CoverageParams, CoverageReport, Criterion};
use manifold_core::generation::ModelUnderTest;
use manifold_core::manifold::{Likelihood, VaeArchitecture, VaeModel};
use manifold_core::numerics::{Activation, DenseLayer, Network};
use manifold_core::{rng, Tensor};
use manifold_tools::store::idx::{encode_images, encode_labels};
use manifold_tools::store::model::{save_model, Model};
use manifold_tools::store::report::{read_report, write_report};
use manifold_tools::store::tensor_file::{write_tensor, DType};
use serde_json::{json, Value};
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn manifold(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_manifold")).args(args).output().unwrap();
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn ok(args: &[&str]) -> Out {
    let o = manifold(args);
    assert_eq!(o.code, 0, "{args:?}\nstdout: {}\nstderr: {}", o.stdout, o.stderr);
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three blocky 8×8 classes with pixel jitter.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::stream(2024, 0);
        let mut px = Vec::with_capacity(n * 64);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            labels.push(c);
            for p in 0..64 {
                let (row, col) = (p / 8, p % 8);
                let on = match c {
                    0 => row < 4,
                    1 => col < 4,
                    _ => (row + col) % 2 == 0,
                };
                let base = if on { 0.85 } else { 0.1 };
                let v: f64 = base + rng::uniform(&mut r, -0.08, 0.08);
                px.push((v * 255.0).round() / 255.0);
            }
        }
        let x = Tensor::matrix(n, 64, px).unwrap();
        fs::write(dir.path().join("images.idx"), encode_images(&x, 8, 8)).unwrap();
        fs::write(dir.path().join("labels.idx"), encode_labels(&labels)).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn images(&self) -> String {
        s(&self.path("images.idx")).to_string()
    }

    fn labels(&self) -> String {
        s(&self.path("labels.idx")).to_string()
    }

    fn train_vae(&self, out: &str, extra: &[&str]) -> Out {
        let out = self.path(out);
        let (images, labels) = (self.images(), self.labels());
        let defaults = [
            ("--images", images.as_str()),
            ("--labels", labels.as_str()),
            ("--hidden", "16"),
            ("--epochs", "3"),
            ("--batch", "16"),
            ("--lr", "0.005"),
            ("--seed", "7"),
            ("--out", s(&out)),
        ];
        let mut args = vec!["train-vae"];
        for (flag, value) in defaults {
            if !extra.contains(&flag) {
                args.extend([flag, value]);
            }
        }
        args.extend_from_slice(extra);
        manifold(&args)
    }

    fn classifier(&self, out: &str) -> PathBuf {
        let p = self.path(out);
        let (images, labels) = (self.images(), self.labels());
        ok(&[
            "train-classifier", "--images", &images, "--labels", &labels, "--classes", "3", "--hidden", "12",
            "--epochs", "4", "--batch", "16", "--lr", "0.01", "--seed", "3", "--out", s(&p),
        ]);
        p
    }

    fn constant_classifier(&self, out: &str) -> PathBuf {
        let p = self.path(out);
        let hidden = DenseLayer::new(64, 4, vec![0.0; 256], vec![0.0; 4], Activation::Relu).unwrap();
        let head = DenseLayer::new(4, 3, vec![0.0; 12], vec![5.0, 0.0, 0.0], Activation::Identity).unwrap();
        let net = Network::new(64, vec![hidden, head]).unwrap();
        save_model(&p, &Model::Classifier(ModelUnderTest::new(net, 3).unwrap()), &json!(null)).unwrap();
        p
    }

    fn two_stage(&self, out: &str) -> PathBuf {
        let o = self.train_vae(out, &["--stages", "2", "--conditional", "--classes", "3", "--latent", "3", "--stage2-hidden", "8"]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        self.path(out)
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn config_line(out: &Out) -> Value {
    let line = out.stdout.lines().find(|l| l.starts_with("config ")).expect("config line");
    serde_json::from_str(&line[7..]).unwrap()
}

#[test]
fn train_vae_is_deterministic_and_prints_config() {
    let f = Fixture::new(60);
    let a = f.train_vae("a", &[]);
    assert_eq!(f.train_vae("b", &[]).code, 0);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let cfg = config_line(&a);
    assert_eq!(cfg["seed"], 7);
    assert_eq!(cfg["latent"], 8);
    assert_eq!(cfg["stages"], 1);
    assert_eq!(a.stdout.matches("stage 1 epoch").count(), 3);
    assert_eq!(dir_bytes(&f.path("a")), dir_bytes(&f.path("b")));
}

#[test]
fn unconditional_two_stage_is_valid() {
    let f = Fixture::new(45);
    let o = f.train_vae("ts", &["--stages", "2", "--latent", "3"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("stage 2 epoch 3"));
    let cfg = config_line(&o);
    assert_eq!(cfg["stage2_epochs"], 3);
    assert_eq!(cfg["stage2_latent"], 3);
}

#[test]
fn usage_errors_exit_1() {
    let f = Fixture::new(30);
    assert_eq!(f.train_vae("z", &["--latent", "0"]).code, 1);
    assert_eq!(manifold(&["train-vae", "--images", &f.images(), "--out", "x"]).code, 1, "seed is required");
    assert_eq!(manifold(&["no-such-command"]).code, 1);
    let report = f.path("r.json");
    let nc = manifold(&["coverage", "--criterion", "nc", "--data", &f.images(), "--out", s(&report)]);
    assert_eq!(nc.code, 1, "{}", nc.stderr);
    assert!(nc.stderr.contains("--mut"));
    let vae = f.path("vae");
    let mcc = manifold(&[
        "coverage", "--criterion", "mcc", "--vae", s(&vae), "--t", "2", "--data", &f.images(), "--out", s(&report),
    ]);
    assert_eq!(mcc.code, 1);
    let filt = manifold(&[
        "coverage", "--criterion", "mcc", "--vae", s(&vae), "--class-filter", "1", "--data", &f.images(), "--out",
        s(&report),
    ]);
    assert_eq!(filt.code, 1, "class filter needs labels");
    assert_eq!(manifold(&["--help"]).code, 0);
}

#[test]
fn format_errors_exit_2() {
    let f = Fixture::new(30);
    let bad = f.path("bad.idx");
    let mut bytes = fs::read(f.path("images.idx")).unwrap();
    bytes[2] = 0x0D;
    fs::write(&bad, &bytes).unwrap();
    let o = f.train_vae("o", &["--images", s(&bad)]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert!(o.stderr.contains("bad.idx"));
    let missing = manifold(&["assoc", "--events", s(&f.path("absent.json"))]);
    assert_eq!(missing.code, 2);
}

#[test]
fn numeric_failure_exits_3() {
    let f = Fixture::new(30);
    let o = f.train_vae("o", &["--lr", "1e200"]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.contains("epoch"));
}

#[test]
fn mcc_obligations_and_class_filter_union() {
    let f = Fixture::new(90);
    assert_eq!(f.train_vae("vae", &[]).code, 0);
    let vae = f.path("vae");
    let all = f.path("all.json");
    let o = ok(&[
        "coverage", "--criterion", "mcc", "--vae", s(&vae), "--k", "3", "--data", &f.images(), "--labels",
        &f.labels(), "--out", s(&all),
    ]);
    assert!(o.stdout.contains("of 6561 obligations"), "{}", o.stdout);
    let full = read_report(&all).unwrap();
    assert_eq!(full.obligation_count(), 6561);
    let mut union = BTreeSet::new();
    for label in 0..3 {
        let p = f.path(&format!("c{label}.json"));
        ok(&[
            "coverage", "--criterion", "mcc", "--vae", s(&vae), "--data", &f.images(), "--labels", &f.labels(),
            "--class-filter", &label.to_string(), "--out", s(&p),
        ]);
        union.extend(read_report(&p).unwrap().hits().keys().copied());
    }
    let keys: BTreeSet<u64> = full.hits().keys().copied().collect();
    assert_eq!(union, keys);

    let tway = f.path("tway.json");
    let o = ok(&[
        "coverage", "--criterion", "tway", "--vae", s(&vae), "--t", "2", "--data", &f.images(), "--out", s(&tway),
    ]);
    assert!(o.stdout.contains("of 252 obligations"), "{}", o.stdout);
}

#[test]
fn assoc_fixtures() {
    let f = Fixture::new(3);
    let diag = f.path("diag.json");
    let mut r = CoverageReport::new(Criterion::Mcc, CoverageParams::default(), 4);
    for i in 0..40 {
        r.record(i % 4, Some((i % 4) as usize));
    }
    write_report(&diag, &r).unwrap();
    let o = ok(&["assoc", "--events", s(&diag)]);
    assert!(o.stdout.contains("cramers_v 1\n"), "{}", o.stdout);

    let uniform = f.path("uniform.json");
    let mut r = CoverageReport::new(Criterion::Nc, CoverageParams::default(), 5);
    for o in 0..5 {
        for l in 0..4 {
            for _ in 0..7 {
                r.record(o, Some(l));
            }
        }
    }
    write_report(&uniform, &r).unwrap();
    let o = ok(&["assoc", "--events", s(&uniform)]);
    let v: f64 = o.stdout.lines().last().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(v <= 0.05, "{v}");

    let unlabelled = f.path("plain.json");
    let mut r = CoverageReport::new(Criterion::Nc, CoverageParams::default(), 5);
    r.record(1, None);
    write_report(&unlabelled, &r).unwrap();
    assert_eq!(manifold(&["assoc", "--events", s(&unlabelled)]).code, 2);
}

#[test]
fn generate_against_constant_classifier() {
    let f = Fixture::new(60);
    let ts = f.two_stage("ts");
    let clf = f.constant_classifier("const");
    let out = f.path("suite");
    let o = ok(&[
        "generate", "--vae", s(&ts), "--mut", s(&clf), "--n", "10", "--dedup", "0.01", "--seed", "11", "--out",
        s(&out),
    ]);
    let meta: Value = serde_json::from_slice(&fs::read(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 11);
    assert_eq!(meta["status"], "complete");
    assert!(meta["stats"]["attempts"].as_u64().unwrap() < 1000);
    let csv = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
    assert!(o.stdout.contains("duplicates_rejected"));

    let again = f.path("again");
    let par = f.path("par");
    ok(&[
        "generate", "--vae", s(&ts), "--mut", s(&clf), "--n", "10", "--dedup", "0.01", "--seed", "11", "--out",
        s(&again),
    ]);
    ok(&[
        "generate", "--vae", s(&ts), "--mut", s(&clf), "--n", "10", "--dedup", "0.01", "--seed", "11",
        "--workers", "3", "--out", s(&par),
    ]);
    assert_eq!(dir_bytes(&out), dir_bytes(&again));
    assert_eq!(dir_bytes(&out), dir_bytes(&par));

    let search = f.path("search");
    ok(&[
        "generate", "--vae", s(&ts), "--mut", s(&clf), "--n", "10", "--dedup", "0.01", "--seed", "11", "--mode",
        "search", "--steps", "0", "--out", s(&search),
    ]);
    assert_eq!(fs::read(out.join("tests.mten")).unwrap(), fs::read(search.join("tests.mten")).unwrap());
}

#[test]
fn generation_shortfall_is_partial_not_failure() {
    let f = Fixture::new(60);
    let ts = f.two_stage("ts");
    let clf = f.constant_classifier("const");
    let out = f.path("suite");
    ok(&[
        "generate", "--vae", s(&ts), "--mut", s(&clf), "--n", "50", "--dedup", "1000", "--max-attempts", "300",
        "--seed", "1", "--out", s(&out),
    ]);
    let meta: Value = serde_json::from_slice(&fs::read(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "partial");
    assert_eq!(meta["cases"], 2);
    assert_eq!(meta["shortfall"], 48);
    assert_eq!(meta["stats"]["attempts"], 300);

    let vae = f.path("plain");
    assert_eq!(f.train_vae("plain", &["--stages", "2", "--latent", "3"]).code, 0);
    let o = manifold(&["generate", "--vae", s(&vae), "--mut", s(&clf), "--n", "5", "--seed", "1", "--out", s(&f.path("x"))]);
    assert_eq!(o.code, 2, "unconditional generator: {}", o.stderr);
}

fn zero_encoder_vae() -> VaeModel {
    let arch = VaeArchitecture {
        data_dim: 64,
        latent_dim: 2,
        hidden: vec![4],
        activation: Activation::Relu,
        conditional: false,
        num_classes: 0,
        likelihood: Likelihood::Bernoulli,
    };
    let mut m = VaeModel::init(&arch, &mut rng::stream(1, 1)).unwrap();
    let enc = m.encoder().clone();
    let zeroed: Vec<DenseLayer> = enc
        .layers()
        .iter()
        .map(|l| {
            DenseLayer::new(l.in_dim(), l.out_dim(), vec![0.0; l.weights().len()], vec![0.0; l.out_dim()], l.activation())
                .unwrap()
        })
        .collect();
    m = VaeModel::new(
        Network::new(64, zeroed).unwrap(),
        m.decoder().clone(),
        2,
        64,
        false,
        0,
        Likelihood::Bernoulli,
    )
    .unwrap();
    m
}

#[test]
fn monitor_scores() {
    let f = Fixture::new(25);
    let zero = f.path("zero");
    save_model(&zero, &Model::Vae(zero_encoder_vae()), &json!(null)).unwrap();
    let scores = f.path("scores.csv");
    ok(&["monitor", "--vae", s(&zero), "--data", &f.images(), "--out", s(&scores)]);
    let csv = fs::read_to_string(&scores).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("index,confidence,verdict"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.ends_with(",1,trusted")), "{csv}");

    assert_eq!(f.train_vae("vae", &["--latent", "2"]).code, 0);
    let mut r = rng::stream(5, 5);
    let noise = Tensor::matrix(40, 64, (0..40 * 64).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect()).unwrap();
    let noise_path = f.path("noise.mten");
    write_tensor(&noise_path, &noise, DType::F32).unwrap();
    let o = ok(&[
        "monitor", "--vae", s(&f.path("vae")), "--data", s(&noise_path), "--threshold", "0.999999", "--out",
        s(&scores),
    ]);
    assert!(o.stdout.contains("flag_rate 1 "), "{}", o.stdout);
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 41);

    let bad = manifold(&["monitor", "--vae", s(&zero), "--data", &f.images(), "--threshold", "1.5", "--out", s(&scores)]);
    assert_eq!(bad.code, 1);
}

fn frechet_value(o: &Out) -> f64 {
    let line = o.stdout.lines().find(|l| l.starts_with("frechet ")).unwrap();
    line[8..].parse().unwrap()
}

#[test]
fn frechet_orderings() {
    let f = Fixture::new(240);
    let images = f.images();
    let same = ok(&["frechet", "--a", &images, "--b", &images]);
    assert!(frechet_value(&same) < 1e-6);

    let data = manifold_tools::store::idx::read_images(f.path("images.idx")).unwrap();
    let first = f.path("first.mten");
    let second = f.path("second.mten");
    write_tensor(&first, &data.slice_rows(0, 120), DType::F64).unwrap();
    write_tensor(&second, &data.slice_rows(120, 240), DType::F64).unwrap();
    let mut r = rng::stream(9, 9);
    let noise = Tensor::matrix(120, 64, (0..120 * 64).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect()).unwrap();
    let noise_path = f.path("noise.mten");
    write_tensor(&noise_path, &noise, DType::F64).unwrap();
    let split = frechet_value(&ok(&["frechet", "--a", s(&first), "--b", s(&second)]));
    let vs_noise = frechet_value(&ok(&["frechet", "--a", s(&first), "--b", s(&noise_path)]));
    assert!(vs_noise > 10.0 * split, "{split} vs {vs_noise}");

    let clf = f.classifier("clf");
    let report = f.path("fd.json");
    ok(&["frechet", "--a", s(&first), "--b", s(&second), "--mut", s(&clf), "--out", s(&report)]);
    let doc: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(doc["a"]["dim"], 12);
    assert_eq!(doc["b"]["count"], 120);

    let narrow = f.path("narrow.mten");
    write_tensor(&narrow, &Tensor::matrix(10, 3, vec![0.5; 30]).unwrap(), DType::F64).unwrap();
    assert_eq!(manifold(&["frechet", "--a", s(&first), "--b", s(&narrow)]).code, 2);
}

#[test]
fn profile_then_nbc_on_the_same_set_is_zero() {
    let f = Fixture::new(60);
    let clf = f.classifier("clf");
    let p1 = f.path("p1.json");
    let p2 = f.path("p2.json");
    ok(&["profile", "--mut", s(&clf), "--data", &f.images(), "--out", s(&p1)]);
    ok(&["profile", "--mut", s(&clf), "--data", &f.images(), "--out", s(&p2)]);
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    let doc: Value = serde_json::from_slice(&fs::read(&p1).unwrap()).unwrap();
    let low = doc["low"].as_array().unwrap();
    let high = doc["high"].as_array().unwrap();
    assert!(low.iter().zip(high).all(|(l, h)| l.as_f64() <= h.as_f64()));

    let report = f.path("nbc.json");
    let o = ok(&[
        "coverage", "--criterion", "nbc", "--mut", s(&clf), "--profile", s(&p1), "--data", &f.images(), "--out",
        s(&report),
    ]);
    assert!(o.stdout.starts_with("config ") && o.stdout.contains("nbc coverage 0%"), "{}", o.stdout);

    let nc = f.path("nc.json");
    ok(&["coverage", "--criterion", "nc", "--mut", s(&clf), "--data", &f.images(), "--out", s(&nc)]);
    let r = read_report(&nc).unwrap();
    assert_eq!(r.params.nc_threshold, Some(0.5));
    assert_eq!(r.obligation_count(), 12);
}
