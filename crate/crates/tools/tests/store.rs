use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use manifold_core::adequacy::{ActivationProfile, CoverageParams, CoverageReport, Criterion, Provenance};
use manifold_core::generation::{generate_suite, GenConfig, ModelUnderTest};
use manifold_core::manifold::{Likelihood, TwoStageVae, VaeArchitecture, VaeModel};
use manifold_core::numerics::{Activation, Network};
use manifold_core::rng;
use manifold_core::Tensor;
use manifold_tools::store::idx::{encode_images, encode_labels, parse_images, parse_labels, read_idx};
use manifold_tools::store::json::{significant, to_canonical};
use manifold_tools::store::model::{load_classifier, load_model, load_two_stage, save_model, Model};
use manifold_tools::store::profile::{read_profile, write_profile};
use manifold_tools::store::report::{read_report, write_report};
use manifold_tools::store::suite::{read_suite, write_suite};
use manifold_tools::store::tensor_file::{decode_tensor, encode_tensor, read_tensor, DType};
use manifold_tools::store::StoreError;
use serde_json::json;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against a committed file; `UPDATE_GOLDEN=1` rewrites it instead.
fn check_golden(name: &str, bytes: &[u8]) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, bytes).unwrap();
    }
    let committed = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(committed, bytes, "{name} drifted from its golden copy");
}

fn classifier(seed: u64) -> ModelUnderTest {
    let mut r = rng::stream(seed, 0);
    let net = Network::init(
        6,
        &[(5, Activation::Tanh), (4, Activation::Relu), (3, Activation::Identity)],
        &mut r,
    )
    .unwrap();
    ModelUnderTest::new(net, 3).unwrap()
}

fn vae(data_dim: usize, latent: usize, conditional: bool, likelihood: Likelihood, seed: u64) -> VaeModel {
    let arch = VaeArchitecture {
        data_dim,
        latent_dim: latent,
        hidden: vec![7],
        activation: Activation::Relu,
        conditional,
        num_classes: if conditional { 3 } else { 0 },
        likelihood,
    };
    VaeModel::init(&arch, &mut rng::stream(seed, 0)).unwrap()
}

fn two_stage() -> TwoStageVae {
    TwoStageVae::new(
        vae(6, 3, true, Likelihood::Bernoulli, 1),
        vae(3, 2, true, Likelihood::Gaussian { variance: 0.5 }, 2),
    )
    .unwrap()
}

fn random_inputs(n: usize, d: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed, 0);
    Tensor::matrix(n, d, (0..n * d).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect()).unwrap()
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = classifier(3);
    let id = save_model(dir.path(), &Model::Classifier(m.clone()), &json!({"seed": 3})).unwrap();
    let (back, id2) = load_classifier(dir.path()).unwrap();
    assert_eq!(id, id2);
    let x = random_inputs(100, 6, 9);
    let a = m.network().forward(&x).unwrap();
    let b = back.network().forward(&x).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));

    let ts = two_stage();
    let dir2 = tempfile::tempdir().unwrap();
    save_model(dir2.path(), &Model::TwoStage(ts.clone()), &json!(null)).unwrap();
    let (back, _) = load_two_stage(dir2.path()).unwrap();
    assert_eq!(back, ts);
    assert!(load_classifier(dir2.path()).is_err());
}

#[test]
fn model_ids_track_weights() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ia = save_model(a.path(), &Model::Classifier(classifier(3)), &json!({"x": 1})).unwrap();
    let ib = save_model(b.path(), &Model::Classifier(classifier(3)), &json!({"x": 2})).unwrap();
    let ic = save_model(c.path(), &Model::Classifier(classifier(4)), &json!({"x": 1})).unwrap();
    assert_eq!(ia, ib);
    assert_ne!(ia, ic);
}

#[test]
fn missing_tensor_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &Model::Vae(vae(6, 2, false, Likelihood::Bernoulli, 5)), &json!(null)).unwrap();
    fs::remove_file(dir.path().join("decoder.layer1.bias.mten")).unwrap();
    let err = load_model(dir.path()).unwrap_err().to_string();
    assert!(err.contains("decoder.layer1.bias.mten") && err.contains("decoder.1"), "{err}");
}

fn edit_manifest(dir: &Path, f: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("manifest.json");
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
}

#[test]
fn unknown_activation_and_shape_mismatch_name_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &Model::Classifier(classifier(1)), &json!(null)).unwrap();
    edit_manifest(dir.path(), |v| v["layers"][1]["activation"] = json!("swish"));
    let err = load_model(dir.path()).unwrap_err().to_string();
    assert!(err.contains("layers.1") && err.contains("swish"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &Model::Classifier(classifier(1)), &json!(null)).unwrap();
    edit_manifest(dir.path(), |v| v["layers"][0]["out"] = json!(9));
    let err = load_model(dir.path()).unwrap_err().to_string();
    assert!(err.contains("layers.0"), "{err}");
}

#[test]
fn mismatched_stages_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &Model::TwoStage(two_stage()), &json!(null)).unwrap();
    let other = tempfile::tempdir().unwrap();
    save_model(other.path(), &Model::Vae(vae(4, 2, true, Likelihood::Gaussian { variance: 0.5 }, 8)), &json!(null))
        .unwrap();
    // Swap in a second stage whose data width is 4, not 3.
    let stage2: serde_json::Value =
        serde_json::from_slice(&fs::read(other.path().join("manifest.json")).unwrap()).unwrap();
    for entry in fs::read_dir(other.path()).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().into_string().unwrap();
        if name.ends_with(".mten") {
            fs::copy(entry.path(), dir.path().join(format!("stage2.{name}"))).unwrap();
        }
    }
    edit_manifest(dir.path(), |v| {
        let mut s = stage2.clone();
        for side in ["encoder", "decoder"] {
            for l in s[side].as_array_mut().unwrap() {
                for key in ["weights", "bias"] {
                    let f = l[key].as_str().unwrap().to_string();
                    l[key] = json!(format!("stage2.{f}"));
                }
            }
        }
        let obj = s.as_object_mut().unwrap();
        obj.remove("kind");
        obj.remove("format_version");
        obj.remove("provenance");
        v["stage2"] = s;
    });
    let err = load_model(dir.path()).unwrap_err();
    assert!(matches!(err, StoreError::Format { .. }), "{err}");
}

fn sample_report() -> CoverageReport {
    let params = CoverageParams {
        sections: Some(3),
        latent_dim: Some(2),
        t: None,
        nc_threshold: None,
    };
    let mut r = CoverageReport::new(Criterion::Mcc, params, 9);
    for (o, l) in [(4, 0), (4, 0), (0, 1), (8, 2), (4, 1)] {
        r.record(o, Some(l));
    }
    r.provenance = Provenance {
        suite_id: "suite-a".into(),
        model_id: "0123456789abcdef".into(),
        seed: Some(7),
    };
    r
}

#[test]
fn report_reserialization_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let r = sample_report();
    write_report(&path, &r).unwrap();
    let first = fs::read(&path).unwrap();
    let back = read_report(&path).unwrap();
    assert_eq!(back, r);
    write_report(&path, &back).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(to_canonical(&v).unwrap(), first);
    check_golden("report_mcc.json", &first);
}

#[test]
fn tampered_report_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_report(&path, &sample_report()).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("\"covered_count\":3", "\"covered_count\":4");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_report(&path), Err(StoreError::Format { .. })));
}

#[test]
fn profile_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let p = ActivationProfile::new(vec![2, 1], vec![-1.0, 0.0, 0.25], vec![1.0, 0.5, 0.25]).unwrap();
    write_profile(&path, &p, &json!({"data": "x"})).unwrap();
    let (back, prov) = read_profile(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(prov["data"], "x");
    check_golden("profile.json", &fs::read(&path).unwrap());

    let bad = fs::read_to_string(&path).unwrap().replace("[1.0,0.5,0.25]", "[1.0,-0.5,0.25]");
    fs::write(&path, bad).unwrap();
    assert!(read_profile(&path).is_err());
}

#[test]
fn suite_directory_round_trip() {
    let ts = two_stage();
    let m = classifier(11);
    let mut cfg = GenConfig::new(12, 42);
    cfg.dedup_distance = 0.05;
    let suite = generate_suite(&ts, &m, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_suite(dir.path(), &suite, 6, 2, &json!({"vae_id": "a", "model_id": "b"})).unwrap();
    let files = read_suite(dir.path()).unwrap();
    let n = suite.cases.len();
    assert_eq!(files.rows.len(), n);
    assert_eq!(files.meta.config.seed, 42);
    assert_eq!(files.meta.stats, suite.stats);
    assert_eq!(files.inputs.shape(), &[n, 6]);
    for (row, case) in files.rows.iter().zip(&suite.cases) {
        assert_eq!((row.expected, row.predicted), (case.expected, case.predicted));
        assert!((row.probability - case.probability).abs() < 1e-8);
    }
    for (got, case) in files.latents.iter_rows().zip(&suite.cases) {
        assert_eq!(got, case.latent.values());
    }
    let csv = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(csv.lines().count(), n + 1);

    let again = tempfile::tempdir().unwrap();
    write_suite(again.path(), &generate_suite(&ts, &m, &cfg).unwrap(), 6, 2, &json!({"vae_id": "a", "model_id": "b"}))
        .unwrap();
    for f in ["tests.mten", "latents.mten", "labels.csv", "meta.json"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn golden_suite_directory() {
    use manifold_core::generation::{GenStats, Suite, SuiteStatus, TestCase};
    use manifold_core::manifold::{LatentPoint, Stage};
    let cases = (0..3)
        .map(|i| TestCase {
            attempt: 5 * i as u64 + 1,
            input: (0..4).map(|p| (i * 4 + p) as f64 / 16.0).collect(),
            expected: i % 2,
            latent: LatentPoint::new(vec![0.5 * i as f64, -1.25], Stage::Second).unwrap(),
            predicted: 1 - i % 2,
            probability: 0.6 + 0.1 * i as f64 / 3.0,
        })
        .collect();
    let suite = Suite {
        cases,
        stats: GenStats {
            attempts: 14,
            fault_attempts: 4,
            duplicate_rejections: 1,
            accepted: 3,
        },
        status: SuiteStatus::Partial,
        config: GenConfig::new(5, 99),
    };
    let dir = tempfile::tempdir().unwrap();
    write_suite(dir.path(), &suite, 4, 2, &json!({"model_id": "m", "vae_id": "v"})).unwrap();
    for f in ["tests.mten", "latents.mten", "labels.csv", "meta.json"] {
        check_golden(&format!("suite/{f}"), &fs::read(dir.path().join(f)).unwrap());
    }
    let files = read_suite(golden("suite")).unwrap();
    assert_eq!(files.meta.shortfall, 2);
    let again = tempfile::tempdir().unwrap();
    write_suite(again.path(), &files.to_suite().unwrap(), 4, 2, &files.meta.provenance).unwrap();
    for f in ["tests.mten", "latents.mten", "labels.csv", "meta.json"] {
        assert_eq!(fs::read(again.path().join(f)).unwrap(), fs::read(golden("suite").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unwritable_destination_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let err = write_report(blocker.join("r.json"), &sample_report()).unwrap_err();
    assert!(matches!(err, StoreError::Io { .. }), "{err}");
}

#[test]
fn nine_digit_formatting() {
    assert_eq!(significant(1.0, 9), "1");
    assert_eq!(significant(0.123456789123, 9), "0.123456789");
    assert_eq!(significant(2.0 / 3.0, 9), "0.666666667");
    assert_eq!(significant(1e-12, 9), "0.000000000001");
    assert_eq!(significant(1234.56789, 6), "1234.57");
}

fn tiny_images() -> (Tensor, Vec<usize>) {
    let px = [0u8, 255, 128, 64, 1, 2, 3, 254];
    let t = Tensor::matrix(2, 4, px.iter().map(|&p| f64::from(p) / 255.0).collect()).unwrap();
    (t, vec![7, 3])
}

#[test]
fn golden_idx_and_tensors() {
    let (images, labels) = tiny_images();
    check_golden("images.idx", &encode_images(&images, 2, 2));
    check_golden("labels.idx", &encode_labels(&labels));
    let (x, y) = read_idx(golden("images.idx"), golden("labels.idx")).unwrap();
    assert_eq!(y, labels);
    assert_eq!(x.shape(), &[2, 4]);
    assert_eq!(x.row(0)[0], 0.0);
    assert_eq!(x.row(0)[1], 1.0);

    let m = Tensor::matrix(2, 3, vec![0.1, -2.5, 1e300, -0.0, 3.0, f64::MIN_POSITIVE]).unwrap();
    let p = Path::new("mem");
    check_golden("matrix_f64.mten", &encode_tensor(&m, DType::F64, p).unwrap());
    check_golden("scalar_f32.mten", &encode_tensor(&Tensor::scalar(0.5), DType::F32, p).unwrap());
    check_golden("vector_u8.mten", &encode_tensor(&Tensor::vector(vec![0.0, 1.0, 255.0]), DType::U8, p).unwrap());
    let back = read_tensor(golden("matrix_f64.mten")).unwrap();
    assert_eq!(back, m);
    let (s, dt) = decode_tensor(&fs::read(golden("scalar_f32.mten")).unwrap(), p).unwrap();
    assert_eq!((s.shape().len(), s.data()[0], dt), (0, 0.5, DType::F32));
}

#[test]
fn golden_model_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng::stream(1, 0);
    let net = Network::init(2, &[(2, Activation::Sigmoid), (2, Activation::Identity)], &mut r).unwrap();
    save_model(dir.path(), &Model::Classifier(ModelUnderTest::new(net, 2).unwrap()), &json!({"seed": 1})).unwrap();
    check_golden("model/manifest.json", &fs::read(dir.path().join("manifest.json")).unwrap());
    for i in 0..2 {
        for part in ["weights", "bias"] {
            let name = format!("model/layer{i}.{part}.mten");
            check_golden(&name, &fs::read(dir.path().join(&name[6..])).unwrap());
        }
    }
    assert!(load_classifier(golden("model")).is_ok());
}

/// Hand-built corrupt IDX files, each of which must be refused.
fn corrupt_fixtures() -> Vec<(&'static str, Vec<u8>)> {
    let (images, labels) = tiny_images();
    let good = encode_images(&images, 2, 2);
    let mut bad_magic = good.clone();
    bad_magic[2] = 0x0D;
    let mut truncated_payload = good.clone();
    truncated_payload.pop();
    let mut trailing = good.clone();
    trailing.push(0);
    vec![
        ("bad_magic.idx", bad_magic),
        ("labels_as_images.idx", encode_labels(&labels)),
        ("truncated_header.idx", good[..10].to_vec()),
        ("truncated_payload.idx", truncated_payload),
        ("trailing_bytes.idx", trailing),
    ]
}

#[test]
fn corrupt_idx_fixtures_rejected() {
    for (name, bytes) in corrupt_fixtures() {
        let name = format!("corrupt/{name}");
        check_golden(&name, &bytes);
        let path = golden(&name);
        let err = parse_images(&fs::read(&path).unwrap(), &path).unwrap_err();
        assert!(matches!(err, StoreError::Format { .. }), "{name}: {err}");
    }
    let (images, _) = tiny_images();
    assert!(parse_labels(&encode_images(&images, 2, 2), Path::new("mem")).is_err());
}

#[test]
fn duplicate_hits_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let mut hits = BTreeMap::new();
    hits.insert(1u64, 2u64);
    let r = CoverageReport::from_parts(
        Criterion::Nc,
        CoverageParams::default(),
        4,
        hits,
        BTreeMap::new(),
        Provenance::default(),
    )
    .unwrap();
    write_report(&path, &r).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("[[1,2]]", "[[1,2],[1,3]]");
    fs::write(&path, text).unwrap();
    assert!(read_report(&path).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn report_json_round_trips(
            events in proptest::collection::vec((0u64..50, proptest::option::of(0usize..10)), 0..60),
            theta in proptest::option::of(-1e3f64..1e3),
        ) {
            let params = CoverageParams { nc_threshold: theta, ..CoverageParams::default() };
            let mut r = CoverageReport::new(Criterion::Nc, params, 50);
            for (o, l) in events {
                r.record(o, l);
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.json");
            write_report(&path, &r).unwrap();
            let bytes = fs::read(&path).unwrap();
            let back = read_report(&path).unwrap();
            prop_assert_eq!(&back, &r);
            write_report(&path, &back).unwrap();
            prop_assert_eq!(fs::read(&path).unwrap(), bytes);
        }

        #[test]
        fn f64_tensors_round_trip_bit_exact(data in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40)) {
            let t = Tensor::vector(data);
            let p = Path::new("mem");
            let (back, _) = decode_tensor(&encode_tensor(&t, DType::F64, p).unwrap(), p).unwrap();
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.shape(), t.shape());
        }
    }
}
