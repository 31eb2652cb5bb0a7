use std::fmt::Write as _;

use manifold_core::adequacy::{
    mcc_measure, nbc_measure, nc_measure, profile_activations, tway_measure, CoverageReport, Provenance,
    SectionGrid, DEFAULT_NC_THRESHOLD,
};
use manifold_core::generation::{
    train_classifier, Attempt, ClassifierConfig, FitnessWeights, GenConfig, Generator, SuiteBuilder,
};
use manifold_core::manifold::{
    train_two_stage, train_vae, EpochReport, Likelihood, Stage, TwoStageConfig, VaeArchitecture, VaeConfig,
};
use manifold_core::metrics::{extract_features, fit_gaussian, frechet_distance, FeatureExtractor};
use manifold_core::monitor::{Monitor, MonitorConfig};
use serde::Serialize;
use serde_json::{json, Value};

use super::args::*;
use super::data::{load, Dataset};
use super::{CliError, Result};
use crate::store::fs::write_atomic;
use crate::store::json::{significant, to_canonical, write_json};
use crate::store::model::{load_classifier, load_encoder, load_two_stage, save_model, Model};
use crate::store::profile::{read_profile, write_profile};
use crate::store::report::{read_report, write_report};
use crate::store::suite::write_suite;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainVae(a) => train_vae_cmd(a),
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::Coverage(a) => coverage(a),
        Command::Assoc(a) => assoc(a),
        Command::Generate(a) => generate(a),
        Command::Monitor(a) => monitor(a),
        Command::Frechet(a) => frechet(a),
        Command::Profile(a) => profile(a),
    }
}

/// Prints the fully resolved invocation and returns it for provenance,
/// minus the output location and worker count, which do not affect results.
fn announce<A: Serialize>(name: &str, args: &A) -> Result<Value> {
    let mut v = serde_json::to_value(args).map_err(|e| CliError::usage(e.to_string()))?;
    if let Value::Object(m) = &mut v {
        m.insert("command".into(), Value::String(name.into()));
    }
    let text = to_canonical(&v).map_err(|e| CliError::usage(e.to_string()))?;
    println!("config {}", String::from_utf8_lossy(&text));
    if let Value::Object(m) = &mut v {
        m.remove("out");
        m.remove("workers");
    }
    Ok(v)
}

fn log_epoch(r: &EpochReport) {
    let stage = if r.stage == Stage::First { 1 } else { 2 };
    println!(
        "stage {stage} epoch {} loss {} reconstruction {} kl {}",
        r.epoch,
        significant(r.loss, 6),
        significant(r.reconstruction, 6),
        significant(r.kl, 6)
    );
}

fn train_vae_cmd(mut a: TrainVaeArgs) -> Result<()> {
    if a.conditional && a.labels.is_none() {
        return Err(CliError::usage("--conditional needs --labels"));
    }
    if a.stages == 2 {
        a.stage2_latent.get_or_insert(a.latent);
        a.stage2_epochs.get_or_insert(a.epochs);
    }
    let invocation = &announce("train-vae", &a)?;
    let ds = load(&a.images, a.labels.as_deref(), a.limit)?;
    let labels = if a.conditional { ds.labels.as_deref() } else { None };
    let classes = if a.conditional { a.classes } else { 0 };
    let stage1 = VaeConfig {
        architecture: VaeArchitecture {
            data_dim: ds.inputs.cols(),
            latent_dim: a.latent,
            hidden: a.hidden.clone(),
            activation: a.activation,
            conditional: a.conditional,
            num_classes: classes,
            likelihood: Likelihood::Bernoulli,
        },
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let provenance = json!({ "invocation": invocation, "data_id": ds.id() });
    let model = if a.stages == 1 {
        Model::Vae(train_vae(&ds.inputs, labels, &stage1, log_epoch)?.model)
    } else {
        let stage2 = VaeConfig {
            architecture: VaeArchitecture {
                data_dim: a.latent,
                latent_dim: a.stage2_latent.unwrap_or(a.latent),
                hidden: a.stage2_hidden.clone(),
                activation: a.activation,
                conditional: a.conditional,
                num_classes: classes,
                likelihood: Likelihood::Gaussian {
                    variance: a.stage2_variance,
                },
            },
            epochs: a.stage2_epochs.unwrap_or(a.epochs),
            ..stage1.clone()
        };
        let cfg = TwoStageConfig { stage1, stage2 };
        Model::TwoStage(train_two_stage(&ds.inputs, labels, &cfg, log_epoch)?.model)
    };
    let id = save_model(&a.out, &model, &provenance)?;
    println!("saved {} model {id} to {}", model.kind(), a.out.display());
    Ok(())
}

fn train_classifier_cmd(a: TrainClassifierArgs) -> Result<()> {
    let invocation = &announce("train-classifier", &a)?;
    let ds = load(&a.images, Some(&a.labels), a.limit)?;
    let labels = ds.labels.as_deref().unwrap_or(&[]);
    let cfg = ClassifierConfig {
        hidden: a.hidden.clone(),
        activation: a.activation,
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let m = train_classifier(&ds.inputs, labels, a.classes, &cfg, |e, loss| {
        println!("epoch {e} loss {}", significant(loss, 6));
    })?;
    println!("training accuracy {}", significant(m.accuracy(&ds.inputs, labels)?, 6));
    let id = save_model(&a.out, &Model::Classifier(m), &json!({ "invocation": invocation, "data_id": ds.id() }))?;
    println!("saved classifier model {id} to {}", a.out.display());
    Ok(())
}

fn forbid(flags: &[(&str, bool)], criterion: &str) -> Result<()> {
    match flags.iter().find(|(_, set)| *set) {
        Some((flag, _)) => Err(CliError::usage(format!("{flag} does not apply to --criterion {criterion}"))),
        None => Ok(()),
    }
}

fn require<'a, T>(v: &'a Option<T>, flag: &str, criterion: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::usage(format!("--criterion {criterion} needs {flag}")))
}

fn coverage(mut a: CoverageArgs) -> Result<()> {
    let crit = match a.criterion {
        CriterionArg::Mcc => "mcc",
        CriterionArg::Tway => "tway",
        CriterionArg::Nc => "nc",
        CriterionArg::Nbc => "nbc",
    };
    let latent_flags = [("--vae", a.vae.is_some()), ("--k", a.k.is_some()), ("--t", a.t.is_some())];
    let neuron_flags = [
        ("--mut", a.model.is_some()),
        ("--nc-threshold", a.nc_threshold.is_some()),
        ("--profile", a.profile.is_some()),
    ];
    match a.criterion {
        CriterionArg::Mcc => {
            forbid(&neuron_flags, crit)?;
            forbid(&latent_flags[2..], crit)?;
            require(&a.vae, "--vae", crit)?;
        }
        CriterionArg::Tway => {
            forbid(&neuron_flags, crit)?;
            require(&a.vae, "--vae", crit)?;
            require(&a.t, "--t", crit)?;
        }
        CriterionArg::Nc => {
            forbid(&latent_flags, crit)?;
            forbid(&neuron_flags[2..], crit)?;
            require(&a.model, "--mut", crit)?;
        }
        CriterionArg::Nbc => {
            forbid(&latent_flags, crit)?;
            forbid(&neuron_flags[1..2], crit)?;
            require(&a.model, "--mut", crit)?;
            require(&a.profile, "--profile", crit)?;
        }
    }
    match a.criterion {
        CriterionArg::Mcc | CriterionArg::Tway => {
            a.k.get_or_insert(3);
        }
        CriterionArg::Nc => {
            a.nc_threshold.get_or_insert(DEFAULT_NC_THRESHOLD);
        }
        CriterionArg::Nbc => {}
    }
    announce("coverage", &a)?;
    let mut ds = load(&a.data.data, a.data.labels.as_deref(), a.data.limit)?;
    if let Some(label) = a.class_filter {
        if ds.labels.is_none() {
            return Err(CliError::usage("--class-filter needs labelled data"));
        }
        ds = ds.filter_label(label);
        println!("class {label}: {} inputs", ds.rows());
    }
    let labels = ds.labels.as_deref();
    let (mut report, model_id): (CoverageReport, String) = match a.criterion {
        CriterionArg::Mcc | CriterionArg::Tway => {
            let (enc, id) = load_encoder(a.vae.as_ref().unwrap())?;
            let grid = SectionGrid::new(enc.latent_dim(), a.k.unwrap_or(3))?;
            let r = match a.t {
                Some(t) => tway_measure(&ds.inputs, labels, &enc, &grid, t)?,
                None => mcc_measure(&ds.inputs, labels, &enc, &grid)?,
            };
            (r, id)
        }
        CriterionArg::Nc => {
            let (m, id) = load_classifier(a.model.as_ref().unwrap())?;
            let theta = a.nc_threshold.unwrap_or(DEFAULT_NC_THRESHOLD);
            (nc_measure(m.network(), &ds.inputs, labels, theta)?, id)
        }
        CriterionArg::Nbc => {
            let (m, id) = load_classifier(a.model.as_ref().unwrap())?;
            let (p, _) = read_profile(a.profile.as_ref().unwrap())?;
            (nbc_measure(m.network(), &ds.inputs, labels, &p)?, id)
        }
    };
    report.provenance = Provenance {
        suite_id: ds.id(),
        model_id,
        seed: None,
    };
    write_report(&a.out, &report)?;
    println!(
        "{crit} coverage {}% ({} of {} obligations, {} inputs)",
        significant(report.percent(), 6),
        report.covered_count(),
        report.obligation_count(),
        ds.rows()
    );
    Ok(())
}

fn assoc(a: AssocArgs) -> Result<()> {
    announce("assoc", &a)?;
    let report = read_report(&a.events)?;
    let v = report.cramers_v()?;
    println!("{} cramers_v {}", report.criterion.name(), significant(v, 6));
    Ok(())
}

/// Evaluates attempt chunks `workers` at a time and offers them in index
/// order, so the suite does not depend on `workers`.
fn run_generator(generator: &Generator<'_>, builder: &mut SuiteBuilder, workers: usize) -> Result<()> {
    let total = generator.chunk_count();
    let mut next = 0;
    while next < total && !builder.is_done() {
        let end = (next + workers as u64).min(total);
        let batches: Vec<manifold_core::Result<Vec<Attempt>>> = if end - next == 1 {
            vec![generator.chunk(next)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (next..end).map(|c| s.spawn(move || generator.chunk(c))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("generation worker panicked"))
                    .collect()
            })
        };
        for batch in batches {
            for attempt in batch? {
                builder.offer(attempt)?;
            }
            if builder.is_done() {
                break;
            }
        }
        next = end;
    }
    Ok(())
}

fn generate(mut a: GenerateArgs) -> Result<()> {
    a.max_attempts.get_or_insert(1000 * a.n as u64);
    let invocation = &announce("generate", &a)?;
    let (vae, vae_id) = load_two_stage(&a.vae)?;
    let (model, model_id) = load_classifier(&a.model)?;
    let cfg = GenConfig {
        count: a.n,
        dedup_distance: a.dedup,
        max_attempts: a.max_attempts.unwrap_or(1000 * a.n as u64),
        mode: a.mode.into(),
        weights: FitnessWeights {
            fault: a.w_fault,
            realism: a.w_real,
        },
        search_steps: a.steps,
        step_scale: a.step_scale,
        seed: a.seed,
    };
    let generator = Generator::new(&vae, &model, cfg.clone())?;
    let mut builder = SuiteBuilder::new(cfg);
    run_generator(&generator, &mut builder, a.workers)?;
    let suite = builder.finish();
    let provenance = json!({
        "invocation": invocation,
        "vae_id": vae_id,
        "model_id": model_id,
        "seed": a.seed,
    });
    write_suite(&a.out, &suite, vae.data_dim(), vae.latent_dim(), &provenance)?;
    let s = suite.stats;
    println!(
        "attempts {} faults {} fault_rate {} duplicates_rejected {} accepted {} status {}",
        s.attempts,
        s.fault_attempts,
        significant(s.fault_rate(), 6),
        s.duplicate_rejections,
        s.accepted,
        if suite.shortfall() == 0 { "complete" } else { "partial" }
    );
    if suite.shortfall() > 0 {
        println!("shortfall {} of {} requested", suite.shortfall(), a.n);
    }
    Ok(())
}

fn monitor(a: MonitorArgs) -> Result<()> {
    announce("monitor", &a)?;
    let (enc, _) = load_encoder(&a.vae)?;
    let cfg = MonitorConfig { threshold: a.threshold };
    let m = Monitor::new(&enc, cfg)?;
    let ds = load(&a.data.data, a.data.labels.as_deref(), a.data.limit)?;
    let judged = m.judge_batch(&ds.inputs)?;
    let mut csv = String::from("index,confidence,verdict\n");
    let mut stats = manifold_core::monitor::StreamStats::default();
    for (i, j) in judged.iter().enumerate() {
        let _ = writeln!(csv, "{i},{},{}", significant(j.confidence, 9), j.verdict.name());
        stats.push(j);
    }
    write_atomic(&a.out, csv.as_bytes())?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| significant(x, 6));
    println!(
        "inputs {} flagged {} flag_rate {} mean_confidence {}",
        stats.count(),
        stats.flagged(),
        fmt(stats.flag_rate()),
        fmt(stats.mean())
    );
    Ok(())
}

fn summary_of(ds: &Dataset, extractor: FeatureExtractor<'_>) -> Result<manifold_core::metrics::GaussianSummary> {
    Ok(fit_gaussian(&extract_features(extractor, &ds.inputs)?)?)
}

fn frechet(a: FrechetArgs) -> Result<()> {
    let invocation = &announce("frechet", &a)?;
    let da = load(&a.a, None, a.limit)?;
    let db = load(&a.b, None, a.limit)?;
    let classifier = a.model.as_ref().map(load_classifier).transpose()?;
    let extractor = match &classifier {
        Some((m, _)) => FeatureExtractor::Penultimate(m.network()),
        None => FeatureExtractor::RawPixels,
    };
    let sa = summary_of(&da, extractor)?;
    let sb = summary_of(&db, extractor)?;
    let d = frechet_distance(&sa, &sb)?;
    println!("frechet {}", significant(d, 6));
    if let Some(out) = &a.out {
        let doc = json!({
            "distance": d,
            "features": if classifier.is_some() { "penultimate" } else { "raw" },
            "model_id": classifier.as_ref().map(|(_, id)| id.clone()),
            "a": { "dim": sa.dim(), "count": sa.count(), "data_id": da.id() },
            "b": { "dim": sb.dim(), "count": sb.count(), "data_id": db.id() },
            "provenance": invocation,
        });
        write_json(out, &doc)?;
    }
    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let invocation = &announce("profile", &a)?;
    let (m, model_id) = load_classifier(&a.model)?;
    let ds = load(&a.data.data, a.data.labels.as_deref(), a.data.limit)?;
    let p = profile_activations(m.network(), &ds.inputs)?;
    let provenance = json!({ "invocation": invocation, "model_id": model_id, "data_id": ds.id() });
    write_profile(&a.out, &p, &provenance)?;
    println!("profiled {} neurons over {} inputs", p.neuron_count(), ds.rows());
    Ok(())
}
