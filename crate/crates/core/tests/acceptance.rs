//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! Criterion 9 runs only when `RACNN_MOVIE_REVIEWS` names a corpus file in
//! the JSON-lines corpus format; it never gates.

mod common;

use std::collections::HashMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use racnn::cli;
use racnn::eval::{generate_synthetic, rationale_precision_at_k, SyntheticSpec};
use racnn::gradcheck::{gradcheck, TOLERANCE};
use racnn::graph::Graph;
use racnn::models::checkpoint::Checkpoint;
use racnn::models::{
    atcnn_forward, forward_document, predict, rank_rationales, ForwardOptions, ModelKind, ModelParams, Trainable,
};
use racnn::tensor::{conv1d_bank, conv1d_valid, Tensor};
use racnn::text::{build_vocabulary, index_corpus, load_corpus, write_corpus, Document, SentenceLabel};
use racnn::train::{
    adadelta_update, balanced_downsample, evaluate_accuracy, init_params, sentence_pool, split_validation,
    train_document_phase, train_model, train_sentence_phase, Adadelta, TrainConfig, Workers,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

fn gradient_fidelity() -> Outcome {
    let mut worst: (f64, String) = (0.0, String::new());
    for kind in ModelKind::ALL {
        for seed in 0..3 {
            let report = gradcheck(kind, seed, None).map_err(|e| e.to_string())?;
            let w = report.worst().expect("every model has parameters");
            if w.max_rel_error > worst.0 || worst.1.is_empty() {
                worst = (w.max_rel_error, format!("{kind} seed {seed} {}", w.name));
            }
            if !report.passed() {
                return Err(format!("{kind} seed {seed}: {} relative error {:.3e}", w.name, w.max_rel_error));
            }
        }
    }
    Ok(format!("4 models x 3 seeds, max relative error {:.2e} ({}) < {TOLERANCE:e}", worst.0, worst.1))
}

fn pre_dropout_doc_vector(p: &ModelParams, arch: ModelKind, doc: &Document, gates: Option<&[f64]>) -> Vec<f64> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g, Trainable::ALL);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let opts = ForwardOptions {
        forced_gates: gates,
        ..ForwardOptions::eval()
    };
    let pass = forward_document(&mut g, &bound, arch, doc, &opts, &mut rng).unwrap();
    g.value(pass.doc_vector).data().to_vec()
}

fn mechanism_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut gate_diff = 0.0f64;
    for seed in 0..200 {
        let p = random_params(ModelKind::RaCnn, seed, 0.5);
        let doc = random_doc(&mut rng, 1..=8);
        let ones = vec![1.0; doc.sentences.len()];
        let ra = pre_dropout_doc_vector(&p, ModelKind::RaCnn, &doc, Some(&ones));
        let plain = pre_dropout_doc_vector(&p, ModelKind::DocCnn, &doc, None);
        gate_diff = gate_diff.max(max_abs_diff(&ra, &plain));
    }
    let mut alpha_dev = 0.0f64;
    for seed in 0..1000 {
        let p = random_params(ModelKind::AtCnn, seed % 50, 1.0);
        let doc = random_doc(&mut rng, 1..=10);
        let alpha = atcnn_forward(&p, &doc).map_err(|e| e.to_string())?.attention.unwrap();
        alpha_dev = alpha_dev.max((alpha.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        gate_diff <= 1e-12 && alpha_dev <= 1e-10,
        format!("unit gates vs doc-cnn max diff {gate_diff:.1e}; |sum(alpha) - 1| <= {alpha_dev:.1e} over 1000 documents"),
        format!("unit gates diff {gate_diff:e} (limit 1e-12), alpha deviation {alpha_dev:e} (limit 1e-10)"),
    )
}

fn feature_map_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 5;
    let sentence = Tensor::uniform(&[7, d], 1.0, &mut rng);
    let mut lengths = Vec::new();
    for h in [2usize, 3] {
        let single = conv1d_valid(&sentence, &Tensor::uniform(&[h, d], 1.0, &mut rng), 0.0).map_err(|e| e.to_string())?;
        let bank = conv1d_bank(&sentence, &Tensor::uniform(&[4, h, d], 1.0, &mut rng), &Tensor::zeros(&[4]))
            .map_err(|e| e.to_string())?;
        if bank.shape() != [4, single.len()] {
            return Err(format!("bank output {:?} for height {h}", bank.shape()));
        }
        lengths.push(single.len());
    }
    check(
        lengths == [6, 5],
        format!("heights 2 and 3 over 7 tokens give lengths {lengths:?}"),
        format!("lengths {lengths:?}, expected [6, 5]"),
    )
}

fn cascade_protocol() -> Outcome {
    let config = TrainConfig {
        embedding_dim: 16,
        sentence_epochs: 2,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let (vocab, docs) = indexed(&SyntheticSpec::default(), &config);
    let refs: Vec<&Document> = docs.iter().collect();
    let (train, val) = refs.split_at(540);
    let workers = Workers::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = init_params(ModelKind::RaCnn, &config, vocab.len(), None, &mut rng).map_err(|e| e.to_string())?;
    train_sentence_phase(&mut params, train, &config, &workers, &mut rng).map_err(|e| e.to_string())?;
    let phase_one = params.clone();
    let fit = train_document_phase(
        params,
        ModelKind::RaCnn,
        train,
        val,
        0.0,
        Trainable::DOCUMENT_PHASE,
        &config,
        &workers,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let after = fit.params;
    let frozen = after.sentence_head.as_ref().unwrap().bit_eq(phase_one.sentence_head.as_ref().unwrap());
    let e_changed = count_changed(&after.embeddings, &phase_one.embeddings);
    let c_changed: usize = after
        .filters
        .weights
        .iter()
        .chain(&after.filters.biases)
        .zip(phase_one.filters.weights.iter().chain(&phase_one.filters.biases))
        .map(|(a, b)| count_changed(a, b))
        .sum();
    check(
        frozen && e_changed > 0 && c_changed > 0,
        format!("W_sen bit-identical; {e_changed} entries of E and {c_changed} of C changed"),
        format!("W_sen frozen: {frozen}, E changed: {e_changed}, C changed: {c_changed}"),
    )
}

fn count_changed(a: &Tensor, b: &Tensor) -> usize {
    a.data().iter().zip(b.data()).filter(|(x, y)| x.to_bits() != y.to_bits()).count()
}

/// Settings for the separation run.
fn separation_config() -> TrainConfig {
    TrainConfig {
        embedding_dim: 32,
        max_epochs: 50,
        patience: 10,
        sentence_epochs: 10,
        sentence_dropout_grid: vec![0.0, 0.5],
        workers: 1,
        ..TrainConfig::default()
    }
}

fn planted_rationale_separation() -> Outcome {
    const REPLICATIONS: u64 = 5;
    let budget = Duration::from_secs(15 * 60);
    let start = Instant::now();
    let spec = SyntheticSpec::default();
    let config = separation_config();
    let (vocab, docs) = indexed(&spec, &config);
    let workers = Workers::new(1).unwrap();
    let kinds = [ModelKind::RaCnn, ModelKind::DocCnn, ModelKind::AtCnn];
    let mut accuracy: HashMap<ModelKind, Vec<f64>> = HashMap::new();
    let mut precision = Vec::new();
    for r in 0..REPLICATIONS {
        let mut split_rng = ChaCha8Rng::seed_from_u64(1000 + r);
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut split_rng);
        let (test_idx, rest) = order.split_at(docs.len() / 5);
        let (train_idx, val_idx) = split_validation(rest, config.validation_fraction, &mut split_rng).unwrap();
        let pick = |idx: &[usize]| idx.iter().map(|&i| &docs[i]).collect::<Vec<_>>();
        let (train, val, test) = (pick(&train_idx), pick(&val_idx), pick(test_idx));
        for kind in kinds {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + r);
            let model = train_model(kind, &train, &val, vocab.len(), None, &config, &workers, &mut rng)
                .map_err(|e| e.to_string())?;
            let acc = evaluate_accuracy(&model.params, kind, &test, &workers).map_err(|e| e.to_string())?;
            accuracy.entry(kind).or_default().push(acc);
            if kind == ModelKind::RaCnn {
                let mut total = 0.0;
                for d in &test {
                    let ranked = rank_rationales(&predict(&model.params, d).unwrap()).unwrap();
                    total += rationale_precision_at_k(&ranked, &d.rationale_mask, 1).unwrap();
                }
                precision.push(total / test.len() as f64);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ra, doc, at) = (
        mean(&accuracy[&ModelKind::RaCnn]),
        mean(&accuracy[&ModelKind::DocCnn]),
        mean(&accuracy[&ModelKind::AtCnn]),
    );
    let p1 = mean(&precision);
    let elapsed = start.elapsed();
    let summary = format!(
        "test accuracy over {REPLICATIONS} replications: ra-cnn {ra:.4}, doc-cnn {doc:.4}, at-cnn {at:.4}; \
         ra-cnn precision@1 {p1:.4}; {:.0}s",
        elapsed.as_secs_f64()
    );
    check(
        ra > doc && ra > at && ra >= 0.90 && p1 >= 0.80 && elapsed <= budget,
        summary.clone(),
        summary,
    )
}

fn optimizer_correctness() -> Outcome {
    let (mut sg, mut su) = (0.0, 0.0);
    let step = adadelta_update(1.0, &mut sg, &mut su, 0.95, 1e-6);
    // first step from zero accumulators: -sqrt(eps) / sqrt((1 - rho) g^2 + eps) * g
    let derived = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
    let first_ok = (step - derived).abs() <= 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut params = random_params(ModelKind::RaCnn, 6, 0.5);
    let mut opt = Adadelta::new(&params, 0.95, 1e-6);
    let mut scalar = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..10_000 {
        let scale = 10f64.powi(rng.gen_range(-6..4));
        let grads: Vec<Option<Tensor>> = params
            .tensors()
            .iter()
            .map(|(_, t)| Some(Tensor::uniform(t.shape(), scale, &mut rng)))
            .collect();
        opt.step(&mut params, &grads).map_err(|e| format!("step {i}: {e}"))?;
        let g = rng.gen_range(-1.0..1.0) * scale;
        scalar.0 += adadelta_update(g, &mut scalar.1, &mut scalar.2, 0.95, 1e-6);
    }
    let finite = params.is_finite() && scalar.0.is_finite();
    let nonneg = opt
        .sq_grad()
        .iter()
        .chain(opt.sq_update())
        .all(|t| t.data().iter().all(|&v| v >= 0.0 && v.is_finite()))
        && scalar.1 >= 0.0
        && scalar.2 >= 0.0;
    check(
        first_ok && finite && nonneg,
        format!("first step {step:.10} (derived {derived:.10}); 10^4 steps finite with nonnegative accumulators"),
        format!("first step {step} vs {derived}; finite {finite}; accumulators nonnegative {nonneg}"),
    )
}

fn balanced_sampler() -> Outcome {
    let (_, docs) = indexed(&SyntheticSpec::default(), &TrainConfig::default());
    let refs: Vec<&Document> = docs.iter().collect();
    let pool = sentence_pool(&refs);
    let mut sizes = [0usize; 3];
    for s in &pool {
        sizes[s.label.index()] += 1;
    }
    let m = *sizes.iter().min().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let epochs = 100;
    let mut hits: HashMap<(usize, usize), usize> = HashMap::new();
    for e in 0..epochs {
        let sample = balanced_downsample(&pool, |s| s.label, &mut rng).map_err(|e| e.to_string())?;
        for label in SentenceLabel::ALL {
            let n = sample.iter().filter(|s| s.label == label).count();
            if n != m {
                return Err(format!("epoch {e}: {n} {} sentences, expected {m}", label.name()));
            }
        }
        for s in sample {
            *hits.entry((s.doc, s.sentence)).or_default() += 1;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for label in SentenceLabel::ALL {
        let members: Vec<_> = pool.iter().filter(|s| s.label == label).collect();
        let count = |s: &&racnn::train::SentenceRef| *hits.get(&(s.doc, s.sentence)).unwrap_or(&0);
        if members.len() == m {
            if members.iter().any(|s| count(s) != epochs) {
                return Err(format!("a {} sentence was skipped in the smallest class", label.name()));
            }
            continue;
        }
        let expected = (epochs * m) as f64 / members.len() as f64;
        let chi2: f64 = members.iter().map(|s| (count(s) as f64 - expected).powi(2) / expected).sum();
        let df = (members.len() - 1) as f64;
        worst = worst.max((chi2 - df) / (2.0 * df).sqrt());
    }
    check(
        worst <= 4.0,
        format!("{epochs} epochs of {m} per class; worst coverage z-score {worst:.2}"),
        format!("coverage z-score {worst:.2} exceeds 4"),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path();
    let spec = SyntheticSpec {
        num_docs: 45,
        ..SyntheticSpec::default()
    };
    write_corpus(p.join("corpus.jsonl"), &generate_synthetic(&spec).unwrap()).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        embedding_dim: 8,
        maps_per_height: 4,
        max_epochs: 3,
        sentence_epochs: 2,
        sentence_dropout_grid: vec![0.0, 0.5],
        folds: 3,
        replications: 2,
        ..TrainConfig::default()
    };
    fs::write(p.join("config.toml"), config.to_toml()).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for out in ["run1", "run2"] {
        let path = |name: &str| p.join(name).display().to_string();
        let args = [
            "racnn".to_string(),
            "cv".into(),
            "--corpus".into(),
            path("corpus.jsonl"),
            "--model".into(),
            "ra-cnn".into(),
            "--config".into(),
            path("config.toml"),
            "--out".into(),
            path(out),
        ];
        let code = cli::run(&args, &mut std::io::sink());
        if code != 0 {
            return Err(format!("cv exited with {code}"));
        }
        runs.push(fs::read(p.join(out).join("metrics.jsonl")).map_err(|e| e.to_string())?);
    }
    let identical = runs[0] == runs[1] && !runs[0].is_empty();

    let texts = load_corpus(p.join("corpus.jsonl")).unwrap();
    let vocab = build_vocabulary(&texts, config.vocab_max_size).unwrap();
    let docs = index_corpus(&texts, &vocab, config.padding_policy());
    let refs: Vec<&Document> = docs.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = train_model(ModelKind::RaCnn, &refs[..40], &refs[40..], vocab.len(), None, &config, &Workers::new(1).unwrap(), &mut rng)
        .map_err(|e| e.to_string())?;
    let ckpt = Checkpoint {
        params: model.params,
        vocab,
        config,
        sentence_dropout: model.sentence_dropout,
    };
    ckpt.save(p.join("m.ckpt")).map_err(|e| e.to_string())?;
    let back = Checkpoint::load(p.join("m.ckpt")).map_err(|e| e.to_string())?;
    let bit_exact = back
        .params
        .tensors()
        .iter()
        .zip(ckpt.params.tensors().iter())
        .all(|((_, a), (_, b))| a.bit_eq(b))
        && back.to_bytes().unwrap() == fs::read(p.join("m.ckpt")).unwrap();
    check(
        identical && bit_exact,
        format!("two cv runs wrote identical metrics ({} bytes); checkpoint round-trip bit-exact", runs[0].len()),
        format!("metrics identical: {identical}; checkpoint bit-exact: {bit_exact}"),
    )
}

/// Directional check on a real rationale corpus, when one is provided.
fn movie_review_direction() -> Option<Outcome> {
    let path = std::env::var_os("RACNN_MOVIE_REVIEWS")?;
    Some((|| {
        let texts = load_corpus(&path).map_err(|e| e.to_string())?;
        let config = TrainConfig::default();
        let vocab = build_vocabulary(&texts, config.vocab_max_size).map_err(|e| e.to_string())?;
        let docs = index_corpus(&texts, &vocab, config.padding_policy());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let folds = racnn::train::fold_assignments(docs.len(), 9, &mut rng).map_err(|e| e.to_string())?;
        let test: Vec<&Document> = folds[0].iter().map(|&i| &docs[i]).collect();
        let rest: Vec<usize> = folds[1..].concat();
        let (tr, va) = split_validation(&rest, config.validation_fraction, &mut rng).map_err(|e| e.to_string())?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| &docs[i]).collect::<Vec<_>>();
        let workers = Workers::new(std::thread::available_parallelism().map_or(1, |n| n.get())).unwrap();
        let mut acc = Vec::new();
        for kind in [ModelKind::RaCnn, ModelKind::Cnn] {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            let m = train_model(kind, &pick(&tr), &pick(&va), vocab.len(), None, &config, &workers, &mut r)
                .map_err(|e| e.to_string())?;
            acc.push(evaluate_accuracy(&m.params, kind, &test, &workers).map_err(|e| e.to_string())?);
        }
        let msg = format!("fold 1 of 9: ra-cnn {:.4}, cnn {:.4}", acc[0], acc[1]);
        check(acc[0] > acc[1], msg.clone(), msg)
    })())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("mechanism identity", mechanism_identity),
        ("feature-map geometry", feature_map_geometry),
        ("cascade protocol", cascade_protocol),
        ("planted-rationale separation", planted_rationale_separation),
        ("optimizer correctness", optimizer_correctness),
        ("balanced sampler", balanced_sampler),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    match movie_review_direction() {
        None => println!("SKIP 9 movie-review direction (optional): RACNN_MOVIE_REVIEWS not set"),
        Some(Ok(detail)) => println!("PASS 9 movie-review direction (optional): {detail}"),
        Some(Err(detail)) => println!("FAIL 9 movie-review direction (optional, not gating): {detail}"),
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} gating criteria failed");
        ExitCode::FAILURE
    }
}
