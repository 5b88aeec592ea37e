mod common;

use common::*;
use racnn::models::{ModelKind, Trainable};
use racnn::text::{Document, SentenceLabel};
use racnn::train::{
    balanced_downsample, fold_assignments, init_params, run_cross_validation, train_document_phase, train_model,
    train_sentence_phase, Workers,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn cascade_freezes_sentence_head_and_moves_encoder() {
    let config = quick_config();
    let (vocab, docs) = indexed(&small_spec(60), &config);
    let refs: Vec<&Document> = docs.iter().collect();
    let (train, val) = refs.split_at(50);
    let workers = Workers::new(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = init_params(ModelKind::RaCnn, &config, vocab.len(), None, &mut rng).unwrap();
    let initial = params.clone();
    train_sentence_phase(&mut params, train, &config, &workers, &mut rng).unwrap();
    let phase_one = params.clone();
    assert_ne!(phase_one.sentence_head, initial.sentence_head);

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
    .unwrap();
    let after = fit.params;
    assert!(after.sentence_head.as_ref().unwrap().bit_eq(phase_one.sentence_head.as_ref().unwrap()));
    assert!(!after.embeddings.bit_eq(&phase_one.embeddings));
    let filters_moved = after
        .filters
        .weights
        .iter()
        .zip(&phase_one.filters.weights)
        .any(|(a, b)| !a.bit_eq(b));
    assert!(filters_moved);
    assert!(after.embeddings.row(racnn::text::PAD).iter().all(|&v| v == 0.0));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let config = quick_config();
    let (vocab, docs) = indexed(&small_spec(40), &config);
    let refs: Vec<&Document> = docs.iter().collect();
    let (train, val) = refs.split_at(32);
    for kind in [ModelKind::RaCnn, ModelKind::AtCnn] {
        let run = |n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            train_model(kind, train, val, vocab.len(), None, &config, &Workers::new(n).unwrap(), &mut rng).unwrap()
        };
        let (one, four) = (run(1), run(4));
        for ((name, a), (_, b)) in one.params.tensors().iter().zip(four.params.tensors().iter()) {
            assert!(a.bit_eq(b), "{kind} {name}");
        }
        assert_eq!(one.sentence_dropout, four.sentence_dropout);
    }
}

#[test]
fn sampler_covers_every_item_evenly() {
    let sizes = [60usize, 20, 12];
    let mut pool = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        pool.extend((0..n).map(|i| (SentenceLabel::ALL[c], i)));
    }
    let epochs = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = std::collections::HashMap::new();
    for _ in 0..epochs {
        let sample = balanced_downsample(&pool, |(l, _)| *l, &mut rng).unwrap();
        for label in SentenceLabel::ALL {
            assert_eq!(sample.iter().filter(|(l, _)| *l == label).count(), 12);
        }
        for item in sample {
            *hits.entry(item).or_insert(0usize) += 1;
        }
    }
    for (c, &n) in sizes.iter().enumerate() {
        let expected = (epochs * 12) as f64 / n as f64;
        let chi2: f64 = (0..n)
            .map(|i| {
                let o = *hits.get(&(SentenceLabel::ALL[c], i)).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        let df = (n - 1) as f64;
        // mean + 4 standard deviations of a chi-square with df degrees of freedom
        assert!(chi2 <= df + 4.0 * (2.0 * df).sqrt(), "class {c}: chi2 {chi2:.2} with {df} df");
        assert!((0..n).all(|i| hits.contains_key(&(SentenceLabel::ALL[c], i))));
    }
}

#[test]
fn nine_documents_three_folds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let folds = fold_assignments(9, 3, &mut rng).unwrap();
    assert!(folds.iter().all(|f| f.len() == 3));
    let mut all = folds.concat();
    all.sort();
    assert_eq!(all, (0..9).collect::<Vec<_>>());
}

#[test]
fn cross_validation_rows_and_summary() {
    let config = quick_config();
    let (vocab, docs) = indexed(&small_spec(30), &config);
    let out = run_cross_validation(&docs, vocab.len(), None, ModelKind::DocCnn, &config).unwrap();
    assert_eq!(out.rows.len(), config.folds * config.replications);
    let mean = out.rows.iter().map(|r| r.accuracy).sum::<f64>() / out.rows.len() as f64;
    assert!((out.summary.mean - mean).abs() <= 1e-12);
    assert!(out.summary.min <= out.summary.mean && out.summary.mean <= out.summary.max);
    let again = run_cross_validation(&docs, vocab.len(), None, ModelKind::DocCnn, &config).unwrap();
    assert_eq!(again, out);
}
