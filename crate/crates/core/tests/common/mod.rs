#![allow(dead_code)]

use racnn::eval::{generate_synthetic, SyntheticSpec};
use racnn::models::{ModelKind, ModelParams, ModelShape};
use racnn::tensor::Tensor;
use racnn::text::{build_vocabulary, index_corpus, parse_corpus, DocLabel, Document, TextDocument, Vocabulary, PAD};
use racnn::train::TrainConfig;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: usize = 20;

pub fn small_shape(kind: ModelKind) -> ModelShape {
    ModelShape {
        kind,
        vocab_size: VOCAB,
        embedding_dim: 4,
        filter_heights: vec![2, 3],
        maps_per_height: 3,
        attention_dim: None,
    }
}

/// Parameters with every entry redrawn in `U[-scale, scale]`, PAD row zero.
pub fn random_params(kind: ModelKind, seed: u64, scale: f64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(&small_shape(kind), None, &mut rng).unwrap();
    for t in p.tensors_mut() {
        *t = Tensor::uniform(t.shape(), scale, &mut rng);
    }
    p.embeddings.row_mut(PAD).fill(0.0);
    p
}

pub fn random_doc<R: Rng>(rng: &mut R, sentences: std::ops::RangeInclusive<usize>) -> Document {
    let n = rng.gen_range(sentences);
    let sentences: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=8);
            (0..len).map(|_| rng.gen_range(2..VOCAB)).collect()
        })
        .collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    mask[0] = true;
    Document {
        doc_id: format!("d{}", rng.gen::<u32>()),
        sentences,
        label: if rng.gen_bool(0.5) { DocLabel::Positive } else { DocLabel::Negative },
        rationale_mask: mask,
    }
}

// Plain-loop reference implementation, sharing no code with the library.

pub fn ref_sentence_vector(p: &ModelParams, tokens: &[usize]) -> Vec<f64> {
    let d = p.embeddings.shape()[1];
    let mut out = Vec::new();
    for (w, b) in p.filters.weights.iter().zip(&p.filters.biases) {
        let (maps, h) = (w.shape()[0], w.shape()[1]);
        for m in 0..maps {
            let mut best = f64::NEG_INFINITY;
            for t in 0..=(tokens.len() - h) {
                let mut z = b.data()[m];
                for i in 0..h {
                    for k in 0..d {
                        z += w.data()[(m * h + i) * d + k] * p.embeddings.data()[tokens[t + i] * d + k];
                    }
                }
                best = best.max(z.max(0.0));
            }
            out.push(best);
        }
    }
    out
}

pub fn ref_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn ref_matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    (0..w.shape()[0])
        .map(|r| (0..cols).map(|c| w.data()[r * cols + c] * x[c]).sum())
        .collect()
}

pub fn ref_attention(p: &ModelParams, vecs: &[Vec<f64>]) -> Vec<f64> {
    let att = p.attention.as_ref().unwrap();
    let scores: Vec<f64> = vecs
        .iter()
        .map(|x| {
            let hidden: Vec<f64> = ref_matvec(&att.projection, x)
                .iter()
                .zip(att.bias.data())
                .map(|(a, b)| (a + b).tanh())
                .collect();
            hidden.iter().zip(att.context.data()).map(|(a, b)| a * b).sum()
        })
        .collect();
    ref_softmax(&scores)
}

pub fn ref_weighted_sum(vecs: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vecs[0].len()];
    for (v, w) in vecs.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// Reference document vector for a hierarchical architecture.
pub fn ref_doc_vector(p: &ModelParams, arch: ModelKind, doc: &Document) -> Vec<f64> {
    let vecs: Vec<Vec<f64>> = doc.sentences.iter().map(|s| ref_sentence_vector(p, s)).collect();
    let weights: Vec<f64> = match arch {
        ModelKind::DocCnn => vec![1.0; vecs.len()],
        ModelKind::AtCnn => ref_attention(p, &vecs),
        ModelKind::RaCnn => vecs
            .iter()
            .map(|v| {
                let probs = ref_softmax(&ref_matvec(p.sentence_head.as_ref().unwrap(), v));
                probs[1].max(probs[2])
            })
            .collect(),
        ModelKind::Cnn => panic!("flat model has no sentence aggregation"),
    };
    ref_weighted_sum(&vecs, &weights)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A configuration small enough for tests that train.
pub fn quick_config() -> TrainConfig {
    TrainConfig {
        embedding_dim: 8,
        filter_heights: vec![2, 3],
        maps_per_height: 4,
        cnn_maps_per_height: 4,
        max_epochs: 3,
        patience: 2,
        sentence_epochs: 2,
        sentence_dropout_grid: vec![0.0, 0.5],
        batch_size: 10,
        folds: 3,
        replications: 2,
        ..TrainConfig::default()
    }
}

pub fn small_spec(num_docs: usize) -> SyntheticSpec {
    SyntheticSpec {
        num_docs,
        sentences_per_doc: 6,
        tokens_per_sentence: 6,
        ..SyntheticSpec::default()
    }
}

pub fn synthetic_corpus(spec: &SyntheticSpec) -> Vec<TextDocument> {
    let text: String = generate_synthetic(spec)
        .unwrap()
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    parse_corpus(&text, "synthetic").unwrap()
}

pub fn indexed(spec: &SyntheticSpec, config: &TrainConfig) -> (Vocabulary, Vec<Document>) {
    let texts = synthetic_corpus(spec);
    let vocab = build_vocabulary(&texts, config.vocab_max_size).unwrap();
    let docs = index_corpus(&texts, &vocab, config.padding_policy());
    (vocab, docs)
}
