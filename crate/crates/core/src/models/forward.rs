use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::{BoundParams, ModelKind, ModelParams, Trainable};
use crate::encoder::{encode_document_flat, encode_sentence};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{Mode, Tensor};
use crate::text::{Document, SentenceLabel};

const POS: usize = 1;
const NEG: usize = 2;

#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions<'o> {
    pub mode: Mode,
    pub sentence_dropout: f64,
    pub document_dropout: f64,
    /// Replaces the RA-CNN gates `max(p_pos, p_neg)` with fixed values.
    pub forced_gates: Option<&'o [f64]>,
}

impl ForwardOptions<'_> {
    pub fn eval() -> Self {
        ForwardOptions {
            mode: Mode::Eval,
            sentence_dropout: 0.0,
            document_dropout: 0.0,
            forced_gates: None,
        }
    }

    pub fn train(sentence_dropout: f64, document_dropout: f64) -> Self {
        ForwardOptions {
            mode: Mode::Train,
            sentence_dropout,
            document_dropout,
            forced_gates: None,
        }
    }
}

/// Handles to the interesting nodes of one document's forward pass.
#[derive(Clone, Debug)]
pub struct DocumentPass {
    /// Post-dropout sentence vectors (hierarchical models).
    pub sentence_vectors: Vec<NodeId>,
    /// `(p_neutral, p_pos, p_neg)` per sentence (RA-CNN).
    pub sentence_probs: Vec<NodeId>,
    /// Attention weights over sentences (AT-CNN).
    pub attention: Option<NodeId>,
    /// Document vector before document-level dropout.
    pub doc_vector: NodeId,
    pub class_probs: NodeId,
}

/// `softmax(W_sen · x_sen)`, ordered (neutral, positive, negative).
pub fn sentence_probs(g: &mut Graph<'_>, sent_vec: NodeId, head: NodeId) -> Result<NodeId> {
    let logits = g.matvec(head, sent_vec)?;
    g.softmax(logits)
}

/// `Σ_j x_j · max(p_pos_j, p_neg_j)`. Ties in the gate go to `p_pos`.
pub fn racnn_doc_vector(
    g: &mut Graph<'_>,
    sent_vecs: &[NodeId],
    sent_probs: &[NodeId],
) -> Result<NodeId> {
    if sent_vecs.len() != sent_probs.len() {
        return Err(Error::Precondition(format!(
            "{} sentence vectors but {} probability triples",
            sent_vecs.len(),
            sent_probs.len()
        )));
    }
    let gates = sent_probs
        .iter()
        .map(|&p| g.max_of(p, POS, NEG))
        .collect::<Result<Vec<_>>>()?;
    weighted_sum(g, sent_vecs, &gates)
}

fn weighted_sum(g: &mut Graph<'_>, vecs: &[NodeId], weights: &[NodeId]) -> Result<NodeId> {
    if vecs.is_empty() {
        return Err(Error::Precondition("document has no sentences".into()));
    }
    let parts = vecs
        .iter()
        .zip(weights)
        .map(|(&v, &w)| g.scale(v, w))
        .collect::<Result<Vec<_>>>()?;
    g.add_n(&parts)
}

/// Runs architecture `arch` over `doc`. `arch` may differ from the kind the
/// parameters were created for as long as the heads it needs exist.
pub fn forward_document<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    bound: &BoundParams,
    arch: ModelKind,
    doc: &Document,
    opts: &ForwardOptions<'_>,
    rng: &mut R,
) -> Result<DocumentPass> {
    if doc.sentences.is_empty() {
        return Err(Error::Precondition(format!("document {} is empty", doc.doc_id)));
    }
    let mut pass_sentences = Vec::new();
    let mut pass_probs = Vec::new();
    let mut attention = None;

    let doc_vector = match arch {
        ModelKind::Cnn => encode_document_flat(
            g,
            &bound.encoder,
            &doc.sentences,
            0.0,
            opts.mode,
            rng,
        )?,
        _ => {
            for s in &doc.sentences {
                let v = encode_sentence(g, &bound.encoder, s, opts.sentence_dropout, opts.mode, rng)?;
                pass_sentences.push(v);
            }
            match arch {
                ModelKind::DocCnn => g.add_n(&pass_sentences)?,
                ModelKind::RaCnn => {
                    let head = bound.sentence_head.ok_or_else(|| {
                        Error::Capability("parameters have no sentence head (W_sen)".into())
                    })?;
                    for &v in &pass_sentences {
                        pass_probs.push(sentence_probs(g, v, head)?);
                    }
                    match opts.forced_gates {
                        Some(gates) => {
                            if gates.len() != pass_sentences.len() {
                                return Err(Error::Precondition(format!(
                                    "{} forced gates for {} sentences",
                                    gates.len(),
                                    pass_sentences.len()
                                )));
                            }
                            let gate_nodes: Vec<NodeId> =
                                gates.iter().map(|&v| g.input(Tensor::scalar(v))).collect();
                            weighted_sum(g, &pass_sentences, &gate_nodes)?
                        }
                        None => racnn_doc_vector(g, &pass_sentences, &pass_probs)?,
                    }
                }
                ModelKind::AtCnn => {
                    let att = bound.attention.as_ref().ok_or_else(|| {
                        Error::Capability("parameters have no attention head".into())
                    })?;
                    let mut scores = Vec::with_capacity(pass_sentences.len());
                    for &v in &pass_sentences {
                        let proj = g.matvec(att.projection, v)?;
                        let shifted = g.add(proj, att.bias)?;
                        let hidden = g.tanh(shifted);
                        scores.push(g.dot(hidden, att.context)?);
                    }
                    let logits = g.concat(&scores)?;
                    let alpha = g.softmax(logits)?;
                    attention = Some(alpha);
                    let weights = (0..pass_sentences.len())
                        .map(|j| g.select(alpha, j))
                        .collect::<Result<Vec<_>>>()?;
                    weighted_sum(g, &pass_sentences, &weights)?
                }
                ModelKind::Cnn => unreachable!(),
            }
        }
    };

    let dropped = g.dropout(doc_vector, opts.document_dropout, opts.mode, rng)?;
    let logits = g.matvec(bound.document_head, dropped)?;
    let class_probs = g.softmax(logits)?;
    Ok(DocumentPass {
        sentence_vectors: pass_sentences,
        sentence_probs: pass_probs,
        attention,
        doc_vector,
        class_probs,
    })
}

/// Document cross-entropy for one document.
pub fn document_loss<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    bound: &BoundParams,
    arch: ModelKind,
    doc: &Document,
    opts: &ForwardOptions<'_>,
    rng: &mut R,
) -> Result<(NodeId, DocumentPass)> {
    let pass = forward_document(g, bound, arch, doc, opts, rng)?;
    let loss = g.cross_entropy(pass.class_probs, doc.label.index())?;
    Ok((loss, pass))
}

/// Sentence-label cross-entropy for one sentence under `W_sen`.
pub fn sentence_loss<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    bound: &BoundParams,
    tokens: &[usize],
    label: SentenceLabel,
    dropout: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(NodeId, NodeId)> {
    let head = bound
        .sentence_head
        .ok_or_else(|| Error::Capability("parameters have no sentence head (W_sen)".into()))?;
    let v = encode_sentence(g, &bound.encoder, tokens, dropout, mode, rng)?;
    let probs = sentence_probs(g, v, head)?;
    let loss = g.cross_entropy(probs, label.index())?;
    Ok((loss, probs))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentenceScore {
    pub p_neutral: f64,
    pub p_pos: f64,
    pub p_neg: f64,
}

impl SentenceScore {
    /// `max(p_pos, p_neg)`, the sentence's rationale score.
    pub fn rationale_score(&self) -> f64 {
        self.p_pos.max(self.p_neg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class_probs: Vec<f64>,
    pub predicted_class: usize,
    pub sentence_scores: Option<Vec<SentenceScore>>,
    pub attention: Option<Vec<f64>>,
}

impl Prediction {
    fn from_pass(g: &Graph<'_>, pass: &DocumentPass) -> Self {
        let class_probs = g.value(pass.class_probs).data().to_vec();
        let mut predicted_class = 0;
        for (i, &p) in class_probs.iter().enumerate() {
            if p > class_probs[predicted_class] {
                predicted_class = i;
            }
        }
        let sentence_scores = (!pass.sentence_probs.is_empty()).then(|| {
            pass.sentence_probs
                .iter()
                .map(|&p| {
                    let v = g.value(p).data();
                    SentenceScore {
                        p_neutral: v[0],
                        p_pos: v[POS],
                        p_neg: v[NEG],
                    }
                })
                .collect()
        });
        Prediction {
            class_probs,
            predicted_class,
            sentence_scores,
            attention: pass.attention.map(|a| g.value(a).data().to_vec()),
        }
    }

    pub fn confidence(&self) -> f64 {
        self.class_probs[self.predicted_class]
    }
}

/// Eval-mode prediction with architecture `arch`.
pub fn predict_as(params: &ModelParams, arch: ModelKind, doc: &Document) -> Result<Prediction> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, Trainable::ALL);
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = forward_document(&mut g, &bound, arch, doc, &ForwardOptions::eval(), &mut rng)?;
    Ok(Prediction::from_pass(&g, &pass))
}

/// Eval-mode prediction with the architecture the parameters belong to.
pub fn predict(params: &ModelParams, doc: &Document) -> Result<Prediction> {
    predict_as(params, params.kind, doc)
}

pub fn racnn_forward(params: &ModelParams, doc: &Document) -> Result<Prediction> {
    predict_as(params, ModelKind::RaCnn, doc)
}

pub fn doccnn_forward(params: &ModelParams, doc: &Document) -> Result<Prediction> {
    predict_as(params, ModelKind::DocCnn, doc)
}

pub fn atcnn_forward(params: &ModelParams, doc: &Document) -> Result<Prediction> {
    predict_as(params, ModelKind::AtCnn, doc)
}

pub fn cnn_forward(params: &ModelParams, doc: &Document) -> Result<Prediction> {
    predict_as(params, ModelKind::Cnn, doc)
}

/// Sentences by descending `max(p_pos, p_neg)`; equal scores keep their
/// original order.
pub fn rank_rationales(pred: &Prediction) -> Result<Vec<(usize, f64)>> {
    let scores = pred
        .sentence_scores
        .as_ref()
        .ok_or_else(|| Error::Capability("model provides no rationale scores".into()))?;
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .map(SentenceScore::rationale_score)
        .enumerate()
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}
