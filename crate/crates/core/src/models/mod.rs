//! Model parameters and the four document classifiers built on the shared
//! sentence encoder: flat CNN, Doc-CNN, AT-CNN and RA-CNN.

pub mod checkpoint;
pub mod forward;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderNodes, FilterBank};
use crate::error::{Error, Result};
use crate::graph::{Grad, Gradients, Graph, NodeId};
use crate::tensor::Tensor;
use crate::text::{random_embeddings, DocLabel, SentenceLabel, PAD};

pub use forward::{
    atcnn_forward, cnn_forward, doccnn_forward, document_loss, forward_document, predict,
    predict_as, racnn_doc_vector, racnn_forward, rank_rationales, sentence_loss, sentence_probs,
    DocumentPass, ForwardOptions, Prediction, SentenceScore,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "doc-cnn")]
    DocCnn,
    #[serde(rename = "at-cnn")]
    AtCnn,
    #[serde(rename = "ra-cnn")]
    RaCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Cnn,
        ModelKind::DocCnn,
        ModelKind::AtCnn,
        ModelKind::RaCnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::DocCnn => "doc-cnn",
            ModelKind::AtCnn => "at-cnn",
            ModelKind::RaCnn => "ra-cnn",
        }
    }

    /// Whether documents are encoded sentence by sentence.
    pub fn is_hierarchical(self) -> bool {
        self != ModelKind::Cnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "--model: unknown model kind {s:?} (expected cnn, doc-cnn, at-cnn or ra-cnn)"
                ))
            })
    }
}

/// Sentence-vector attention: `u = tanh(W x + b)`, score `uᵀ context`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub projection: Tensor,
    pub bias: Tensor,
    pub context: Tensor,
}

/// Architecture hyperparameters needed to allocate parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelShape {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub filter_heights: Vec<usize>,
    pub maps_per_height: usize,
    /// Attention hidden size; defaults to `|F|`.
    pub attention_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    /// `E`, `[V×d]`. Row `PAD` stays zero.
    pub embeddings: Tensor,
    /// `C`.
    pub filters: FilterBank,
    /// `W_sen`, `[3×|F|]`; RA-CNN only.
    pub sentence_head: Option<Tensor>,
    /// `W_doc`, `[2×|F|]`.
    pub document_head: Tensor,
    /// AT-CNN only.
    pub attention: Option<AttentionParams>,
}

fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, bound, rng)
}

impl ModelParams {
    /// Fresh parameters. `embeddings`, when given, must be `[V×d]`.
    pub fn init<R: Rng + ?Sized>(
        shape: &ModelShape,
        embeddings: Option<Tensor>,
        rng: &mut R,
    ) -> Result<Self> {
        let (v, d) = (shape.vocab_size, shape.embedding_dim);
        let mut embeddings = match embeddings {
            Some(e) if e.shape() == [v, d] => e,
            Some(e) => {
                return Err(Error::Config(format!(
                    "embedding table has shape {:?}, expected [{v}, {d}]",
                    e.shape()
                )))
            }
            None => random_embeddings(v, d, rng),
        };
        embeddings.row_mut(PAD).fill(0.0);
        let filters = FilterBank::new(&shape.filter_heights, shape.maps_per_height, d, rng)?;
        let f = filters.num_features();
        let sentence_head = (shape.kind == ModelKind::RaCnn)
            .then(|| glorot(&[SentenceLabel::COUNT, f], f, SentenceLabel::COUNT, rng));
        let document_head = glorot(&[DocLabel::COUNT, f], f, DocLabel::COUNT, rng);
        let attention = if shape.kind == ModelKind::AtCnn {
            let a = shape.attention_dim.unwrap_or(f);
            if a == 0 {
                return Err(Error::Config("attention_dim must be positive".into()));
            }
            Some(AttentionParams {
                projection: glorot(&[a, f], f, a, rng),
                bias: Tensor::zeros(&[a]),
                context: glorot(&[a], a, 1, rng),
            })
        } else {
            None
        };
        Ok(ModelParams {
            kind: shape.kind,
            embeddings,
            filters,
            sentence_head,
            document_head,
            attention,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.shape()[1]
    }

    pub fn num_features(&self) -> usize {
        self.filters.num_features()
    }

    /// Every tensor with a stable name, in slot order. The embedding table
    /// is always slot 0.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("embeddings".into(), &self.embeddings)];
        for (h, w) in self.filters.heights.iter().zip(&self.filters.weights) {
            out.push((format!("filters.h{h}"), w));
        }
        for (h, b) in self.filters.heights.iter().zip(&self.filters.biases) {
            out.push((format!("biases.h{h}"), b));
        }
        if let Some(w) = &self.sentence_head {
            out.push(("w_sen".into(), w));
        }
        out.push(("w_doc".into(), &self.document_head));
        if let Some(a) = &self.attention {
            out.push(("attention.w".into(), &a.projection));
            out.push(("attention.b".into(), &a.bias));
            out.push(("attention.u".into(), &a.context));
        }
        out
    }

    /// Mutable view in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.embeddings];
        out.extend(self.filters.weights.iter_mut());
        out.extend(self.filters.biases.iter_mut());
        if let Some(w) = &mut self.sentence_head {
            out.push(w);
        }
        out.push(&mut self.document_head);
        if let Some(a) = &mut self.attention {
            out.push(&mut a.projection);
            out.push(&mut a.bias);
            out.push(&mut a.context);
        }
        out
    }

    pub fn slot_names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Puts every tensor on the graph; those not selected by `trainable`
    /// are bound as constants and receive no gradient.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>, trainable: Trainable) -> BoundParams {
        let mut slots = Vec::new();
        let mut leaf = |g: &mut Graph<'a>, t: &'a Tensor, train: bool| {
            let id = if train { g.param(t) } else { g.constant(t) };
            slots.push(train.then_some(id));
            id
        };
        let embeddings = leaf(g, &self.embeddings, trainable.encoder);
        let filters = self
            .filters
            .weights
            .iter()
            .map(|w| leaf(g, w, trainable.encoder))
            .collect();
        let biases = self
            .filters
            .biases
            .iter()
            .map(|b| leaf(g, b, trainable.encoder))
            .collect();
        let sentence_head = self
            .sentence_head
            .as_ref()
            .map(|w| leaf(g, w, trainable.sentence_head));
        let document_head = leaf(g, &self.document_head, trainable.document_head);
        let attention = self.attention.as_ref().map(|a| AttentionNodes {
            projection: leaf(g, &a.projection, trainable.attention),
            bias: leaf(g, &a.bias, trainable.attention),
            context: leaf(g, &a.context, trainable.attention),
        });
        BoundParams {
            encoder: EncoderNodes {
                embeddings,
                filters,
                biases,
                max_height: self.filters.max_height(),
            },
            sentence_head,
            document_head,
            attention,
            slots,
        }
    }
}

/// Which parameter groups receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub sentence_head: bool,
    pub document_head: bool,
    pub attention: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        encoder: true,
        sentence_head: true,
        document_head: true,
        attention: true,
    };

    /// Rationale classifier fitting: `E`, `C`, `W_sen`.
    pub const SENTENCE_PHASE: Trainable = Trainable {
        encoder: true,
        sentence_head: true,
        document_head: false,
        attention: false,
    };

    /// Document fitting: everything except `W_sen`, which stays frozen.
    pub const DOCUMENT_PHASE: Trainable = Trainable {
        encoder: true,
        sentence_head: false,
        document_head: true,
        attention: true,
    };
}

#[derive(Clone, Debug)]
pub struct AttentionNodes {
    pub projection: NodeId,
    pub bias: NodeId,
    pub context: NodeId,
}

#[derive(Clone, Debug)]
pub struct BoundParams {
    pub encoder: EncoderNodes,
    pub sentence_head: Option<NodeId>,
    pub document_head: NodeId,
    pub attention: Option<AttentionNodes>,
    slots: Vec<Option<NodeId>>,
}

impl BoundParams {
    /// Gradients in slot order; `None` for frozen slots.
    pub fn slot_grads(&self, mut grads: Gradients) -> Vec<Option<Grad>> {
        self.slots
            .iter()
            .map(|s| s.and_then(|id| grads.take(id)))
            .collect()
    }

    pub fn slot_nodes(&self) -> &[Option<NodeId>] {
        &self.slots
    }
}
