//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::models::{forward_document, BoundParams, ForwardOptions, ModelKind, ModelParams, ModelShape, Trainable};
use crate::tensor::Tensor;
use crate::text::{derive_sentence_labels, DocLabel, Document, PAD};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Lower bound on the denominator of the relative error.
pub const ABS_FLOOR: f64 = 1e-6;
pub const MIN_SIGNAL: f64 = 1e-3;
const MAX_DRAWS: usize = 100;

/// `(f(x + ε) − f(x − ε)) / 2ε`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// A small model with one document, used to exercise every parameter.
#[derive(Clone, Debug)]
pub struct GradcheckInstance {
    pub kind: ModelKind,
    pub params: ModelParams,
    pub doc: Document,
    pub sentence_dropout: f64,
    pub document_dropout: f64,
    /// Every evaluation redraws its dropout masks from this seed.
    pub dropout_seed: u64,
}

impl GradcheckInstance {
    /// Vocabulary 20, d = 4, heights [2, 3] with 2 maps each, 2 to 3 sentences.
    /// Draws are repeated until every parameter has a gradient entry of
    /// magnitude at least [`MIN_SIGNAL`].
    pub fn tiny(kind: ModelKind, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_DRAWS {
            let inst = Self::draw(kind, seed, &mut rng)?;
            let grads = inst.analytic_gradients()?;
            if grads.iter().all(|g| g.data().iter().any(|x| x.abs() >= MIN_SIGNAL)) {
                return Ok(inst);
            }
        }
        Err(Error::Contract(format!(
            "no {kind} instance with live gradients in {MAX_DRAWS} draws"
        )))
    }

    fn draw(kind: ModelKind, seed: u64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let shape = ModelShape {
            kind,
            vocab_size: 20,
            embedding_dim: 4,
            filter_heights: vec![2, 3],
            maps_per_height: 2,
            attention_dim: None,
        };
        let mut params = ModelParams::init(&shape, None, rng)?;
        for t in params.tensors_mut() {
            *t = Tensor::uniform(t.shape(), 0.5, rng);
        }
        params.embeddings.row_mut(PAD).fill(0.0);

        let n = rng.gen_range(2..=3);
        let sentences: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let len = rng.gen_range(3..=5);
                let mut s: Vec<usize> = (0..len).map(|_| rng.gen_range(2..20)).collect();
                if rng.gen_bool(0.3) {
                    s.push(PAD);
                }
                s
            })
            .collect();
        let mut rationale_mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        rationale_mask[0] = true;
        let label = if rng.gen_bool(0.5) {
            DocLabel::Positive
        } else {
            DocLabel::Negative
        };
        Ok(GradcheckInstance {
            kind,
            params,
            doc: Document {
                doc_id: format!("gradcheck-{seed}"),
                sentences,
                label,
                rationale_mask,
            },
            sentence_dropout: 0.3,
            document_dropout: 0.5,
            dropout_seed: rng.gen(),
        })
    }

    fn build_loss(&self, g: &mut Graph<'_>, bound: &BoundParams, params_kind: ModelKind) -> Result<NodeId> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.dropout_seed);
        let opts = ForwardOptions::train(self.sentence_dropout, self.document_dropout);
        let pass = forward_document(g, bound, params_kind, &self.doc, &opts, &mut rng)?;
        let mut terms = vec![g.cross_entropy(pass.class_probs, self.doc.label.index())?];
        if params_kind == ModelKind::RaCnn {
            for (&p, label) in pass.sentence_probs.iter().zip(derive_sentence_labels(&self.doc)) {
                terms.push(g.cross_entropy(p, label.index())?);
            }
        }
        g.add_n(&terms)
    }

    /// Full training loss: document cross-entropy, plus the sentence
    /// cross-entropies for RA-CNN.
    pub fn loss(&self, params: &ModelParams) -> Result<f64> {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, Trainable::ALL);
        let loss = self.build_loss(&mut g, &bound, self.kind)?;
        Ok(g.value(loss).item())
    }

    /// Dense analytic gradients in slot order.
    pub fn analytic_gradients(&self) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, Trainable::ALL);
        let loss = self.build_loss(&mut g, &bound, self.kind)?;
        let grads = g.backward(loss)?;
        bound
            .slot_grads(grads)
            .into_iter()
            .map(|s| {
                s.map(|g| g.to_dense())
                    .ok_or_else(|| Error::Contract("trainable slot without gradient".into()))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub kind: ModelKind,
    pub params: Vec<ParamCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < TOLERANCE
    }
}

/// Compares analytic and central-difference gradients for every entry of
/// every parameter. `corrupt`, when set, names a parameter whose first
/// analytic entry is deliberately perturbed.
pub fn check_instance(inst: &GradcheckInstance, corrupt: Option<&str>) -> Result<GradcheckReport> {
    let mut analytic = inst.analytic_gradients()?;
    let names = inst.params.slot_names();
    if let Some(target) = corrupt {
        let slot = names
            .iter()
            .position(|n| n == target)
            .ok_or_else(|| Error::Config(format!("--corrupt-gradient: no parameter named {target:?}")))?;
        analytic[slot].data_mut()[0] += 1e-2;
    }

    let mut checks = Vec::with_capacity(names.len());
    let mut probe = inst.params.clone();
    for (slot, name) in names.iter().enumerate() {
        let len = analytic[slot].len();
        let mut check = ParamCheck {
            name: name.clone(),
            entries: len,
            max_rel_error: 0.0,
            worst_index: 0,
        };
        for i in 0..len {
            let original = probe.tensors_mut()[slot].data()[i];
            probe.tensors_mut()[slot].data_mut()[i] = original + STEP;
            let up = inst.loss(&probe)?;
            probe.tensors_mut()[slot].data_mut()[i] = original - STEP;
            let down = inst.loss(&probe)?;
            probe.tensors_mut()[slot].data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(analytic[slot].data()[i], numeric);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = i;
            }
        }
        checks.push(check);
    }
    Ok(GradcheckReport {
        kind: inst.kind,
        params: checks,
    })
}

pub fn gradcheck(kind: ModelKind, seed: u64, corrupt: Option<&str>) -> Result<GradcheckReport> {
    check_instance(&GradcheckInstance::tiny(kind, seed)?, corrupt)
}
