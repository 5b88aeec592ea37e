//! The shared convolutional sentence encoder: embed, convolve a bank of
//! filters, ReLU, 1-max pool, concatenate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{Mode, Tensor};
use crate::text::PAD;

/// Filter weights start in `U[−FILTER_INIT, FILTER_INIT]`; biases at zero.
pub const FILTER_INIT: f64 = 0.01;

/// Convolution parameters: for each height `h`, a `[maps×h×d]` weight
/// tensor and a `[maps]` bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub heights: Vec<usize>,
    pub maps_per_height: usize,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl FilterBank {
    pub fn new<R: Rng + ?Sized>(
        heights: &[usize],
        maps_per_height: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        validate_heights(heights)?;
        if maps_per_height == 0 || dim == 0 {
            return Err(Error::Config("filter maps and embedding dim must be positive".into()));
        }
        let weights = heights
            .iter()
            .map(|&h| Tensor::uniform(&[maps_per_height, h, dim], FILTER_INIT, rng))
            .collect();
        let biases = heights
            .iter()
            .map(|_| Tensor::zeros(&[maps_per_height]))
            .collect();
        Ok(FilterBank {
            heights: heights.to_vec(),
            maps_per_height,
            weights,
            biases,
        })
    }

    /// `|F|`, the length of every sentence vector.
    pub fn num_features(&self) -> usize {
        self.heights.len() * self.maps_per_height
    }

    pub fn max_height(&self) -> usize {
        self.heights.iter().copied().max().unwrap_or(1)
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.shape()[2])
    }
}

/// Heights must be positive and strictly ascending.
pub fn validate_heights(heights: &[usize]) -> Result<()> {
    if heights.is_empty() || heights.contains(&0) {
        return Err(Error::Config(format!("invalid filter heights {heights:?}")));
    }
    if heights.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "filter heights must be strictly ascending, got {heights:?}"
        )));
    }
    Ok(())
}

/// Graph handles for the encoder parameters.
#[derive(Clone, Debug)]
pub struct EncoderNodes {
    pub embeddings: NodeId,
    pub filters: Vec<NodeId>,
    pub biases: Vec<NodeId>,
    pub max_height: usize,
}

/// Encodes one padded sentence into a `[|F|]` vector. Features are ordered
/// by ascending height, then filter index. Sentence-level dropout is applied
/// to the result (train mode only).
pub fn encode_sentence<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    enc: &EncoderNodes,
    tokens: &[usize],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    if tokens.len() < enc.max_height {
        return Err(Error::Precondition(format!(
            "sentence of {} tokens is shorter than the tallest filter ({}); pad it first",
            tokens.len(),
            enc.max_height
        )));
    }
    let instance = g.gather_rows(enc.embeddings, tokens)?;
    let mut pooled = Vec::with_capacity(enc.filters.len());
    for (&w, &b) in enc.filters.iter().zip(&enc.biases) {
        let maps = g.conv1d(instance, w, b)?;
        let act = g.relu(maps);
        pooled.push(g.max_pool_rows(act)?);
    }
    let features = g.concat(&pooled)?;
    g.dropout(features, dropout_rate, mode, rng)
}

/// Treats the whole document as one long sentence: trailing padding is
/// stripped from each sentence, the rest concatenated in order and padded
/// back up to the tallest filter.
pub fn encode_document_flat<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    enc: &EncoderNodes,
    sentences: &[Vec<usize>],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    let tokens = flatten_document(sentences, enc.max_height);
    encode_sentence(g, enc, &tokens, dropout_rate, mode, rng)
}

pub fn flatten_document(sentences: &[Vec<usize>], min_len: usize) -> Vec<usize> {
    let mut tokens: Vec<usize> = Vec::new();
    for s in sentences {
        let real = s.iter().rposition(|&t| t != PAD).map_or(0, |p| p + 1);
        tokens.extend_from_slice(&s[..real]);
    }
    if tokens.len() < min_len {
        tokens.resize(min_len, PAD);
    }
    tokens
}
