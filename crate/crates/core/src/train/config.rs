use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::validate_heights;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelShape};
use crate::tensor::check_dropout_rate;
use crate::text::PaddingPolicy;

/// Every hyperparameter of a run. Loaded from a flat TOML file; keys not
/// listed here are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub filter_heights: Vec<usize>,
    /// Feature maps per height for the hierarchical models.
    pub maps_per_height: usize,
    /// Feature maps per height for the flat CNN.
    pub cnn_maps_per_height: usize,
    pub embedding_dim: usize,
    pub embeddings_path: Option<PathBuf>,
    pub vocab_max_size: usize,
    pub max_sentence_tokens: usize,
    /// Defaults to `|F|`.
    pub attention_dim: Option<usize>,

    pub document_dropout: f64,
    /// Sentence-vector dropout while fitting the rationale classifier.
    pub sentence_phase_dropout: f64,
    /// Candidate sentence-vector dropout rates for document training,
    /// chosen per fold by validation accuracy.
    pub sentence_dropout_grid: Vec<f64>,
    /// Whether sentence-vector dropout stays active in document training.
    pub sentence_dropout_in_doc_phase: bool,

    pub batch_size: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fixed epoch budget of the sentence phase.
    pub sentence_epochs: usize,

    pub seed: u64,
    pub folds: usize,
    pub replications: usize,
    pub validation_fraction: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            filter_heights: vec![3, 4, 5],
            maps_per_height: 20,
            cnn_maps_per_height: 100,
            embedding_dim: 300,
            embeddings_path: None,
            vocab_max_size: 50_000,
            max_sentence_tokens: 100,
            attention_dim: None,
            document_dropout: 0.5,
            sentence_phase_dropout: 0.5,
            sentence_dropout_grid: (0..10).map(|i| i as f64 / 10.0).collect(),
            sentence_dropout_in_doc_phase: true,
            batch_size: 50,
            rho: 0.95,
            epsilon: 1e-6,
            max_epochs: 50,
            patience: 5,
            sentence_epochs: 20,
            seed: 1,
            folds: 5,
            replications: 5,
            validation_fraction: 0.1,
            workers: 1,
        }
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl TrainConfig {
    /// Parses TOML text; `path` is only used in messages.
    pub fn from_toml_str(source: &str, path: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of(source, s.start));
            Error::Config(format!("{path}:{line}: {}", e.message()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&source, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        validate_heights(&self.filter_heights)?;
        let positive = [
            ("maps_per_height", self.maps_per_height),
            ("cnn_maps_per_height", self.cnn_maps_per_height),
            ("embedding_dim", self.embedding_dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("replications", self.replications),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_max_size < 3 {
            return Err(Error::Config("vocab_max_size must be at least 3".into()));
        }
        if self.max_sentence_tokens < self.max_height() {
            return Err(Error::Config(format!(
                "max_sentence_tokens ({}) is below the tallest filter ({})",
                self.max_sentence_tokens,
                self.max_height()
            )));
        }
        if self.attention_dim == Some(0) {
            return Err(Error::Config("attention_dim must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        for rate in [self.document_dropout, self.sentence_phase_dropout]
            .iter()
            .chain(&self.sentence_dropout_grid)
        {
            check_dropout_rate(*rate)?;
        }
        if self.sentence_dropout_grid.is_empty() {
            return Err(Error::Config("sentence_dropout_grid must not be empty".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn max_height(&self) -> usize {
        self.filter_heights.iter().copied().max().unwrap_or(1)
    }

    pub fn maps_for(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::Cnn => self.cnn_maps_per_height,
            _ => self.maps_per_height,
        }
    }

    pub fn model_shape(&self, kind: ModelKind, vocab_size: usize) -> ModelShape {
        ModelShape {
            kind,
            vocab_size,
            embedding_dim: self.embedding_dim,
            filter_heights: self.filter_heights.clone(),
            maps_per_height: self.maps_for(kind),
            attention_dim: self.attention_dim,
        }
    }

    pub fn padding_policy(&self) -> PaddingPolicy {
        PaddingPolicy {
            max_tokens: self.max_sentence_tokens,
            min_tokens: self.max_height(),
        }
    }

    /// Sentence dropout used in document training at grid rate `rate`.
    pub fn doc_phase_sentence_dropout(&self, rate: f64) -> f64 {
        if self.sentence_dropout_in_doc_phase {
            rate
        } else {
            0.0
        }
    }
}
