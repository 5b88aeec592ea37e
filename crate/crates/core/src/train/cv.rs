use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::parallel::Workers;
use super::phases::{evaluate_accuracy, split_validation, train_model};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::tensor::Tensor;
use crate::text::Document;

/// Shuffles `0..n` and cuts it into `folds` contiguous chunks whose sizes
/// differ by at most one.
pub fn fold_assignments<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be at least 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::Config(format!("{folds} folds requested for a corpus of {n} documents")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok((0..folds)
        .map(|f| order[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect())
}

/// Generator for one fold of one replication; independent of every other
/// fold's stream.
pub fn fold_rng(seed: u64, replication: usize, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(replication as u64));
    rng.set_stream(fold as u64 + 1);
    rng
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub model: ModelKind,
    pub replication: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub best_epoch: usize,
    pub sentence_dropout: Option<f64>,
}

/// Mean accuracy and its range over replications. Each replication's
/// accuracy is the mean over its folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub model: ModelKind,
    pub folds: usize,
    pub replications: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub replication_means: Vec<f64>,
}

impl CvSummary {
    pub fn from_rows(model: ModelKind, rows: &[FoldResult]) -> Result<Self> {
        let replications = rows.iter().map(|r| r.replication).max().map_or(0, |m| m + 1);
        if rows.is_empty() {
            return Err(Error::Precondition("no fold results to summarize".into()));
        }
        let mut replication_means = Vec::with_capacity(replications);
        let mut folds = 0;
        for r in 0..replications {
            let accs: Vec<f64> = rows.iter().filter(|x| x.replication == r).map(|x| x.accuracy).collect();
            if accs.is_empty() {
                return Err(Error::Precondition(format!("replication {r} has no folds")));
            }
            folds = folds.max(accs.len());
            replication_means.push(accs.iter().sum::<f64>() / accs.len() as f64);
        }
        let mean = replication_means.iter().sum::<f64>() / replications as f64;
        let min = replication_means.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = replication_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(CvSummary {
            model,
            folds,
            replications,
            mean,
            min,
            max,
            replication_means,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOutcome {
    pub rows: Vec<FoldResult>,
    pub summary: CvSummary,
}

/// Replicated k-fold cross-validation. Replication `r` shuffles with seed
/// `config.seed + r`; within each training split a validation subset drives
/// early stopping and sentence-dropout selection.
pub fn run_cross_validation(
    docs: &[Document],
    vocab_size: usize,
    embeddings: Option<&Tensor>,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<CvOutcome> {
    config.validate()?;
    let workers = Workers::new(config.workers)?;
    let mut rows = Vec::new();
    for r in 0..config.replications {
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
        let folds = fold_assignments(docs.len(), config.folds, &mut shuffle)?;
        for (f, test_idx) in folds.iter().enumerate() {
            let mut rng = fold_rng(config.seed, r, f);
            let mut in_test = vec![false; docs.len()];
            for &i in test_idx {
                in_test[i] = true;
            }
            let rest: Vec<usize> = (0..docs.len()).filter(|&i| !in_test[i]).collect();
            let (train_idx, val_idx) = split_validation(&rest, config.validation_fraction, &mut rng)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| &docs[i]).collect::<Vec<_>>();
            let (train, val, test) = (pick(&train_idx), pick(&val_idx), pick(test_idx));
            let model = train_model(kind, &train, &val, vocab_size, embeddings, config, &workers, &mut rng)?;
            let accuracy = evaluate_accuracy(&model.params, kind, &test, &workers)?;
            info!("{kind} replication {r} fold {f}: test accuracy {accuracy:.4}");
            rows.push(FoldResult {
                model: kind,
                replication: r,
                fold: f,
                accuracy,
                best_epoch: model.best_epoch,
                sentence_dropout: model.sentence_dropout,
            });
        }
    }
    let summary = CvSummary::from_rows(kind, &rows)?;
    Ok(CvOutcome { rows, summary })
}
