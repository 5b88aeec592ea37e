//! Sentence-level and document-level fitting, and the full per-fold
//! training procedure built from them.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adadelta::Adadelta;
use super::config::TrainConfig;
use super::early_stop::early_stop;
use super::parallel::Workers;
use super::sampler::{balanced_downsample, sentence_pool, SentenceRef};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::models::forward::predict_as;
use crate::models::{
    document_loss, sentence_loss, BoundParams, ForwardOptions, ModelKind, ModelParams, Trainable,
};
use crate::tensor::{Mode, Tensor};
use crate::text::Document;

/// Mean-loss gradient over one mini-batch, in slot order (`None` for frozen
/// slots), plus the mean loss. Item `i` draws its dropout masks from
/// `seeds[i]`, so the result does not depend on the worker count.
pub fn batch_gradients<F>(
    params: &ModelParams,
    trainable: Trainable,
    seeds: &[u64],
    workers: &Workers,
    loss_of: F,
) -> Result<(Vec<Option<Tensor>>, f64)>
where
    F: Fn(&mut Graph<'_>, &BoundParams, usize, &mut ChaCha8Rng) -> Result<NodeId> + Sync + Send,
{
    if seeds.is_empty() {
        return Err(Error::Precondition("empty mini-batch".into()));
    }
    let per_item = workers.map(seeds.len(), |i| {
        let mut g = Graph::new();
        let bound = params.bind(&mut g, trainable);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[i]);
        let loss = loss_of(&mut g, &bound, i, &mut rng)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        Ok::<_, Error>((bound.slot_grads(grads), value))
    });

    let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let mut acc: Vec<Option<Tensor>> = vec![None; shapes.len()];
    let mut total = 0.0;
    for item in per_item {
        let (grads, loss) = item?;
        total += loss;
        for (slot, grad) in grads.into_iter().enumerate() {
            if let Some(grad) = grad {
                let a = acc[slot].get_or_insert_with(|| Tensor::zeros(&shapes[slot]));
                grad.accumulate_into(a)?;
            }
        }
    }
    let scale = 1.0 / seeds.len() as f64;
    for t in acc.iter_mut().flatten() {
        t.scale_in_place(scale);
    }
    Ok((acc, total * scale))
}

fn draw_seeds<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u64> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Fits `E`, `C` and `W_sen` on class-balanced sentence samples for
/// `config.sentence_epochs` epochs. Returns the mean training loss of each
/// epoch.
pub fn train_sentence_phase<R: Rng + ?Sized>(
    params: &mut ModelParams,
    docs: &[&Document],
    config: &TrainConfig,
    workers: &Workers,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if params.sentence_head.is_none() {
        return Err(Error::Capability(format!(
            "{} has no sentence head to train",
            params.kind
        )));
    }
    let pool = sentence_pool(docs);
    if !pool.iter().any(|s| s.label != crate::text::SentenceLabel::Neutral) {
        return Err(Error::Data(
            "no rationale sentences in the training data; the sentence phase is undefined".into(),
        ));
    }
    let mut opt = Adadelta::new(params, config.rho, config.epsilon);
    let mut losses = Vec::with_capacity(config.sentence_epochs);
    for epoch in 0..config.sentence_epochs {
        let sample: Vec<SentenceRef> = balanced_downsample(&pool, |s| s.label, rng)?;
        let mut epoch_loss = 0.0;
        for batch in sample.chunks(config.batch_size) {
            let seeds = draw_seeds(batch.len(), rng);
            let (grads, loss) =
                batch_gradients(params, Trainable::SENTENCE_PHASE, &seeds, workers, |g, bound, i, r| {
                    let s = batch[i];
                    let tokens = &docs[s.doc].sentences[s.sentence];
                    let (loss, _) = sentence_loss(
                        g,
                        bound,
                        tokens,
                        s.label,
                        config.sentence_phase_dropout,
                        Mode::Train,
                        r,
                    )?;
                    Ok(loss)
                })?;
            opt.step(params, &grads)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let mean = epoch_loss / sample.len() as f64;
        debug!("sentence epoch {epoch}: {} sentences, loss {mean:.5}", sample.len());
        losses.push(mean);
    }
    Ok(losses)
}

/// Outcome of document-level fitting with early stopping.
#[derive(Clone, Debug)]
pub struct DocumentFit {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: ModelParams,
    /// Validation accuracy after each epoch.
    pub history: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

/// Eval-mode accuracy of `params` run as `arch` over `docs`.
pub fn evaluate_accuracy(
    params: &ModelParams,
    arch: ModelKind,
    docs: &[&Document],
    workers: &Workers,
) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Precondition("no documents to evaluate".into()));
    }
    let hits = workers.map(docs.len(), |i| {
        predict_as(params, arch, docs[i]).map(|p| p.predicted_class == docs[i].label.index())
    });
    let mut correct = 0usize;
    for h in hits {
        correct += usize::from(h?);
    }
    Ok(correct as f64 / docs.len() as f64)
}

/// Trains against document cross-entropy with ADADELTA, evaluating on
/// `validation` after each epoch and stopping early. Slots not selected by
/// `trainable` are left bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn train_document_phase<R: Rng + ?Sized>(
    init: ModelParams,
    arch: ModelKind,
    train: &[&Document],
    validation: &[&Document],
    sentence_dropout: f64,
    trainable: Trainable,
    config: &TrainConfig,
    workers: &Workers,
    rng: &mut R,
) -> Result<DocumentFit> {
    if train.is_empty() {
        return Err(Error::Data("no training documents".into()));
    }
    let mut params = init;
    let mut opt = Adadelta::new(&params, config.rho, config.epsilon);
    let opts = ForwardOptions::train(sentence_dropout, config.document_dropout);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut train_losses = Vec::new();

    for epoch in 0..config.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let seeds = draw_seeds(batch.len(), rng);
            let (grads, loss) = batch_gradients(&params, trainable, &seeds, workers, |g, bound, i, r| {
                document_loss(g, bound, arch, train[batch[i]], &opts, r).map(|(loss, _)| loss)
            })?;
            opt.step(&mut params, &grads)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let acc = evaluate_accuracy(&params, arch, validation, workers)?;
        let improved = history.iter().all(|&h| acc > h);
        history.push(acc);
        train_losses.push(epoch_loss / train.len() as f64);
        if improved {
            best = params.clone();
        }
        debug!(
            "{arch} epoch {epoch}: loss {:.5}, validation accuracy {acc:.4}",
            train_losses[epoch]
        );
        if early_stop(&history, config.patience)?.stop {
            break;
        }
    }
    if history.is_empty() {
        return Err(Error::Config("max_epochs must be at least 1".into()));
    }
    let decision = early_stop(&history, config.patience)?;
    Ok(DocumentFit {
        params: best,
        best_accuracy: history[decision.best_epoch],
        best_epoch: decision.best_epoch,
        history,
        train_losses,
    })
}

/// A model fitted on one training split.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Chosen sentence dropout (hierarchical models only).
    pub sentence_dropout: Option<f64>,
    pub best_epoch: usize,
    pub validation_accuracy: f64,
    /// Mean sentence-phase loss per epoch (RA-CNN only).
    pub sentence_losses: Vec<f64>,
}

/// Fresh parameters for `kind` under `config`.
pub fn init_params<R: Rng + ?Sized>(
    kind: ModelKind,
    config: &TrainConfig,
    vocab_size: usize,
    embeddings: Option<&Tensor>,
    rng: &mut R,
) -> Result<ModelParams> {
    ModelParams::init(&config.model_shape(kind, vocab_size), embeddings.cloned(), rng)
}

/// The complete procedure for one training split: for RA-CNN the sentence
/// phase followed by document training with `W_sen` frozen; for the other
/// models document training alone. Hierarchical models try every rate of
/// the sentence-dropout grid from the same starting point and keep the one
/// with the best validation accuracy (the smallest rate on ties).
pub fn train_model<R: Rng + ?Sized>(
    kind: ModelKind,
    train: &[&Document],
    validation: &[&Document],
    vocab_size: usize,
    embeddings: Option<&Tensor>,
    config: &TrainConfig,
    workers: &Workers,
    rng: &mut R,
) -> Result<TrainedModel> {
    let mut params = init_params(kind, config, vocab_size, embeddings, rng)?;
    let mut sentence_losses = Vec::new();
    let trainable = if kind == ModelKind::RaCnn {
        sentence_losses = train_sentence_phase(&mut params, train, config, workers, rng)?;
        Trainable::DOCUMENT_PHASE
    } else {
        Trainable::ALL
    };

    if !kind.is_hierarchical() {
        let fit = train_document_phase(params, kind, train, validation, 0.0, trainable, config, workers, rng)?;
        info!("{kind}: validation accuracy {:.4} at epoch {}", fit.best_accuracy, fit.best_epoch);
        return Ok(TrainedModel {
            params: fit.params,
            sentence_dropout: None,
            best_epoch: fit.best_epoch,
            validation_accuracy: fit.best_accuracy,
            sentence_losses,
        });
    }

    let mut grid = config.sentence_dropout_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let start = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut best: Option<(f64, DocumentFit)> = None;
    for &rate in &grid {
        let mut run_rng = start.clone();
        let fit = train_document_phase(
            params.clone(),
            kind,
            train,
            validation,
            config.doc_phase_sentence_dropout(rate),
            trainable,
            config,
            workers,
            &mut run_rng,
        )?;
        info!(
            "{kind}: sentence dropout {rate}: validation accuracy {:.4} at epoch {}",
            fit.best_accuracy, fit.best_epoch
        );
        if best.as_ref().map_or(true, |(_, b)| fit.best_accuracy > b.best_accuracy) {
            best = Some((rate, fit));
        }
    }
    let (rate, fit) = best.ok_or_else(|| Error::Config("sentence_dropout_grid is empty".into()))?;
    Ok(TrainedModel {
        params: fit.params,
        sentence_dropout: Some(rate),
        best_epoch: fit.best_epoch,
        validation_accuracy: fit.best_accuracy,
        sentence_losses,
    })
}

/// Splits `indices` into (train, validation) with
/// `max(1, round(fraction · n))` validation items.
pub fn split_validation<R: Rng + ?Sized>(
    indices: &[usize],
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if indices.len() < 2 {
        return Err(Error::Config(format!(
            "cannot hold out a validation set from {} training documents",
            indices.len()
        )));
    }
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(rng);
    let n_val = ((fraction * indices.len() as f64).round() as usize).clamp(1, indices.len() - 1);
    let train = shuffled.split_off(n_val);
    Ok((train, shuffled))
}
