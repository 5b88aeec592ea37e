use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// 0-based epoch with the highest validation accuracy; the earliest one
    /// on ties.
    pub best_epoch: usize,
}

/// Stops once the best epoch lies `patience` or more epochs in the past.
/// Only a strict improvement resets the count.
pub fn early_stop(history: &[f64], patience: usize) -> Result<StopDecision> {
    if history.is_empty() {
        return Err(Error::Precondition("early stopping needs at least one epoch".into()));
    }
    let mut best_epoch = 0;
    for (i, &acc) in history.iter().enumerate() {
        if acc > history[best_epoch] {
            best_epoch = i;
        }
    }
    let since_best = history.len() - 1 - best_epoch;
    Ok(StopDecision {
        stop: since_best > 0 && since_best >= patience,
        best_epoch,
    })
}
