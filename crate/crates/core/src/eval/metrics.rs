use std::collections::HashMap;

use crate::error::{Error, Result};

/// Fraction of documents whose predicted class matches the gold class.
/// Both lists are keyed by document id and must cover the same ids.
pub fn accuracy(predicted: &[(&str, usize)], gold: &[(&str, usize)]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Precondition("no predictions to score".into()));
    }
    if predicted.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    let gold: HashMap<&str, usize> = gold.iter().copied().collect();
    let mut seen = HashMap::new();
    let mut correct = 0usize;
    for &(id, class) in predicted {
        let truth = gold
            .get(id)
            .ok_or_else(|| Error::Validation(format!("prediction for unknown document {id:?}")))?;
        if seen.insert(id, ()).is_some() {
            return Err(Error::Validation(format!("two predictions for document {id:?}")));
        }
        correct += usize::from(*truth == class);
    }
    Ok(correct as f64 / predicted.len() as f64)
}

/// Fraction of the `k` highest-ranked sentences that are gold rationales.
/// `k` is clamped to the number of ranked sentences.
pub fn rationale_precision_at_k(ranked: &[(usize, f64)], gold_mask: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if ranked.is_empty() {
        return Err(Error::Precondition("no ranked sentences".into()));
    }
    let k = k.min(ranked.len());
    let mut hits = 0usize;
    for &(i, _) in &ranked[..k] {
        let is_gold = *gold_mask.get(i).ok_or(Error::Index {
            what: "sentence",
            index: i,
            len: gold_mask.len(),
        })?;
        hits += usize::from(is_gold);
    }
    Ok(hits as f64 / k as f64)
}
