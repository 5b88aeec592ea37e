use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{predict, rank_rationales, ModelParams, Prediction};
use crate::text::{DocLabel, Document, TextDocument};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSentence {
    pub index: usize,
    pub text: String,
    /// `max(p_pos, p_neg)`.
    pub score: f64,
}

/// Why a document received its label: the top-scoring rationale sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub doc_id: String,
    pub predicted_label: DocLabel,
    pub probability: f64,
    pub top_sentences: Vec<RankedSentence>,
    pub gold_label: Option<DocLabel>,
    pub gold_rationales: Option<Vec<bool>>,
}

/// Explains one document. `k` is clamped to the sentence count; the second
/// value reports whether clamping happened.
pub fn explain_document(
    params: &ModelParams,
    text: &TextDocument,
    doc: &Document,
    k: usize,
) -> Result<(ExplanationReport, bool)> {
    if k == 0 {
        return Err(Error::Config("--k must be at least 1".into()));
    }
    if text.sentences.len() != doc.sentences.len() {
        return Err(Error::Precondition(format!(
            "document {} has {} text sentences but {} indexed ones",
            doc.doc_id,
            text.sentences.len(),
            doc.sentences.len()
        )));
    }
    let pred: Prediction = predict(params, doc)?;
    let ranked = rank_rationales(&pred)?;
    let clamped = k > ranked.len();
    let top_sentences = ranked
        .into_iter()
        .take(k)
        .map(|(index, score)| RankedSentence {
            index,
            text: text.sentences[index].clone(),
            score,
        })
        .collect();
    Ok((
        ExplanationReport {
            doc_id: doc.doc_id.clone(),
            predicted_label: DocLabel::from_index(pred.predicted_class)?,
            probability: pred.confidence(),
            top_sentences,
            gold_label: Some(text.label),
            gold_rationales: Some(text.rationale_mask.clone()),
        },
        clamped,
    ))
}
