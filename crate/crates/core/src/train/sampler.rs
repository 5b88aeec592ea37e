use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::text::{derive_sentence_labels, Document, SentenceLabel};

/// A sentence addressed by `(document index, sentence index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceRef {
    pub doc: usize,
    pub sentence: usize,
    pub label: SentenceLabel,
}

/// All sentences of `docs` with their derived labels.
pub fn sentence_pool(docs: &[&Document]) -> Vec<SentenceRef> {
    docs.iter()
        .enumerate()
        .flat_map(|(d, doc)| {
            derive_sentence_labels(doc)
                .into_iter()
                .enumerate()
                .map(move |(s, label)| SentenceRef {
                    doc: d,
                    sentence: s,
                    label,
                })
        })
        .collect()
}

/// Draws `m` sentences of each class without replacement, where `m` is the
/// size of the smallest class, and shuffles the result.
pub fn balanced_downsample<T: Copy, R: Rng + ?Sized>(
    pool: &[T],
    label_of: impl Fn(&T) -> SentenceLabel,
    rng: &mut R,
) -> Result<Vec<T>> {
    let mut by_class: [Vec<T>; SentenceLabel::COUNT] = Default::default();
    for item in pool {
        by_class[label_of(item).index()].push(*item);
    }
    if let Some(empty) = SentenceLabel::ALL.iter().find(|l| by_class[l.index()].is_empty()) {
        return Err(Error::Data(format!(
            "no {} sentences to sample; sentence training needs all three classes",
            empty.name()
        )));
    }
    let m = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let mut sample = Vec::with_capacity(m * SentenceLabel::COUNT);
    for class in &mut by_class {
        let (chosen, _) = class.partial_shuffle(rng, m);
        sample.extend_from_slice(chosen);
    }
    sample.shuffle(rng);
    Ok(sample)
}
