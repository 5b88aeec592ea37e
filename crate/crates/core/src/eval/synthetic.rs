//! Planted-rationale corpora with known ground truth.
//!
//! Every document has a label and `rationales_per_doc` rationale sentences,
//! each carrying `cues_per_rationale` words from the cue lexicon of that
//! label. The remaining sentences are neutral filler. With probability
//! `noise` a filler sentence becomes a *distractor*: it carries as many cues
//! of the opposite label plus one hedge word, and is not a rationale. Only
//! the hedge word tells a distractor from a rationale, and only at the level
//! of the individual sentence.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{CorpusRecord, DocLabel};

fn lexicon(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_docs: usize,
    pub sentences_per_doc: usize,
    pub tokens_per_sentence: usize,
    pub rationales_per_doc: usize,
    pub cues_per_rationale: usize,
    pub positive_lexicon: Vec<String>,
    pub negative_lexicon: Vec<String>,
    pub neutral_lexicon: Vec<String>,
    /// Marks distractor sentences.
    pub hedge_lexicon: Vec<String>,
    /// Probability that a filler sentence is a distractor.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_docs: 600,
            sentences_per_doc: 12,
            tokens_per_sentence: 10,
            rationales_per_doc: 2,
            cues_per_rationale: 3,
            positive_lexicon: lexicon("pos", 40),
            negative_lexicon: lexicon("neg", 40),
            neutral_lexicon: lexicon("neu", 40),
            hedge_lexicon: lexicon("hedge", 10),
            noise: 0.2,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let lexicons = [
            ("positive", &self.positive_lexicon),
            ("negative", &self.negative_lexicon),
            ("neutral", &self.neutral_lexicon),
            ("hedge", &self.hedge_lexicon),
        ];
        let mut owner: std::collections::HashMap<&str, &str> = Default::default();
        for (name, words) in lexicons {
            if words.is_empty() {
                return Err(Error::Config(format!("{name} lexicon is empty")));
            }
            for w in words.iter() {
                if w.is_empty() || w.chars().any(|c| !c.is_ascii_alphanumeric()) || w != &w.to_lowercase() {
                    return Err(Error::Config(format!(
                        "lexicon word {w:?} must be lowercase ASCII letters and digits"
                    )));
                }
                if let Some(prev) = owner.insert(w, name) {
                    if prev != name {
                        return Err(Error::Config(format!(
                            "{w:?} appears in both the {prev} and {name} lexicons"
                        )));
                    }
                }
            }
        }
        if self.num_docs == 0 || self.sentences_per_doc == 0 {
            return Err(Error::Config("num_docs and sentences_per_doc must be positive".into()));
        }
        if self.rationales_per_doc == 0 || self.rationales_per_doc > self.sentences_per_doc {
            return Err(Error::Config(format!(
                "rationales_per_doc must lie in 1..={}",
                self.sentences_per_doc
            )));
        }
        if self.cues_per_rationale == 0 || self.cues_per_rationale + 1 > self.tokens_per_sentence {
            return Err(Error::Config(
                "tokens_per_sentence must leave room for the cues and a hedge word".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentenceKind {
    Rationale,
    Neutral,
    Distractor,
}

/// A generated document with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDocument {
    pub doc_id: String,
    pub label: DocLabel,
    /// Words of each sentence, lowercase, without the final period.
    pub words: Vec<Vec<String>>,
    pub kinds: Vec<SentenceKind>,
}

impl SyntheticDocument {
    pub fn rationale_mask(&self) -> Vec<bool> {
        self.kinds.iter().map(|k| *k == SentenceKind::Rationale).collect()
    }

    /// Sentence `i` as text: first letter capitalized, final period.
    pub fn sentence_text(&self, i: usize) -> String {
        let joined = self.words[i].join(" ");
        let mut chars = joined.chars();
        match chars.next() {
            Some(first) => format!("{}{}.", first.to_ascii_uppercase(), chars.as_str()),
            None => String::new(),
        }
    }

    pub fn text(&self) -> String {
        (0..self.words.len())
            .map(|i| self.sentence_text(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The tokens the tokenizer should produce for sentence `i`.
    pub fn expected_tokens(&self, i: usize) -> Vec<String> {
        let mut t = self.words[i].clone();
        t.push(".".into());
        t
    }

    pub fn to_record(&self) -> CorpusRecord {
        CorpusRecord {
            doc_id: self.doc_id.clone(),
            text: Some(self.text()),
            sentences: None,
            label: self.label,
            rationale_sentence_indices: Some(
                self.rationale_mask()
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r)
                    .map(|(i, _)| i)
                    .collect(),
            ),
            rationale_char_spans: None,
        }
    }
}

fn sentence<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    cues: Option<&[String]>,
    hedge: bool,
    rng: &mut R,
) -> Vec<String> {
    let mut words: Vec<String> = (0..spec.tokens_per_sentence)
        .map(|_| spec.neutral_lexicon.choose(rng).cloned().unwrap_or_default())
        .collect();
    let mut slots: Vec<usize> = (0..spec.tokens_per_sentence).collect();
    slots.shuffle(rng);
    let mut slots = slots.into_iter();
    if let Some(lex) = cues {
        for _ in 0..spec.cues_per_rationale {
            if let (Some(s), Some(w)) = (slots.next(), lex.choose(rng)) {
                words[s] = w.clone();
            }
        }
    }
    if hedge {
        if let (Some(s), Some(w)) = (slots.next(), spec.hedge_lexicon.choose(rng)) {
            words[s] = w.clone();
        }
    }
    words
}

/// Generates the corpus described by `spec`; identical specs give
/// identical documents.
pub fn generate_documents(spec: &SyntheticSpec) -> Result<Vec<SyntheticDocument>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.num_docs.to_string().len().max(4);
    let mut docs = Vec::with_capacity(spec.num_docs);
    for d in 0..spec.num_docs {
        let label = if rng.gen_bool(0.5) {
            DocLabel::Positive
        } else {
            DocLabel::Negative
        };
        let (own, other) = match label {
            DocLabel::Positive => (&spec.positive_lexicon, &spec.negative_lexicon),
            DocLabel::Negative => (&spec.negative_lexicon, &spec.positive_lexicon),
        };
        let mut positions: Vec<usize> = (0..spec.sentences_per_doc).collect();
        positions.shuffle(&mut rng);
        let planted: HashSet<usize> = positions[..spec.rationales_per_doc].iter().copied().collect();
        let mut words = Vec::with_capacity(spec.sentences_per_doc);
        let mut kinds = Vec::with_capacity(spec.sentences_per_doc);
        for s in 0..spec.sentences_per_doc {
            if planted.contains(&s) {
                words.push(sentence(spec, Some(own), false, &mut rng));
                kinds.push(SentenceKind::Rationale);
            } else if rng.gen_bool(spec.noise) {
                words.push(sentence(spec, Some(other), true, &mut rng));
                kinds.push(SentenceKind::Distractor);
            } else {
                words.push(sentence(spec, None, false, &mut rng));
                kinds.push(SentenceKind::Neutral);
            }
        }
        docs.push(SyntheticDocument {
            doc_id: format!("syn-{d:0width$}"),
            label,
            words,
            kinds,
        });
    }
    Ok(docs)
}

/// The corpus as records in the on-disk format.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<CorpusRecord>> {
    Ok(generate_documents(spec)?.iter().map(SyntheticDocument::to_record).collect())
}

/// Bag-of-words baseline: predicts the label whose cue words occur more
/// often anywhere in the document; `None` on a tie.
pub fn cue_oracle(spec: &SyntheticSpec, words: &[Vec<String>]) -> Option<DocLabel> {
    let pos: HashSet<&str> = spec.positive_lexicon.iter().map(String::as_str).collect();
    let neg: HashSet<&str> = spec.negative_lexicon.iter().map(String::as_str).collect();
    let mut balance = 0i64;
    for w in words.iter().flatten() {
        if pos.contains(w.as_str()) {
            balance += 1;
        } else if neg.contains(w.as_str()) {
            balance -= 1;
        }
    }
    match balance.cmp(&0) {
        std::cmp::Ordering::Greater => Some(DocLabel::Positive),
        std::cmp::Ordering::Less => Some(DocLabel::Negative),
        std::cmp::Ordering::Equal => None,
    }
}
