//! Line-delimited JSON corpus records and the documents built from them.
//!
//! Each non-blank line is one object:
//!
//! ```text
//! {"doc_id": "d1", "text": "...", "label": "pos", "rationale_sentence_indices": [1]}
//! {"doc_id": "d2", "sentences": ["...", "..."], "label": "neg", "rationale_sentence_indices": []}
//! {"doc_id": "d3", "text": "...", "label": "neg", "rationale_char_spans": [[10, 24]]}
//! ```
//!
//! Exactly one of `text`/`sentences` and exactly one of
//! `rationale_sentence_indices`/`rationale_char_spans` must be present.
//! Character spans are byte offsets into `text`; every sentence overlapping
//! a span is marked as a rationale.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{sentence_spans, tokenize};
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocLabel {
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "pos")]
    Positive,
}

impl DocLabel {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            DocLabel::Negative => 0,
            DocLabel::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(DocLabel::Negative),
            1 => Ok(DocLabel::Positive),
            _ => Err(Error::Config(format!(
                "document label index {i}: only binary labels are supported"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocLabel::Negative => "neg",
            DocLabel::Positive => "pos",
        }
    }
}

/// Sentence classes for the rationale classifier, in softmax order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SentenceLabel {
    Neutral,
    PosRationale,
    NegRationale,
}

impl SentenceLabel {
    pub const COUNT: usize = 3;
    pub const ALL: [SentenceLabel; 3] = [
        SentenceLabel::Neutral,
        SentenceLabel::PosRationale,
        SentenceLabel::NegRationale,
    ];

    pub fn index(self) -> usize {
        match self {
            SentenceLabel::Neutral => 0,
            SentenceLabel::PosRationale => 1,
            SentenceLabel::NegRationale => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SentenceLabel::Neutral => "neutral",
            SentenceLabel::PosRationale => "positive rationale",
            SentenceLabel::NegRationale => "negative rationale",
        }
    }
}

/// One corpus line, as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    pub label: DocLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_sentence_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale_char_spans: Option<Vec<(usize, usize)>>,
}

/// A validated document whose sentences are still text.
#[derive(Clone, Debug, PartialEq)]
pub struct TextDocument {
    pub doc_id: String,
    pub sentences: Vec<String>,
    pub label: DocLabel,
    pub rationale_mask: Vec<bool>,
}

/// A document of token ids, ready for the models.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<usize>>,
    pub label: DocLabel,
    pub rationale_mask: Vec<bool>,
}

impl Document {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn has_rationales(&self) -> bool {
        self.rationale_mask.iter().any(|&r| r)
    }
}

/// How raw sentences become fixed-size token-id lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaddingPolicy {
    /// Longer sentences are truncated to this many tokens.
    pub max_tokens: usize,
    /// Shorter sentences are right-padded with `PAD` to this length
    /// (the tallest filter height).
    pub min_tokens: usize,
}

pub fn pad_tokens(mut ids: Vec<usize>, min_len: usize) -> Vec<usize> {
    if ids.len() < min_len {
        ids.resize(min_len, PAD);
    }
    ids
}

impl TextDocument {
    pub fn tokens(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.sentences.iter().map(|s| tokenize(s))
    }

    pub fn index(&self, vocab: &Vocabulary, policy: PaddingPolicy) -> Document {
        let sentences = self
            .tokens()
            .map(|toks| {
                let ids: Vec<usize> = toks
                    .iter()
                    .take(policy.max_tokens)
                    .map(|t| vocab.lookup(t))
                    .collect();
                pad_tokens(ids, policy.min_tokens)
            })
            .collect();
        Document {
            doc_id: self.doc_id.clone(),
            sentences,
            label: self.label,
            rationale_mask: self.rationale_mask.clone(),
        }
    }
}

/// Builds a vocabulary over every token of `docs`.
pub fn build_vocabulary(docs: &[TextDocument], max_size: usize) -> Result<Vocabulary> {
    let tokens: Vec<String> = docs.iter().flat_map(TextDocument::tokens).flatten().collect();
    Vocabulary::build(&tokens, max_size)
}

pub fn index_corpus(docs: &[TextDocument], vocab: &Vocabulary, policy: PaddingPolicy) -> Vec<Document> {
    docs.iter().map(|d| d.index(vocab, policy)).collect()
}

/// Rationales in positive documents are positive rationales, rationales in
/// negative documents are negative rationales, everything else is neutral.
pub fn derive_sentence_labels(doc: &Document) -> Vec<SentenceLabel> {
    doc.rationale_mask
        .iter()
        .map(|&is_rationale| match (is_rationale, doc.label) {
            (false, _) => SentenceLabel::Neutral,
            (true, DocLabel::Positive) => SentenceLabel::PosRationale,
            (true, DocLabel::Negative) => SentenceLabel::NegRationale,
        })
        .collect()
}

impl CorpusRecord {
    /// Validates the record and resolves its rationale annotations to a
    /// per-sentence mask.
    pub fn into_document(self) -> Result<TextDocument> {
        let id = self.doc_id.clone();
        let (sentences, spans): (Vec<String>, Option<Vec<(usize, usize)>>) =
            match (self.text, self.sentences) {
                (Some(text), None) => {
                    let spans = sentence_spans(&text);
                    let sents = spans.iter().map(|&(s, e)| text[s..e].to_owned()).collect();
                    (sents, Some(spans))
                }
                (None, Some(sents)) => (sents, None),
                _ => {
                    return Err(Error::Validation(format!(
                        "document {id}: exactly one of `text` or `sentences` is required"
                    )))
                }
            };
        if sentences.is_empty() {
            return Err(Error::Validation(format!("document {id} has no sentences")));
        }
        let n = sentences.len();
        let mut mask = vec![false; n];
        match (self.rationale_sentence_indices, self.rationale_char_spans) {
            (Some(indices), None) => {
                for i in indices {
                    if i >= n {
                        return Err(Error::Validation(format!(
                            "document {id}: rationale index {i} out of range for {n} sentences"
                        )));
                    }
                    mask[i] = true;
                }
            }
            (None, Some(char_spans)) => {
                let Some(sent_spans) = spans else {
                    return Err(Error::Validation(format!(
                        "document {id}: rationale_char_spans require the `text` form"
                    )));
                };
                for (start, end) in char_spans {
                    if start >= end {
                        return Err(Error::Validation(format!(
                            "document {id}: empty rationale span [{start}, {end})"
                        )));
                    }
                    let mut hit = false;
                    for (k, &(s, e)) in sent_spans.iter().enumerate() {
                        if start < e && s < end {
                            mask[k] = true;
                            hit = true;
                        }
                    }
                    if !hit {
                        return Err(Error::Validation(format!(
                            "document {id}: rationale span [{start}, {end}) touches no sentence"
                        )));
                    }
                }
            }
            _ => {
                return Err(Error::Validation(format!(
                    "document {id}: exactly one of `rationale_sentence_indices` or \
                     `rationale_char_spans` is required"
                )))
            }
        }
        Ok(TextDocument {
            doc_id: self.doc_id,
            sentences,
            label: self.label,
            rationale_mask: mask,
        })
    }
}

pub fn parse_corpus(source: &str, path: &str) -> Result<Vec<TextDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        let doc = record.into_document().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{path}:{line_no}: {m}")),
            other => other,
        })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::Validation(format!(
                "{path}:{line_no}: duplicate doc_id {}",
                doc.doc_id
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TextDocument>> {
    let path = path.as_ref();
    let source = fs::read_to_string(path)?;
    parse_corpus(&source, &path.display().to_string())
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Data(e.to_string()))?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(lines: &str) -> Result<Vec<TextDocument>> {
        parse_corpus(lines, "test.jsonl")
    }

    #[test]
    fn sentence_index_rationales() {
        let docs = parse(
            r#"{"doc_id":"a","sentences":["One.","Two.","Three."],"label":"pos","rationale_sentence_indices":[1]}"#,
        )
        .unwrap();
        assert_eq!(docs[0].rationale_mask, vec![false, true, false]);
        assert_eq!(docs[0].label, DocLabel::Positive);
    }

    #[test]
    fn char_spans_mark_whole_sentences() {
        let text = "First one here. Second has the snippet. Third.";
        let start = text.find("the snippet").unwrap();
        let line = format!(
            r#"{{"doc_id":"a","text":"{text}","label":"neg","rationale_char_spans":[[{start},{}]]}}"#,
            start + 3
        );
        let docs = parse(&line).unwrap();
        assert_eq!(docs[0].sentences.len(), 3);
        assert_eq!(docs[0].rationale_mask, vec![false, true, false]);

        // a span straddling a boundary marks both sentences
        let cross = text.find("here").unwrap();
        let line = format!(
            r#"{{"doc_id":"a","text":"{text}","label":"neg","rationale_char_spans":[[{cross},{}]]}}"#,
            cross + 12
        );
        assert_eq!(parse(&line).unwrap()[0].rationale_mask, vec![true, true, false]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rec = r#"{"doc_id":"a","sentences":["x"],"label":"pos","rationale_sentence_indices":[]}"#;
        let err = parse(&format!("{rec}\n{rec}")).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
    }

    #[test]
    fn out_of_range_rationale_is_validation_error() {
        let err = parse(
            r#"{"doc_id":"a","sentences":["x"],"label":"pos","rationale_sentence_indices":[3]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let good = r#"{"doc_id":"a","sentences":["x"],"label":"pos","rationale_sentence_indices":[]}"#;
        let bad = r#"{"doc_id":"b","sentences":["x"],"label":"maybe","rationale_sentence_indices":[]}"#;
        match parse(&format!("{good}\n\n{bad}")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let unknown = r#"{"doc_id":"b","sentences":["x"],"label":"pos","rationale_sentence_indices":[],"extra":1}"#;
        assert!(matches!(parse(unknown), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn both_rationale_forms_rejected() {
        let rec = r#"{"doc_id":"a","text":"A b.","label":"pos","rationale_sentence_indices":[0],"rationale_char_spans":[[0,1]]}"#;
        assert!(matches!(parse(rec), Err(Error::Validation(_))));
        let rec = r#"{"doc_id":"a","text":"A b.","sentences":["A b."],"label":"pos","rationale_sentence_indices":[0]}"#;
        assert!(matches!(parse(rec), Err(Error::Validation(_))));
    }

    #[test]
    fn sentence_labels_follow_document_polarity() {
        let doc = |label, mask: Vec<bool>| Document {
            doc_id: "d".into(),
            sentences: vec![vec![2]; mask.len()],
            label,
            rationale_mask: mask,
        };
        use SentenceLabel::*;
        assert_eq!(
            derive_sentence_labels(&doc(DocLabel::Positive, vec![true, false])),
            vec![PosRationale, Neutral]
        );
        assert_eq!(
            derive_sentence_labels(&doc(DocLabel::Negative, vec![false, true])),
            vec![Neutral, NegRationale]
        );
        assert_eq!(
            derive_sentence_labels(&doc(DocLabel::Negative, vec![false, false])),
            vec![Neutral, Neutral]
        );
    }

    #[test]
    fn indexing_truncates_and_pads() {
        let td = TextDocument {
            doc_id: "d".into(),
            sentences: vec!["a b c d e f".into(), "a".into(), "".into()],
            label: DocLabel::Positive,
            rationale_mask: vec![false; 3],
        };
        let vocab = build_vocabulary(std::slice::from_ref(&td), 100).unwrap();
        let doc = td.index(
            &vocab,
            PaddingPolicy {
                max_tokens: 4,
                min_tokens: 3,
            },
        );
        assert_eq!(doc.sentences[0].len(), 4);
        assert_eq!(doc.sentences[1], vec![vocab.lookup("a"), PAD, PAD]);
        assert_eq!(doc.sentences[2], vec![PAD, PAD, PAD]);
        assert!(doc
            .sentences
            .iter()
            .flatten()
            .all(|&id| id < vocab.len()));
    }
}
