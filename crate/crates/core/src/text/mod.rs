//! From raw labeled text to token-id documents.

pub mod corpus;
pub mod embeddings;
pub mod split;
pub mod vocab;

pub use corpus::{
    build_vocabulary, derive_sentence_labels, index_corpus, load_corpus, pad_tokens, parse_corpus,
    write_corpus, CorpusRecord, DocLabel, Document, PaddingPolicy, SentenceLabel, TextDocument,
};
pub use embeddings::{load_embeddings, parse_embeddings, random_embeddings};
pub use split::{sentence_spans, split_sentences, tokenize};
pub use vocab::{Vocabulary, OOV, PAD};
