use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const OOV: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<unk>";

/// Token ↔ id mapping with `PAD = 0` and `OOV = 1` always present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size − 2` most frequent tokens; equal counts are
    /// ordered lexicographically.
    pub fn build<'t, I, S>(tokens: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'t S>,
        S: AsRef<str> + 't + ?Sized,
    {
        if max_size < 3 {
            return Err(Error::Config(format!(
                "vocabulary max size must be at least 3, got {max_size}"
            )));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for t in tokens {
            *freq.entry(t.as_ref()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|(t, _)| *t != PAD_TOKEN && *t != OOV_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);

        let mut tokens = vec![PAD_TOKEN.to_owned(), OOV_TOKEN.to_owned()];
        let mut counts = vec![0, 0];
        for (t, c) in ranked {
            tokens.push(t.to_owned());
            counts.push(c);
        }
        Ok(Self::from_parts(tokens, counts))
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`OOV`].
    pub fn lookup(&self, token: &str) -> usize {
        self.id(token).unwrap_or(OOV)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}
