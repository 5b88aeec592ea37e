//! Rule-based sentence splitting and tokenization.
//!
//! A sentence boundary is placed after a run of `.`, `?` or `!` (plus any
//! closing quotes or brackets) when it is followed by whitespace and then
//! an uppercase letter or a digit, optionally behind an opening quote or
//! bracket. A period ending one of [`ABBREVIATIONS`] never ends a sentence.

/// Lowercased words (without their final period) that never end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "al", "approx", "apr", "aug", "ca", "cf", "co", "corp", "dec", "dept", "dr", "e.g", "eq",
    "est", "et", "etc", "feb", "fig", "figs", "gen", "gov", "i.e", "inc", "jan", "jr", "jul",
    "jun", "ltd", "mar", "mr", "mrs", "ms", "mt", "no", "nov", "oct", "p", "pp", "prof", "ref",
    "rev", "sep", "sept", "sr", "st", "vol", "vs",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// The word immediately before byte offset `end` (exclusive), lowercased.
fn word_before(text: &str, end: usize) -> String {
    let start = text[..end]
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace() || matches!(c, '(' | '[' | '"'))
        .map_or(0, |(i, c)| i + c.len_utf8());
    text[start..end].to_lowercase()
}

/// Byte spans `[start, end)` of each sentence, trimmed of surrounding
/// whitespace, in order.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() && !c.is_whitespace() {
            start = Some(pos);
        }
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let run_start = pos;
        let mut j = i;
        while j < chars.len() && is_terminal(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let had_space = k > j;
        if k < chars.len() && is_opener(chars[k].1) && k + 1 < chars.len() {
            k += 1;
        }
        let next_starts = chars
            .get(k)
            .is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit());
        let single_period = text[run_start..].starts_with('.')
            && !chars.get(i + 1).is_some_and(|&(_, n)| is_terminal(n));
        let abbreviation = single_period && {
            let w = word_before(text, run_start);
            ABBREVIATIONS.contains(&w.as_str())
                || (w.chars().count() == 1 && w.chars().all(char::is_alphabetic))
        };
        if had_space && next_starts && !abbreviation {
            if let Some(s) = start.take() {
                spans.push((s, end));
            }
        }
        i = j;
    }
    if let Some(s) = start {
        let trimmed_end = s + text[s..].trim_end().len();
        if trimmed_end > s {
            spans.push((s, trimmed_end));
        }
    }
    spans
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| &text[s..e])
        .collect()
}

/// Lowercases, pads ASCII punctuation (other than in-word apostrophes and
/// hyphens) with spaces, and splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let lower = sentence.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut padded = String::with_capacity(lower.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        let inner = |c: char| c == '\'' || c == '-';
        let in_word = i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_alphanumeric()
            && chars[i + 1].is_alphanumeric();
        if c.is_ascii_punctuation() && !(inner(c) && in_word) {
            padded.push(' ');
            padded.push(c);
            padded.push(' ');
        } else {
            padded.push(c);
        }
    }
    padded.split_whitespace().map(str::to_owned).collect()
}
