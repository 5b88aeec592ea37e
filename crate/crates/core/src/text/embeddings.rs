//! Word vectors in the plain text format: a `V d` header line followed by
//! `V` lines of `word v1 … vd`.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rows for words missing from the vector file are drawn from
/// `U[−UNSEEN_INIT, UNSEEN_INIT]`.
pub const UNSEEN_INIT: f64 = 0.05;

/// Randomly initialized `[V×d]` table with a zero `PAD` row.
pub fn random_embeddings<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Tensor {
    let mut table = Tensor::uniform(&[vocab_size, dim], UNSEEN_INIT, rng);
    table.row_mut(PAD).fill(0.0);
    table
}

/// Builds the embedding table for `vocab` from vector-file text. Words in
/// the vocabulary but not the file keep their random initialization.
pub fn parse_embeddings<R: Rng + ?Sized>(
    source: &str,
    path: &str,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = source.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing `V d` header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [count, file_dim] = fields.as_slice() else {
        return Err(parse_err(1, format!("malformed header {header:?}")));
    };
    let count: usize = count
        .parse()
        .map_err(|_| parse_err(1, format!("bad vector count {count:?}")))?;
    let file_dim: usize = file_dim
        .parse()
        .map_err(|_| parse_err(1, format!("bad dimension {file_dim:?}")))?;
    if file_dim != dim {
        return Err(Error::Config(format!(
            "{path}: vectors have dimension {file_dim} but embedding_dim is {dim}"
        )));
    }

    let mut table = random_embeddings(vocab.len(), dim, rng);
    let mut rows = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default();
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("bad number {v:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(parse_err(
                line_no,
                format!("expected {dim} values for {word:?}, found {}", values.len()),
            ));
        }
        if let Some(id) = vocab.id(word) {
            if id != PAD {
                table.row_mut(id).copy_from_slice(&values);
            }
        }
    }
    if rows != count {
        return Err(parse_err(1, format!("header promises {count} vectors, file has {rows}")));
    }
    Ok(table)
}

pub fn load_embeddings<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let path = path.as_ref();
    let source = fs::read_to_string(path)?;
    parse_embeddings(&source, &path.display().to_string(), vocab, dim, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::PAD_TOKEN;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        let words: Vec<String> = "hello world world".split(' ').map(String::from).collect();
        Vocabulary::build(&words, 10).unwrap()
    }

    #[test]
    fn copies_known_rows_and_randomizes_others() {
        let v = vocab();
        let src = format!("2 4\nhello 1 2 3 4\n{PAD_TOKEN} 9 9 9 9\n");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = parse_embeddings(&src, "v.txt", &v, 4, &mut rng).unwrap();
        assert_eq!(e.shape(), &[v.len(), 4]);
        assert_eq!(e.row(v.id("hello").unwrap()), &[1.0, 2.0, 3.0, 4.0]);
        assert!(e.row(v.id("world").unwrap()).iter().all(|x| x.abs() <= UNSEEN_INIT));
        assert!(e.row(PAD).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn accepts_scientific_notation() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = parse_embeddings("1 2\nworld 1e-3 -2.5E+1\n", "v.txt", &v, 2, &mut rng).unwrap();
        assert_eq!(e.row(v.id("world").unwrap()), &[1e-3, -25.0]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = parse_embeddings("2 2\nhello 1 2\nworld 1 x\n", "v.txt", &v, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_embeddings("2 2\nhello 1 2 3\n", "v.txt", &v, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_embeddings("oops\n", "v.txt", &v, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn dimension_conflict_is_config_error() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = parse_embeddings("1 3\nhello 1 2 3\n", "v.txt", &v, 4, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
