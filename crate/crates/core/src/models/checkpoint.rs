//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"RACNNCKP"  u32 version
//! u64 header length, JSON header (kind, config, vocabulary, sentence dropout)
//! u32 tensor count
//! per tensor: u16 name length, name, u32 rank, rank × u64 dims, f64 data
//! ```
//!
//! Floats are stored as raw bits, so a save/load cycle is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttentionParams, ModelKind, ModelParams};
use crate::encoder::FilterBank;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::Vocabulary;
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 8] = b"RACNNCKP";
pub const VERSION: u32 = 1;

/// A trained model together with what is needed to apply it to new text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    /// Sentence dropout picked on validation data (hierarchical models).
    pub sentence_dropout: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    config: TrainConfig,
    vocab_tokens: Vec<String>,
    vocab_counts: Vec<u64>,
    sentence_dropout: Option<f64>,
}

fn corrupt(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line: 0,
        message: message.into(),
    }
}

impl Checkpoint {
    /// Fails when the parameters disagree with the config or vocabulary.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (p, c) = (&self.params, &self.config);
        if p.filters.heights != c.filter_heights
            || p.filters.maps_per_height != c.maps_for(p.kind)
            || p.embedding_dim() != c.embedding_dim
            || p.vocab_size() != self.vocab.len()
        {
            return Err(Error::Precondition(format!(
                "{} parameters (heights {:?}, {} maps, d = {}, V = {}) do not match the config \
                 (heights {:?}, {} maps, d = {}) and vocabulary (V = {})",
                p.kind,
                p.filters.heights,
                p.filters.maps_per_height,
                p.embedding_dim(),
                p.vocab_size(),
                c.filter_heights,
                c.maps_for(p.kind),
                c.embedding_dim,
                self.vocab.len()
            )));
        }
        let header = Header {
            kind: self.params.kind,
            config: self.config.clone(),
            vocab_tokens: self.vocab.tokens().to_vec(),
            vocab_counts: self.vocab.counts().to_vec(),
            sentence_dropout: self.sentence_dropout,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Contract(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != MAGIC {
            return Err(corrupt(path, "not a checkpoint file (bad magic)"));
        }
        let version = read_u32(&mut r, path)?;
        if version != VERSION {
            return Err(corrupt(path, format!("unsupported checkpoint version {version}")));
        }
        let header_len = read_u64(&mut r, path)? as usize;
        if header_len > r.len() {
            return Err(corrupt(path, "truncated header"));
        }
        let header: Header = serde_json::from_slice(&r[..header_len])
            .map_err(|e| corrupt(path, format!("bad header: {e}")))?;
        r = &r[header_len..];
        header.config.validate()?;

        let count = read_u32(&mut r, path)? as usize;
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u16(&mut r, path)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut r, &mut name, path)?;
            let name = String::from_utf8(name).map_err(|_| corrupt(path, "tensor name is not UTF-8"))?;
            let rank = read_u32(&mut r, path)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r, path).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            if len.checked_mul(8).map_or(true, |n| n > r.len()) {
                return Err(corrupt(path, format!("truncated tensor {name}")));
            }
            let data = (0..len)
                .map(|_| read_f64(&mut r, path))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data).map_err(|e| corrupt(path, format!("{name}: {e}")))?;
            named.push((name, t));
        }
        if !r.is_empty() {
            return Err(corrupt(path, "trailing bytes after last tensor"));
        }

        let params = assemble(header.kind, &header.config, named, path)?;
        let vocab = Vocabulary::from_parts(header.vocab_tokens, header.vocab_counts);
        if vocab.len() != params.vocab_size() {
            return Err(corrupt(
                path,
                format!(
                    "vocabulary has {} entries but the embedding table has {} rows",
                    vocab.len(),
                    params.vocab_size()
                ),
            ));
        }
        Ok(Checkpoint {
            params,
            vocab,
            config: header.config,
            sentence_dropout: header.sentence_dropout,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn assemble(
    kind: ModelKind,
    config: &TrainConfig,
    named: Vec<(String, Tensor)>,
    path: &str,
) -> Result<ModelParams> {
    let mut it = named.into_iter();
    let mut next = |expected: &str| -> Result<Tensor> {
        match it.next() {
            Some((name, t)) if name == expected => Ok(t),
            Some((name, _)) => Err(corrupt(path, format!("expected tensor {expected}, found {name}"))),
            None => Err(corrupt(path, format!("missing tensor {expected}"))),
        }
    };
    let heights = config.filter_heights.clone();
    let embeddings = next("embeddings")?;
    let weights = heights
        .iter()
        .map(|h| next(&format!("filters.h{h}")))
        .collect::<Result<Vec<_>>>()?;
    let biases = heights
        .iter()
        .map(|h| next(&format!("biases.h{h}")))
        .collect::<Result<Vec<_>>>()?;
    let sentence_head = if kind == ModelKind::RaCnn {
        Some(next("w_sen")?)
    } else {
        None
    };
    let document_head = next("w_doc")?;
    let attention = if kind == ModelKind::AtCnn {
        Some(AttentionParams {
            projection: next("attention.w")?,
            bias: next("attention.b")?,
            context: next("attention.u")?,
        })
    } else {
        None
    };
    if it.next().is_some() {
        return Err(corrupt(path, format!("unexpected extra tensors for {kind}")));
    }
    let params = ModelParams {
        kind,
        embeddings,
        filters: FilterBank {
            heights,
            maps_per_height: config.maps_for(kind),
            weights,
            biases,
        },
        sentence_head,
        document_head,
        attention,
    };
    check_shapes(&params).map_err(|m| corrupt(path, m))?;
    Ok(params)
}

fn check_shapes(p: &ModelParams) -> std::result::Result<(), String> {
    if p.embeddings.rank() != 2 {
        return Err("embeddings must be a matrix".into());
    }
    let d = p.embedding_dim();
    let m = p.filters.maps_per_height;
    let f = p.num_features();
    for ((&h, w), b) in p.filters.heights.iter().zip(&p.filters.weights).zip(&p.filters.biases) {
        if w.shape() != [m, h, d] || b.shape() != [m] {
            return Err(format!("filter bank for height {h} has the wrong shape"));
        }
    }
    if p.document_head.shape() != [2, f] {
        return Err("w_doc has the wrong shape".into());
    }
    if let Some(w) = &p.sentence_head {
        if w.shape() != [3, f] {
            return Err("w_sen has the wrong shape".into());
        }
    }
    if let Some(a) = &p.attention {
        let dim = a.bias.len();
        if a.projection.shape() != [dim, f] || a.context.shape() != [dim] {
            return Err("attention parameters have inconsistent shapes".into());
        }
    }
    Ok(())
}

fn read_exact(r: &mut &[u8], buf: &mut [u8], path: &str) -> Result<()> {
    if r.len() < buf.len() {
        return Err(corrupt(path, "unexpected end of file"));
    }
    let (head, tail) = r.split_at(buf.len());
    buf.copy_from_slice(head);
    *r = tail;
    Ok(())
}

macro_rules! reader {
    ($name:ident, $t:ty) => {
        fn $name(r: &mut &[u8], path: &str) -> Result<$t> {
            let mut buf = [0u8; std::mem::size_of::<$t>()];
            read_exact(r, &mut buf, path)?;
            Ok(<$t>::from_le_bytes(buf))
        }
    };
}

reader!(read_u16, u16);
reader!(read_u32, u32);
reader!(read_u64, u64);
reader!(read_f64, f64);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn checkpoint(kind: ModelKind) -> Checkpoint {
        let config = TrainConfig {
            embedding_dim: 4,
            filter_heights: vec![2, 3],
            maps_per_height: 3,
            cnn_maps_per_height: 5,
            ..TrainConfig::default()
        };
        let words: Vec<String> = "a b b c".split(' ').map(String::from).collect();
        let vocab = Vocabulary::build(&words, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shape: ModelShape = config.model_shape(kind, vocab.len());
        let params = ModelParams::init(&shape, None, &mut rng).unwrap();
        Checkpoint {
            params,
            vocab,
            config,
            sentence_dropout: kind.is_hierarchical().then_some(0.3),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ModelKind::ALL {
            let ck = checkpoint(kind);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes, "x.ckpt").unwrap();
            for ((n1, a), (n2, b)) in ck.params.tensors().iter().zip(back.params.tensors().iter()) {
                assert_eq!(n1, n2);
                assert!(a.bit_eq(b), "{kind} {n1}");
            }
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = checkpoint(ModelKind::RaCnn).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "x").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad, "x"), Err(Error::Parse { .. })));
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long, "x").is_err());
    }

    #[test]
    fn mismatched_config_is_refused_on_save() {
        let mut ck = checkpoint(ModelKind::DocCnn);
        ck.config.filter_heights = vec![3, 4, 5];
        assert!(matches!(ck.to_bytes(), Err(Error::Precondition(_))));
    }
}
