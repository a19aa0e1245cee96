//! Model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VALB"            magic
//! u32               format version
//! u64 + bytes       JSON metadata: hyperparameters, mode, tag order, vocabularies
//! u32               tensor count
//! per tensor:       u32 + name bytes, u32 ndim, ndim x u64 dims, f32 data (row-major)
//! 8 bytes           first 8 bytes of SHA-256 over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{CharVocab, WordVocab};
use crate::io_util::write_atomic;
use crate::tagger::{Hyperparams, LstmParams, Layers, Params, TaggerModel, Tensor, TENSOR_NAMES};
use crate::taxonomy::{TagMode, TagSet};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VALB";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 8;

#[derive(Serialize, Deserialize)]
struct Metadata {
    hyperparams: Hyperparams,
    mode: TagMode,
    tags: Vec<String>,
    word_vocab: WordVocab,
    char_vocab: CharVocab,
}

fn checksum(bytes: &[u8]) -> [u8; CHECKSUM_LEN] {
    let digest = Sha256::digest(bytes);
    let mut out = [0u8; CHECKSUM_LEN];
    out.copy_from_slice(&digest[..CHECKSUM_LEN]);
    out
}

/// Serializes a model to bytes.
pub fn write_model(model: &TaggerModel) -> Vec<u8> {
    let meta = Metadata {
        hyperparams: model.hp.clone(),
        mode: model.mode(),
        tags: model.tags.tags().iter().map(|t| t.to_string()).collect(),
        word_vocab: model.word_vocab.clone(),
        char_vocab: model.char_vocab.clone(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            line: 0,
            msg: format!("unexpected end of model data at byte {}", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| format_err("length does not fit in memory"))
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format { line: 0, msg: msg.into() }
}

/// Parses a model from bytes.
pub fn read_model(bytes: &[u8]) -> Result<TaggerModel> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err("not a model file (bad magic bytes)"));
    }
    if bytes.len() < 8 + CHECKSUM_LEN {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if checksum(body) != sum {
        return Err(Error::Checksum);
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let meta_len = r.len()?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)?;
    let tags = TagSet::new(meta.mode);
    let expected: Vec<String> = tags.tags().iter().map(|t| t.to_string()).collect();
    if meta.tags != expected {
        return Err(format_err(format!(
            "tag order {:?} differs from the {} alphabet",
            meta.tags, meta.mode
        )));
    }
    let count = r.u32()? as usize;
    if count != TENSOR_NAMES.len() {
        return Err(format_err(format!("expected {} tensors, found {count}", TENSOR_NAMES.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for &expected_name in &TENSOR_NAMES {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| format_err("tensor name is not UTF-8"))?;
        if name != expected_name {
            return Err(format_err(format!("expected tensor {expected_name}, found {name}")));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format_err("tensor too large"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| format_err("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor { shape, data });
    }
    if r.pos != body.len() {
        return Err(format_err("trailing bytes after the last tensor"));
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked");
    let word_emb = next();
    let char_emb = next();
    let (conv_w, conv_b) = (next(), next());
    let fwd = LstmParams {
        w_ih: next(),
        w_hh: next(),
        bias: next(),
    };
    let bwd = LstmParams {
        w_ih: next(),
        w_hh: next(),
        bias: next(),
    };
    let layers = Layers {
        conv_w,
        conv_b,
        fwd,
        bwd,
        proj_w: next(),
        proj_b: next(),
        trans: next(),
        start: next(),
        end: next(),
    };
    let params = Params {
        word_emb,
        char_emb,
        layers,
    };
    if !params.all_finite() {
        return Err(format_err("model contains non-finite weights"));
    }
    TaggerModel::from_parts(meta.hyperparams, meta.mode, meta.word_vocab, meta.char_vocab, params)
}

/// Writes a model file atomically.
pub fn save_model(model: &TaggerModel, path: &Path) -> Result<()> {
    write_atomic(path, &write_model(model)).map_err(|e| e.at(path))
}

pub fn load_model(path: &Path) -> Result<TaggerModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    read_model(&bytes).map_err(|e| e.at(path))
}
