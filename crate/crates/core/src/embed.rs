//! Vocabularies and the numeric encoding of logs.
//!
//! Words are looked up lowercased; characters keep their case. Both
//! vocabularies reserve index 0 for padding and 1 for unknown entries.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedLog, Token};
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

pub const PAD_WORD: &str = "<pad>";
pub const UNK_WORD: &str = "<unk>";

/// Lowercased word index. Entries are ordered by descending training
/// frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "WordVocabRepr", into = "WordVocabRepr")]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct WordVocabRepr {
    min_freq: usize,
    words: Vec<String>,
}

impl From<WordVocabRepr> for WordVocab {
    fn from(r: WordVocabRepr) -> Self {
        WordVocab::from_words(r.words, r.min_freq)
    }
}

impl From<WordVocab> for WordVocabRepr {
    fn from(v: WordVocab) -> Self {
        WordVocabRepr {
            min_freq: v.min_freq,
            words: v.words,
        }
    }
}

impl WordVocab {
    /// `words` must start with the PAD and UNK entries.
    fn from_words(words: Vec<String>, min_freq: usize) -> WordVocab {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        WordVocab {
            words,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Index of the lowercased word, UNK when absent.
    pub fn lookup(&self, word: &str) -> u32 {
        self.index
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word) != UNK
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    /// Excludes the two reserved entries.
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + 2))
            .collect();
        CharVocab { chars, index }
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    /// Size including PAD and UNK.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn lookup(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }
}

/// Builds both vocabularies from the training logs. Words seen fewer than
/// `min_freq` times (after lowercasing) are left out; every character is kept.
pub fn build_vocabs(train: &[AnnotatedLog], min_freq: usize) -> Result<(WordVocab, CharVocab)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("cannot build vocabularies from an empty training set".into()));
    }
    if min_freq == 0 {
        return Err(Error::InvalidArgument("min_freq must be at least 1".into()));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut chars = std::collections::BTreeSet::new();
    for tok in train.iter().flat_map(|l| l.tokens()) {
        *freq.entry(tok.as_str().to_lowercase()).or_default() += 1;
        chars.extend(tok.as_str().chars());
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(w, n)| *n >= min_freq && w != PAD_WORD && w != UNK_WORD)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words = [PAD_WORD.to_string(), UNK_WORD.to_string()]
        .into_iter()
        .chain(kept.into_iter().map(|(w, _)| w))
        .collect();
    Ok((
        WordVocab::from_words(words, min_freq),
        CharVocab::from(chars.into_iter().collect::<Vec<_>>()),
    ))
}

/// A text-format word vector table (`word f1 f2 ... fD` per line).
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

impl PretrainedVectors {
    /// Parses vectors of dimension `dim`. A first line of exactly two integers
    /// (the word2vec text header) is skipped.
    pub fn parse(text: &str, dim: usize) -> Result<PretrainedVectors> {
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
                continue;
            }
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: line_no,
                    expected: dim,
                    found: values.len(),
                });
            }
            let vec = values
                .iter()
                .map(|v| {
                    v.parse::<f32>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Format {
                            line: line_no,
                            msg: format!("`{v}` is not a finite number"),
                        })
                })
                .collect::<Result<Vec<f32>>>()?;
            vectors.insert(word.to_string(), vec);
        }
        Ok(PretrainedVectors { dim, vectors })
    }

    pub fn read(path: &Path, dim: usize) -> Result<PretrainedVectors> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
        Self::parse(&text, dim).map_err(|e| e.at(path))
    }

    /// Looks up the exact word first, then its lowercased form.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }
}

/// An embedding matrix initialized from pretrained vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedEmbeddings {
    /// Row-major `vocab.len() x dim`.
    pub matrix: Vec<f32>,
    pub dim: usize,
    /// Fraction of non-reserved vocabulary words found in the vector table.
    pub coverage: f64,
}

/// Copies pretrained rows for vocabulary words; other rows are uniform in
/// `[-0.25, 0.25]`, the PAD row is zero.
pub fn embeddings_from_vectors(vectors: &PretrainedVectors, vocab: &WordVocab, seed: u64) -> LoadedEmbeddings {
    let dim = vectors.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = vec![0.0f32; vocab.len() * dim];
    let mut found = 0usize;
    for (i, word) in vocab.words().iter().enumerate() {
        let row = &mut matrix[i * dim..(i + 1) * dim];
        if i == PAD as usize {
            continue;
        }
        let pretrained = if i == UNK as usize { None } else { vectors.get(word) };
        match pretrained {
            Some(v) => {
                row.copy_from_slice(v);
                found += 1;
            }
            None => row.iter_mut().for_each(|x| *x = rng.random_range(-0.25..=0.25)),
        }
    }
    let denom = vocab.len().saturating_sub(2);
    LoadedEmbeddings {
        matrix,
        dim,
        coverage: if denom == 0 { 0.0 } else { found as f64 / denom as f64 },
    }
}

/// Reads a vector file and builds the embedding matrix for `vocab`.
pub fn load_word_vectors(path: &Path, vocab: &WordVocab, dim: usize, seed: u64) -> Result<LoadedEmbeddings> {
    let vectors = PretrainedVectors::read(path, dim)?;
    Ok(embeddings_from_vectors(&vectors, vocab, seed))
}

/// Word and character ids of one log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedLog {
    pub word_ids: Vec<u32>,
    /// Row-major `token_count x max_word_len`, right-padded with PAD.
    pub char_ids: Vec<u32>,
    pub max_word_len: usize,
}

impl EncodedLog {
    pub fn token_count(&self) -> usize {
        self.word_ids.len()
    }

    pub fn chars(&self, t: usize) -> &[u32] {
        &self.char_ids[t * self.max_word_len..(t + 1) * self.max_word_len]
    }

    /// Number of non-PAD positions of token `t`.
    pub fn char_len(&self, t: usize) -> usize {
        self.chars(t).iter().take_while(|&&c| c != PAD).count()
    }
}

pub fn encode_tokens(tokens: &[Token], wv: &WordVocab, cv: &CharVocab, max_word_len: usize) -> EncodedLog {
    assert!(max_word_len >= 1, "max_word_len must be positive");
    let mut word_ids = Vec::with_capacity(tokens.len());
    let mut char_ids = vec![PAD; tokens.len() * max_word_len];
    for (t, tok) in tokens.iter().enumerate() {
        word_ids.push(wv.lookup(tok.as_str()));
        let row = &mut char_ids[t * max_word_len..(t + 1) * max_word_len];
        let mut n = 0;
        for (slot, c) in row.iter_mut().zip(tok.as_str().chars()) {
            *slot = cv.lookup(c);
            n += 1;
        }
        if n == max_word_len && tok.as_str().chars().nth(max_word_len).is_some() {
            log::debug!("token `{tok}` truncated to {max_word_len} characters");
        }
    }
    EncodedLog {
        word_ids,
        char_ids,
        max_word_len,
    }
}

pub fn encode_log(log: &AnnotatedLog, wv: &WordVocab, cv: &CharVocab, max_word_len: usize) -> EncodedLog {
    encode_tokens(log.tokens(), wv, cv, max_word_len)
}
