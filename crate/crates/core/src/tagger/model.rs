use rayon::prelude::*;

use super::crf::{CrfView, Emissions};
use super::network;
use super::params::{init_params, FrozenMask, Hyperparams, Params};
use crate::corpus::{tokenize, AnnotatedLog, Token};
use crate::embed::{encode_tokens, CharVocab, EncodedLog, WordVocab};
use crate::taxonomy::{Tag, TagMode, TagSet};
use crate::{Error, Result};

/// A tagger: parameters plus everything needed to encode and decode.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub hp: Hyperparams,
    pub tags: TagSet,
    pub word_vocab: WordVocab,
    pub char_vocab: CharVocab,
    pub params: Params<f32>,
    pub frozen: FrozenMask,
}

impl TaggerModel {
    /// A freshly initialized model; `pretrained` is a `|word_vocab| x word_dim`
    /// row-major matrix used for the word embeddings.
    pub fn init(
        hp: Hyperparams,
        mode: TagMode,
        word_vocab: WordVocab,
        char_vocab: CharVocab,
        pretrained: Option<&[f32]>,
        seed: u64,
    ) -> Result<TaggerModel> {
        let tags = TagSet::new(mode);
        let params = init_params(&hp, &tags, word_vocab.len(), char_vocab.len(), pretrained, seed)?;
        Ok(TaggerModel {
            frozen: FrozenMask::new(&tags),
            hp,
            tags,
            word_vocab,
            char_vocab,
            params,
        })
    }

    /// Assembles a model from parts, checking every tensor shape.
    pub fn from_parts(
        hp: Hyperparams,
        mode: TagMode,
        word_vocab: WordVocab,
        char_vocab: CharVocab,
        params: Params<f32>,
    ) -> Result<TaggerModel> {
        hp.validate()?;
        let tags = TagSet::new(mode);
        if hp.n_tags != tags.len() {
            return Err(Error::Mode(format!(
                "model declares {} tags but {mode} mode has {}",
                hp.n_tags,
                tags.len()
            )));
        }
        let expected = Params::<f32>::expected_shapes(&hp, word_vocab.len(), char_vocab.len());
        for ((name, t), shape) in params.tensors().iter().zip(&expected) {
            if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::InvalidArgument(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
        }
        Ok(TaggerModel {
            frozen: FrozenMask::new(&tags),
            hp,
            tags,
            word_vocab,
            char_vocab,
            params,
        })
    }

    pub fn mode(&self) -> TagMode {
        self.tags.mode()
    }

    pub fn encode(&self, tokens: &[Token]) -> EncodedLog {
        encode_tokens(tokens, &self.word_vocab, &self.char_vocab, self.hp.max_word_len)
    }

    /// Emission scores; `dropout_seed` switches on training-mode dropout.
    pub fn forward_emissions(&self, enc: &EncodedLog, dropout_seed: Option<u64>) -> Emissions<f32> {
        network::forward(&self.params, &self.hp, enc, dropout_seed).0
    }

    pub fn crf(&self) -> CrfView<'_, f32> {
        let l = &self.params.layers;
        CrfView::new(&l.trans.data, &l.start.data, &l.end.data)
    }

    pub fn tag_tokens(&self, tokens: &[Token]) -> Vec<Tag> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let em = self.forward_emissions(&self.encode(tokens), None);
        self.crf().viterbi(&em).into_iter().map(|i| self.tags.tag(i)).collect()
    }

    /// Tokenizes and tags a raw message.
    pub fn tag_log(&self, raw: &str) -> Result<AnnotatedLog> {
        let tokens = tokenize(raw)?;
        let tags = self.tag_tokens(&tokens);
        AnnotatedLog::new(tokens, tags)
    }

    /// Tags many token sequences in parallel; output order follows input order.
    pub fn tag_many(&self, logs: &[Vec<Token>]) -> Vec<Vec<Tag>> {
        logs.par_iter().map(|t| self.tag_tokens(t)).collect()
    }

    /// Re-tags the tokens of annotated logs.
    pub fn predict(&self, logs: &[AnnotatedLog]) -> Vec<AnnotatedLog> {
        logs.par_iter()
            .map(|l| {
                l.with_tags(self.tag_tokens(l.tokens()))
                    .expect("decoded tags are well formed")
            })
            .collect()
    }

    /// Gold tag indices; fails if a tag is outside this model's alphabet.
    pub fn tag_indices(&self, log: &AnnotatedLog) -> Result<Vec<usize>> {
        log.tags()
            .iter()
            .map(|&t| {
                self.tags.index_of(t).ok_or_else(|| {
                    Error::Mode(format!("tag {t} does not exist in a {} model", self.mode()))
                })
            })
            .collect()
    }

    /// Mean negative log-likelihood over `logs` in inference mode.
    pub fn mean_loss(&self, logs: &[AnnotatedLog]) -> Result<f64> {
        let mut total = 0.0;
        for l in logs {
            let gold = self.tag_indices(l)?;
            total += network::log_loss(&self.params, &self.hp, &self.encode(l.tokens()), &gold, None);
        }
        Ok(total / logs.len().max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::build_vocabs;
    use crate::taxonomy::is_well_formed;

    fn model(seed: u64) -> TaggerModel {
        let train = vec![AnnotatedLog::from_pairs(&[
            ("Starting", "O"),
            ("executor", "O"),
            ("ID", "O"),
            ("5", "B-OID"),
        ])];
        let (wv, cv) = build_vocabs(&train, 1).unwrap();
        let hp = Hyperparams {
            lstm_hidden: 8,
            word_dim: 6,
            char_emb_dim: 5,
            char_filters: 4,
            ..Hyperparams::default()
        };
        TaggerModel::init(hp, TagMode::Multiclass, wv, cv, None, seed).unwrap()
    }

    #[test]
    fn same_seed_same_model() {
        assert_eq!(model(3), model(3));
    }

    #[test]
    fn tagging_is_deterministic_and_well_formed() {
        let m = model(1);
        let a = m.tag_log("Starting executor ID 5 on host meso-07").unwrap();
        assert_eq!(a, m.tag_log("Starting executor ID 5 on host meso-07").unwrap());
        assert_eq!(a.len(), 7);
        assert!(is_well_formed(a.tags()));
        assert!(matches!(m.tag_log("   "), Err(Error::EmptyLog)));
    }

    #[test]
    fn binary_tags_rejected_by_multiclass_model() {
        let m = model(1);
        let log = AnnotatedLog::from_pairs(&[("x", "B-VAR")]);
        assert!(matches!(m.tag_indices(&log), Err(Error::Mode(_))));
    }
}
