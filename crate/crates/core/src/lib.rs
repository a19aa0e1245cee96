//! Variable-aware log abstraction.
//!
//! Raw log messages are split into whitespace tokens and each token is tagged
//! either as static text (`O`) or as one of ten categories of dynamic variable
//! using IOB tags (`B-OID`, `I-OID`, ...). Tagging is done by a neural sequence
//! tagger: word embeddings concatenated with a character-level CNN
//! representation, a bidirectional LSTM, and a linear-chain CRF with exact
//! inference.
//!
//! From the tags, [`parse`] renders log templates where selected variable
//! categories keep their concrete values and everything else becomes `<*>`.
//!
//! Module map:
//!
//! * [`taxonomy`]: categories, the IOB tag alphabet, transition rules.
//! * [`corpus`]: tokenization, annotation files, template alignment,
//!   dataset splitting, synthetic corpora.
//! * [`embed`]: vocabularies, pretrained vectors, numeric encoding.
//! * [`tagger`]: the network, CRF inference and exact gradients.
//! * [`train`]: optimizer loop, fine-tuning, model files.
//! * [`parse`]: template extraction and the template store.
//! * [`eval`]: general / variable-aware accuracy and per-category P/R/F1.

pub mod corpus;
pub mod embed;
mod error;
pub mod eval;
pub mod io_util;
pub mod parse;
pub mod tagger;
pub mod taxonomy;
pub mod train;

pub use corpus::{tokenize, AnnotatedLog, SplitSpec, Token};
pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use parse::{ParseResult, TemplateStore};
pub use tagger::{Hyperparams, TaggerModel};
pub use taxonomy::{BinaryTag, Label, Tag, TagMode, TagSet, VariableCategory};
pub use train::{TrainConfig, TrainOutcome};
