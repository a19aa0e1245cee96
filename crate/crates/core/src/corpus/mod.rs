//! Tokens, annotated logs and everything that produces or consumes them.

mod align;
mod io;
mod split;
pub mod synth;

use std::fmt;

pub use align::{derive_binary_annotations, read_structured, StructuredColumns, StructuredRow};
pub use io::{parse_annotations, read_annotations, render_annotations, write_annotations, Annotations, ReadMode};
pub use split::{split_dataset, SplitSpec};
pub use synth::{generate_synthetic, GeneratorSpec, SynthConfig};

use crate::taxonomy::{first_invalid_transition, Tag, TagMode};
use crate::{Error, Result};

/// A non-empty, whitespace-free piece of a log message.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Option<Token> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Splits a header-free log message on runs of whitespace. Punctuation stays
/// attached and case is preserved.
pub fn tokenize(raw: &str) -> Result<Vec<Token>> {
    let tokens: Vec<Token> = raw
        .split_whitespace()
        .map(|s| Token(s.to_string()))
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(tokens)
}

/// A tokenized log with one IOB tag per token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnnotatedLog {
    tokens: Vec<Token>,
    tags: Vec<Tag>,
}

impl AnnotatedLog {
    /// Checks length agreement and IOB well-formedness.
    pub fn new(tokens: Vec<Token>, tags: Vec<Tag>) -> Result<AnnotatedLog> {
        if tokens.is_empty() {
            return Err(Error::EmptyLog);
        }
        if tokens.len() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if let Some(i) = first_invalid_transition(&tags) {
            return Err(Error::Iob {
                line: 0,
                msg: format!("tag {} at position {i} does not continue a variable", tags[i]),
            });
        }
        Ok(AnnotatedLog { tokens, tags })
    }

    /// Convenience constructor from string slices; panics on invalid input.
    /// Meant for fixtures.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> AnnotatedLog {
        let tokens = pairs
            .iter()
            .map(|(t, _)| Token::new(*t).expect("invalid token"))
            .collect();
        let tags = pairs
            .iter()
            .map(|(_, g)| g.parse().expect("invalid tag"))
            .collect();
        AnnotatedLog::new(tokens, tags).expect("invalid annotated log")
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn message(&self) -> String {
        join_tokens(&self.tokens)
    }

    /// Same tokens with every variable relabeled as `VAR`.
    pub fn to_binary(&self) -> AnnotatedLog {
        AnnotatedLog {
            tokens: self.tokens.clone(),
            tags: self.tags.iter().map(|t| t.to_binary()).collect(),
        }
    }

    /// Same tokens with different tags; the tags must be well formed.
    pub fn with_tags(&self, tags: Vec<Tag>) -> Result<AnnotatedLog> {
        AnnotatedLog::new(self.tokens.clone(), tags)
    }

    /// The mode whose alphabet contains every tag, or `None` for mixed or
    /// all-`O` logs (which fit both).
    pub fn mode(&self) -> Option<TagMode> {
        let mut mode = None;
        for t in &self.tags {
            let m = match t.label() {
                None => continue,
                Some(crate::Label::Var) => TagMode::Binary,
                Some(crate::Label::Category(_)) => TagMode::Multiclass,
            };
            match mode {
                None => mode = Some(m),
                Some(prev) if prev != m => return None,
                _ => {}
            }
        }
        mode
    }
}

pub(crate) fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        let toks = tokenize("Starting executor ID 5 on host meso-07").unwrap();
        assert_eq!(toks.len(), 7);
        assert_eq!(toks[6].as_str(), "meso-07");
        assert_eq!(tokenize("x").unwrap(), [Token::new("x").unwrap()]);
        let toks: Vec<_> = tokenize("  a   b ").unwrap();
        assert_eq!(toks.iter().map(Token::as_str).collect::<Vec<_>>(), ["a", "b"]);
        assert!(matches!(tokenize(" \t\n "), Err(Error::EmptyLog)));
        assert!(matches!(tokenize(""), Err(Error::EmptyLog)));
    }

    #[test]
    fn tokens_reject_whitespace() {
        assert!(Token::new("a b").is_none());
        assert!(Token::new("").is_none());
        assert!(Token::new("a\tb").is_none());
        assert!(Token::new("(isReachable=").is_some());
    }

    #[test]
    fn annotated_log_invariants() {
        let toks = tokenize("a b").unwrap();
        let o: Tag = "O".parse().unwrap();
        let i: Tag = "I-OID".parse().unwrap();
        assert!(AnnotatedLog::new(toks.clone(), vec![o]).is_err());
        assert!(matches!(
            AnnotatedLog::new(toks.clone(), vec![o, i]),
            Err(Error::Iob { .. })
        ));
        assert!(AnnotatedLog::new(vec![], vec![]).is_err());
        let log = AnnotatedLog::from_pairs(&[("a", "B-OID"), ("b", "I-OID")]);
        assert_eq!(log.mode(), Some(TagMode::Multiclass));
        assert_eq!(log.to_binary().mode(), Some(TagMode::Binary));
        assert_eq!(log.message(), "a b");
    }
}
