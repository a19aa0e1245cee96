//! CoNLL-style annotation files.
//!
//! One `token<TAB>tag` pair per line, logs separated by one blank line, lines
//! starting with `# ` are comments.

use std::fs;
use std::path::Path;

use super::{AnnotatedLog, Token};
use crate::io_util::write_atomic;
use crate::taxonomy::{first_invalid_transition, Tag};
use crate::{Error, Result};

/// What to do with a block whose tags break the IOB rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Fail on the first ill-formed block.
    Strict,
    /// Skip ill-formed blocks and report them in [`Annotations::skipped`].
    #[default]
    Lenient,
}

#[derive(Debug, Default)]
pub struct Annotations {
    pub logs: Vec<AnnotatedLog>,
    /// Ill-formed blocks dropped in lenient mode.
    pub skipped: Vec<Error>,
}

pub fn read_annotations(path: &Path, mode: ReadMode) -> Result<Annotations> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_annotations(&text, mode).map_err(|e| e.at(path))
}

pub fn parse_annotations(text: &str, mode: ReadMode) -> Result<Annotations> {
    let mut out = Annotations::default();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut block_start = 0;

    let mut flush = |tokens: &mut Vec<Token>, tags: &mut Vec<Tag>, start: usize| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let toks = std::mem::take(tokens);
        let tgs = std::mem::take(tags);
        if let Some(i) = first_invalid_transition(&tgs) {
            let err = Error::Iob {
                line: start + i,
                msg: format!("{} does not continue a variable", tgs[i]),
            };
            return match mode {
                ReadMode::Strict => Err(err),
                ReadMode::Lenient => {
                    log::warn!("skipping annotation block: {err}");
                    out.skipped.push(err);
                    Ok(())
                }
            };
        }
        out.logs.push(AnnotatedLog::new(toks, tgs)?);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with("# ") || line == "#" {
            continue;
        }
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, block_start)?;
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(token), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected `token<TAB>tag`, found {line:?}"),
            });
        };
        let tag: Tag = tag.parse().map_err(|_| Error::Tag {
            line: line_no,
            tag: tag.to_string(),
        })?;
        if tokens.is_empty() {
            block_start = line_no;
        }
        tokens.push(Token::new(token).expect("split_whitespace yields non-empty tokens"));
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, block_start)?;
    Ok(out)
}

pub fn render_annotations(logs: &[AnnotatedLog]) -> String {
    let mut out = String::new();
    for (i, log) in logs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (tok, tag) in log.tokens().iter().zip(log.tags()) {
            out.push_str(tok.as_str());
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
    }
    out
}

/// Writes atomically.
pub fn write_annotations(logs: &[AnnotatedLog], path: &Path) -> Result<()> {
    write_atomic(path, render_annotations(logs).as_bytes()).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::taxonomy::{tag_vocabulary, Label};

    #[test]
    fn two_blocks() {
        let text = "# Spark\nStarting\tO\nexecutor\tO\nID\tO\n5\tB-OID\non\tO\nhost\tO\nmeso-07\tB-OBN\n\nfoo\tO\n";
        let ann = parse_annotations(text, ReadMode::Strict).unwrap();
        assert_eq!(ann.logs.len(), 2);
        let first = &ann.logs[0];
        assert_eq!(first.tokens()[6].as_str(), "meso-07");
        assert_eq!(
            first.tags()[6],
            Tag::Begin(Label::Category(crate::VariableCategory::ObjectName))
        );
    }

    #[test]
    fn unknown_tag_is_reported_with_line() {
        let err = parse_annotations("a\tO\nfoo\tB-XYZ\n", ReadMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Tag { line: 2, ref tag } if tag == "B-XYZ"), "{err:?}");
    }

    #[test]
    fn malformed_line() {
        let err = parse_annotations("a\tO\nlonely\n", ReadMode::Lenient).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
        let err = parse_annotations("a b O\n", ReadMode::Lenient).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn iob_errors_strict_vs_lenient() {
        let text = "a\tO\nb\tI-OID\n\nc\tB-OID\nd\tI-OID\n";
        let err = parse_annotations(text, ReadMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Iob { line: 2, .. }), "{err:?}");
        let ann = parse_annotations(text, ReadMode::Lenient).unwrap();
        assert_eq!(ann.logs.len(), 1);
        assert_eq!(ann.skipped.len(), 1);
    }

    #[test]
    fn extra_blank_lines_and_crlf() {
        let ann = parse_annotations("\n\na\tO\r\n\n\n\nb\tB-VAR\n\n", ReadMode::Strict).unwrap();
        assert_eq!(ann.logs.len(), 2);
    }

    fn arb_log() -> impl Strategy<Value = AnnotatedLog> {
        let tags = tag_vocabulary();
        proptest::collection::vec(("[a-zA-Z0-9_./:#-]{1,8}", 0..tags.len()), 1..8).prop_map(
            move |pairs| {
                let tokens: Vec<Token> = pairs.iter().map(|(t, _)| Token::new(t.clone()).unwrap()).collect();
                // repair I- tags that don't continue the previous label
                let mut out: Vec<Tag> = Vec::new();
                for &(_, k) in &pairs {
                    let mut tag = tags[k];
                    if let Tag::Inside(l) = tag {
                        let ok = matches!(out.last(), Some(Tag::Begin(p)) | Some(Tag::Inside(p)) if *p == l);
                        if !ok {
                            tag = Tag::Begin(l);
                        }
                    }
                    out.push(tag);
                }
                AnnotatedLog::new(tokens, out).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(logs in proptest::collection::vec(arb_log(), 0..6)) {
            let text = render_annotations(&logs);
            let back = parse_annotations(&text, ReadMode::Strict).unwrap();
            prop_assert_eq!(back.logs, logs);
        }
    }
}
