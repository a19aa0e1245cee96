//! Binary annotations derived from benchmark templates.
//!
//! Benchmark files pair each message (`Content`) with its ground-truth
//! template (`EventTemplate`), where dynamic parts are written as `<*>` (or
//! `*`). Aligning the two tells which content tokens are variables, though not
//! which category they belong to.

use std::path::Path;

use super::{tokenize, AnnotatedLog, Token};
use crate::taxonomy::{Label, Tag};
use crate::{Error, Result};

#[derive(Debug, PartialEq, Eq)]
enum Piece<'a> {
    Static(&'a str),
    /// `<*>` or `*`: one or more whole content tokens.
    Wildcard,
    /// A token mixing text and `<*>` (e.g. `blk_<*>`): exactly one content token.
    Pattern(&'a str),
}

fn classify(tok: &str) -> Piece<'_> {
    if tok == "<*>" || tok == "*" {
        Piece::Wildcard
    } else if tok.contains("<*>") {
        Piece::Pattern(tok)
    } else {
        Piece::Static(tok)
    }
}

/// Glob match where each `<*>` stands for any (possibly empty) substring.
fn pattern_matches(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split("<*>").collect();
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || text.len() < first.len() + last.len() || !text.ends_with(last) {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(pos) => rest = &rest[pos + mid.len()..],
            None => return false,
        }
    }
    true
}

/// Aligns `content` against `template` and tags wildcard-matched tokens as
/// `B-VAR`/`I-VAR`, everything else as `O`.
///
/// When several alignments exist, each wildcard takes the fewest tokens that
/// still let the rest of the template match.
pub fn derive_binary_annotations(content: &str, template: &str) -> Result<AnnotatedLog> {
    let tokens = tokenize(content)?;
    let tmpl_tokens: Vec<&str> = template.split_whitespace().collect();
    if tmpl_tokens.is_empty() {
        return Err(Error::Alignment("template is empty".into()));
    }
    let pieces: Vec<Piece<'_>> = tmpl_tokens.iter().map(|t| classify(t)).collect();
    let (n, m) = (pieces.len(), tokens.len());

    let matches_one = |p: &Piece<'_>, tok: &Token| match p {
        Piece::Static(s) => *s == tok.as_str(),
        Piece::Pattern(pat) => pattern_matches(pat, tok.as_str()),
        Piece::Wildcard => true,
    };

    // feasible[i][j]: pieces[i..] can consume exactly tokens[j..]
    let mut feasible = vec![vec![false; m + 1]; n + 1];
    feasible[n][m] = true;
    for i in (0..n).rev() {
        match pieces[i] {
            Piece::Wildcard => {
                // any split of length >= 1
                let mut any_after = false;
                for j in (0..m).rev() {
                    any_after |= feasible[i + 1][j + 1];
                    feasible[i][j] = any_after;
                }
            }
            ref p => {
                for j in 0..m {
                    feasible[i][j] = feasible[i + 1][j + 1] && matches_one(p, &tokens[j]);
                }
            }
        }
    }
    if !feasible[0][0] {
        return Err(Error::Alignment(format!(
            "template {template:?} does not match content {content:?}"
        )));
    }

    let mut tags = Vec::with_capacity(m);
    let mut j = 0;
    for (i, piece) in pieces.iter().enumerate() {
        match piece {
            Piece::Static(_) => {
                tags.push(Tag::Outside);
                j += 1;
            }
            Piece::Pattern(_) => {
                tags.push(Tag::Begin(Label::Var));
                j += 1;
            }
            Piece::Wildcard => {
                let len = (1..=m - j)
                    .find(|&len| feasible[i + 1][j + len])
                    .expect("feasibility table guarantees a split");
                tags.push(Tag::Begin(Label::Var));
                tags.extend(std::iter::repeat_n(Tag::Inside(Label::Var), len - 1));
                j += len;
            }
        }
    }
    debug_assert_eq!(j, m);
    AnnotatedLog::new(tokens, tags)
}

/// Column names of a structured benchmark file.
#[derive(Clone, Debug)]
pub struct StructuredColumns {
    pub content: String,
    pub template: String,
}

impl Default for StructuredColumns {
    fn default() -> Self {
        StructuredColumns {
            content: "Content".into(),
            template: "EventTemplate".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuredRow {
    /// 1-based record number (header excluded).
    pub record: usize,
    pub content: String,
    pub template: String,
}

/// Reads the content and template columns of a delimited structured file
/// (comma-separated, quoted fields allowed).
pub fn read_structured(path: &Path, columns: &StructuredColumns) -> Result<Vec<StructuredRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::from(e).at(path))?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Format {
                line: 1,
                msg: format!("missing column `{name}` in {}", path.display()),
            }
        })
    };
    let (ci, ti) = (find(&columns.content)?, find(&columns.template)?);
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        rows.push(StructuredRow {
            record: k + 1,
            content: rec.get(ci).unwrap_or_default().to_string(),
            template: rec.get(ti).unwrap_or_default().to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag_strings(log: &AnnotatedLog) -> Vec<String> {
        log.tags().iter().map(|t| t.to_string()).collect()
    }

    /// Every way of assigning content tokens to template pieces, in
    /// lexicographic order of wildcard lengths.
    fn all_alignments(content: &[&str], template: &[&str]) -> Vec<Vec<String>> {
        fn go(c: &[&str], t: &[&str], acc: Vec<String>, out: &mut Vec<Vec<String>>) {
            match t.split_first() {
                None => {
                    if c.is_empty() {
                        out.push(acc);
                    }
                }
                Some((&"<*>", rest)) => {
                    for len in 1..=c.len() {
                        let mut a = acc.clone();
                        a.push("B-VAR".into());
                        a.extend(std::iter::repeat_n("I-VAR".to_string(), len - 1));
                        go(&c[len..], rest, a, out);
                    }
                }
                Some((s, rest)) => {
                    if c.first() == Some(s) {
                        let mut a = acc;
                        a.push("O".into());
                        go(&c[1..], rest, a, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(content, template, Vec::new(), &mut out);
        out
    }

    #[test]
    fn spark_duration() {
        let log = derive_binary_annotations("Took 20 seconds to spawn", "Took <*> seconds to spawn").unwrap();
        assert_eq!(tag_strings(&log), ["O", "B-VAR", "O", "O", "O"]);
    }

    #[test]
    fn static_only() {
        let log = derive_binary_annotations("all good here", "all good here").unwrap();
        assert!(log.tags().iter().all(|t| *t == Tag::Outside));
    }

    #[test]
    fn multi_token_wildcard_matches_exhaustive_search() {
        let log = derive_binary_annotations("a x y b", "a <*> b").unwrap();
        let brute = all_alignments(&["a", "x", "y", "b"], &["a", "<*>", "b"]);
        assert_eq!(brute.len(), 1);
        assert_eq!(tag_strings(&log), brute[0]);
        assert_eq!(tag_strings(&log), ["O", "B-VAR", "I-VAR", "O"]);
    }

    #[test]
    fn needs_backtracking_past_first_anchor() {
        let content = ["a", "x", "b", "y", "b", "c"];
        let template = ["a", "<*>", "b", "c"];
        let log = derive_binary_annotations(&content.join(" "), &template.join(" ")).unwrap();
        let brute = all_alignments(&content, &template);
        assert_eq!(tag_strings(&log), brute[0]);
    }

    #[test]
    fn ambiguous_alignment_takes_leftmost() {
        let content = ["a", "x", "b", "y", "b", "z"];
        let template = ["a", "<*>", "b", "<*>"];
        let log = derive_binary_annotations(&content.join(" "), &template.join(" ")).unwrap();
        let brute = all_alignments(&content, &template);
        assert_eq!(brute.len(), 2);
        assert_eq!(tag_strings(&log), brute[0]);
        assert_eq!(tag_strings(&log), ["O", "B-VAR", "O", "B-VAR", "I-VAR", "I-VAR"]);
    }

    #[test]
    fn star_wildcard_and_adjacent_wildcards() {
        let log = derive_binary_annotations("size 1 2 done", "size * <*> done").unwrap();
        assert_eq!(tag_strings(&log), ["O", "B-VAR", "B-VAR", "O"]);
    }

    #[test]
    fn embedded_wildcard_tags_whole_token() {
        let log = derive_binary_annotations("Receiving blk_-1608 src: /10.250.19.102:54106", "Receiving blk_<*> src: /<*>:<*>").unwrap();
        assert_eq!(tag_strings(&log), ["O", "B-VAR", "O", "B-VAR"]);
        assert!(pattern_matches("<*>", ""));
        assert!(!pattern_matches("a<*>b", "ab_"));
        assert!(pattern_matches("a<*>b<*>c", "a1b2c"));
        assert!(!pattern_matches("ab<*>ba", "aba"));
    }

    #[test]
    fn alignment_errors() {
        assert!(matches!(
            derive_binary_annotations("a b", "a c"),
            Err(Error::Alignment(_))
        ));
        // wildcard would have to match zero tokens
        assert!(matches!(
            derive_binary_annotations("a b", "a <*> b"),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            derive_binary_annotations("a", ""),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(derive_binary_annotations("  ", "a"), Err(Error::EmptyLog)));
    }

    #[test]
    fn structured_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(
            &path,
            "LineId,Content,EventId,EventTemplate\n1,\"Took 20 seconds to spawn\",E1,\"Took <*> seconds to spawn\"\n2,\"a, b\",E2,\"a, <*>\"\n",
        )
        .unwrap();
        let rows = read_structured(&path, &StructuredColumns::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].content, "a, b");
        let cols = StructuredColumns {
            content: "Message".into(),
            ..Default::default()
        };
        assert!(matches!(read_structured(&path, &cols), Err(Error::Format { .. })));
    }
}
