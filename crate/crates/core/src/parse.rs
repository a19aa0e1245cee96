//! Templates from tagged logs.
//!
//! Each maximal variable run becomes one placeholder. Runs whose category is
//! in the preserve set keep their text in the rendered template; the others
//! become the wildcard. Template identity always comes from the canonical form
//! in which every run is `<*>`, so the choice of preserved categories never
//! splits a template.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{join_tokens, tokenize, AnnotatedLog};
use crate::eval::spans;
use crate::tagger::TaggerModel;
use crate::taxonomy::VariableCategory;
use crate::{Error, Result};

pub const WILDCARD: &str = "<*>";

/// A variable occurrence; `start..end` are token positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub category: String,
    pub value: String,
    pub start: usize,
    pub end: usize,
    /// Whether the value was kept in the rendered template.
    #[serde(skip)]
    pub preserved: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseResult {
    /// Rendered template: preserved values inline, other variables as the wildcard.
    pub template: String,
    /// Every variable as `<*>`; the basis of `template_id`.
    pub canonical_template: String,
    pub template_id: String,
    pub extractions: Vec<Extraction>,
}

/// 64-bit identifier of a canonical template: the first eight bytes of its
/// SHA-256 digest, as 16 hex digits.
pub fn template_id(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    format!("{:016x}", u64::from_be_bytes(b))
}

/// Options of template rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    pub preserve: BTreeSet<VariableCategory>,
    pub wildcard: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            preserve: BTreeSet::new(),
            wildcard: WILDCARD.to_string(),
        }
    }
}

impl ParseOptions {
    pub fn preserving(categories: impl IntoIterator<Item = VariableCategory>) -> Self {
        ParseOptions {
            preserve: categories.into_iter().collect(),
            ..Default::default()
        }
    }
}

pub fn extract_template(log: &AnnotatedLog, opts: &ParseOptions) -> ParseResult {
    let tokens = log.tokens();
    let runs = spans(log.tags());
    let mut template = Vec::new();
    let mut canonical = Vec::new();
    let mut extractions = Vec::with_capacity(runs.len());
    let mut pos = 0;
    for run in &runs {
        for t in &tokens[pos..run.start] {
            template.push(t.as_str().to_string());
            canonical.push(t.as_str().to_string());
        }
        let value = join_tokens(&tokens[run.start..run.end]);
        let preserved = run.label.category().is_some_and(|c| opts.preserve.contains(&c));
        template.push(if preserved { value.clone() } else { opts.wildcard.clone() });
        canonical.push(WILDCARD.to_string());
        extractions.push(Extraction {
            category: run.label.abbrev().to_string(),
            value,
            start: run.start,
            end: run.end,
            preserved,
        });
        pos = run.end;
    }
    for t in &tokens[pos..] {
        template.push(t.as_str().to_string());
        canonical.push(t.as_str().to_string());
    }
    let canonical_template = canonical.join(" ");
    ParseResult {
        template: template.join(" "),
        template_id: template_id(&canonical_template),
        canonical_template,
        extractions,
    }
}

/// Rebuilds the original message from the canonical template and the
/// extracted values.
pub fn reconstruct(result: &ParseResult) -> String {
    let mut out = Vec::new();
    let mut pos = 0;
    let mut next = result.extractions.iter().peekable();
    for tok in result.canonical_template.split(' ') {
        match next.peek() {
            Some(x) if x.start == pos && tok == WILDCARD => {
                out.push(x.value.as_str());
                pos = x.end;
                next.next();
            }
            _ => {
                out.push(tok);
                pos += 1;
            }
        }
    }
    out.join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub template_id: String,
    pub canonical_template: String,
    pub count: usize,
}

/// Canonical templates in first-seen order with occurrence counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TemplateStore {
    entries: Vec<TemplateEntry>,
    index: HashMap<String, usize>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one occurrence and returns the template's 0-based ordinal.
    pub fn intern(&mut self, result: &ParseResult) -> usize {
        if let Some(&i) = self.index.get(&result.canonical_template) {
            self.entries[i].count += 1;
            return i;
        }
        let i = self.entries.len();
        self.entries.push(TemplateEntry {
            template_id: result.template_id.clone(),
            canonical_template: result.canonical_template.clone(),
            count: 1,
        });
        self.index.insert(result.canonical_template.clone(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TemplateEntry] {
        &self.entries
    }

    pub fn get(&self, canonical: &str) -> Option<&TemplateEntry> {
        self.index.get(canonical).map(|&i| &self.entries[i])
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("entry serializes"));
            s.push('\n');
        }
        s
    }
}

/// One parsed input line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedRecord {
    /// 1-based input line number.
    pub line_no: usize,
    pub ordinal: usize,
    pub result: ParseResult,
}

#[derive(Serialize)]
struct RecordJson<'a> {
    line_no: usize,
    template_id: &'a str,
    template: &'a str,
    extractions: &'a [Extraction],
}

impl ParsedRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&RecordJson {
            line_no: self.line_no,
            template_id: &self.result.template_id,
            template: &self.result.template,
            extractions: &self.result.extractions,
        })
        .expect("record serializes")
    }
}

/// A line that could not be parsed.
#[derive(Debug)]
pub struct LineError {
    pub line_no: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct CorpusParse {
    pub records: Vec<ParsedRecord>,
    pub store: TemplateStore,
    pub errors: Vec<LineError>,
}

impl CorpusParse {
    fn from_logs(logs: Vec<(usize, Result<AnnotatedLog>)>, opts: &ParseOptions) -> CorpusParse {
        let mut out = CorpusParse::default();
        for (line_no, log) in logs {
            match log {
                Ok(log) => {
                    let result = extract_template(&log, opts);
                    let ordinal = out.store.intern(&result);
                    out.records.push(ParsedRecord {
                        line_no,
                        ordinal,
                        result,
                    });
                }
                Err(error) => out.errors.push(LineError { line_no, error }),
            }
        }
        out
    }

    pub fn records_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_json());
            s.push('\n');
        }
        s
    }
}

/// Tags every line with `model` (in parallel) and interns templates in input
/// order. Lines that fail to tokenize are reported in `errors` and skipped.
pub fn parse_corpus<S: AsRef<str> + Sync>(model: &TaggerModel, lines: &[S], opts: &ParseOptions) -> CorpusParse {
    let tokenized: Vec<Result<Vec<crate::Token>>> = lines.iter().map(|l| tokenize(l.as_ref())).collect();
    let ok: Vec<Vec<crate::Token>> = tokenized.iter().filter_map(|t| t.as_ref().ok().cloned()).collect();
    let mut tagged = model.tag_many(&ok).into_iter();
    let logs = tokenized
        .into_iter()
        .enumerate()
        .map(|(i, toks)| {
            let log = toks.and_then(|toks| {
                let tags = tagged.next().expect("one tag sequence per tokenized line");
                AnnotatedLog::new(toks, tags)
            });
            (i + 1, log)
        })
        .collect();
    CorpusParse::from_logs(logs, opts)
}

/// Template extraction over logs that already carry tags.
pub fn parse_annotated(logs: &[AnnotatedLog], opts: &ParseOptions) -> CorpusParse {
    CorpusParse::from_logs(
        logs.iter().enumerate().map(|(i, l)| (i + 1, Ok(l.clone()))).collect(),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::VariableCategory as C;

    fn executor_log() -> AnnotatedLog {
        AnnotatedLog::from_pairs(&[
            ("Starting", "O"),
            ("executor", "O"),
            ("ID", "O"),
            ("5", "B-OID"),
            ("on", "O"),
            ("host", "O"),
            ("meso-07", "B-OBN"),
        ])
    }

    #[test]
    fn abstracts_everything_by_default() {
        let r = extract_template(&executor_log(), &ParseOptions::default());
        assert_eq!(r.template, "Starting executor ID <*> on host <*>");
        assert_eq!(r.canonical_template, r.template);
        assert_eq!(r.extractions.len(), 2);
        assert_eq!(r.template_id.len(), 16);
    }

    #[test]
    fn preserves_selected_categories() {
        let r = extract_template(&executor_log(), &ParseOptions::preserving([C::ObjectId]));
        assert_eq!(r.template, "Starting executor ID 5 on host <*>");
        assert_eq!(r.canonical_template, "Starting executor ID <*> on host <*>");
        let x: Vec<_> = r.extractions.iter().map(|e| (e.category.as_str(), e.value.as_str(), e.preserved)).collect();
        assert_eq!(x, [("OID", "5", true), ("OBN", "meso-07", false)]);
        assert_eq!(r.template_id, extract_template(&executor_log(), &ParseOptions::default()).template_id);
    }

    #[test]
    fn multi_token_runs_and_custom_wildcard() {
        let log = AnnotatedLog::from_pairs(&[
            ("at", "O"),
            ("2024-01-01", "B-TDA"),
            ("10:00:00", "I-TDA"),
            ("done", "O"),
        ]);
        let opts = ParseOptions {
            wildcard: "*".into(),
            ..Default::default()
        };
        let r = extract_template(&log, &opts);
        assert_eq!(r.template, "at * done");
        assert_eq!(r.canonical_template, "at <*> done");
        assert_eq!((r.extractions[0].start, r.extractions[0].end), (1, 3));
        assert_eq!(r.extractions[0].value, "2024-01-01 10:00:00");
        assert_eq!(reconstruct(&r), log.message());
    }

    #[test]
    fn all_static_log() {
        let log = AnnotatedLog::from_pairs(&[("all", "O"), ("good", "O")]);
        let r = extract_template(&log, &ParseOptions::default());
        assert_eq!(r.template, "all good");
        assert!(r.extractions.is_empty());
    }

    #[test]
    fn reconstruction_survives_literal_wildcard_tokens() {
        let log = AnnotatedLog::from_pairs(&[("<*>", "O"), ("x", "B-OID"), ("<*>", "O")]);
        let r = extract_template(&log, &ParseOptions::default());
        assert_eq!(reconstruct(&r), "<*> x <*>");
    }

    #[test]
    fn store_counts_and_orders() {
        let a = executor_log();
        let b = AnnotatedLog::from_pairs(&[
            ("Starting", "O"),
            ("executor", "O"),
            ("ID", "O"),
            ("9", "B-OID"),
            ("on", "O"),
            ("host", "O"),
            ("meso-01", "B-OBN"),
        ]);
        let c = AnnotatedLog::from_pairs(&[("bye", "O")]);
        let out = parse_annotated(&[a, c, b], &ParseOptions::default());
        assert_eq!(out.store.len(), 2);
        assert_eq!(out.store.entries()[0].count, 2);
        assert_eq!(out.records.iter().map(|r| r.ordinal).collect::<Vec<_>>(), [0, 1, 0]);
        assert_eq!(out.records[0].result.template_id, out.records[2].result.template_id);
        let line: serde_json::Value = serde_json::from_str(&out.records[0].to_json()).unwrap();
        assert_eq!(line["line_no"], 1);
        assert_eq!(line["extractions"][0]["category"], "OID");
        assert_eq!(line["extractions"][0]["end"], 4);
        assert_eq!(out.store.to_jsonl().lines().count(), 2);
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(template_id("a <*> b"), template_id("a <*> b"));
        assert_ne!(template_id("a <*> b"), template_id("a <*> c"));
    }
}
