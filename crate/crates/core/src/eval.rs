//! Evaluation measures over predicted and gold annotations.
//!
//! * General accuracy: a log is correct when every token is correctly
//!   classified as static or variable.
//! * Variable-aware accuracy: a log is correct when every tag, category and
//!   B/I position included, matches.
//! * Per-category precision, recall and F1 over variable spans, with exact
//!   boundary matching by default or token-level matching on request.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedLog;
use crate::taxonomy::{Label, Tag, VariableCategory};
use crate::{Error, Result};

/// A maximal `B-X (I-X)*` run, `start..end` in token positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

/// Variable spans of a well-formed tag sequence.
pub fn spans(tags: &[Tag]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            Tag::Begin(label) => out.push(Span {
                label,
                start: i,
                end: i + 1,
            }),
            Tag::Inside(label) => match out.last_mut() {
                Some(s) if s.end == i && s.label == label => s.end += 1,
                // tolerate an ill-formed I-X by starting a new span
                _ => out.push(Span {
                    label,
                    start: i,
                    end: i + 1,
                }),
            },
            Tag::Outside => {}
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchLevel {
    /// A predicted span counts only if a gold span has the same label and boundaries.
    #[default]
    Span,
    /// Every variable token counts separately, by label only.
    Token,
}

fn check_pairs(preds: &[AnnotatedLog], golds: &[AnnotatedLog]) -> Result<()> {
    for (i, (p, g)) in preds.iter().zip(golds).enumerate() {
        if p.tokens() != g.tokens() {
            let pos = p
                .tokens()
                .iter()
                .zip(g.tokens())
                .position(|(a, b)| a != b)
                .unwrap_or(p.len().min(g.len()));
            return Err(Error::TokenMismatch {
                index: i,
                msg: format!("first difference at token {pos}"),
            });
        }
    }
    if preds.len() != golds.len() {
        return Err(Error::TokenMismatch {
            index: preds.len().min(golds.len()),
            msg: format!("{} predictions for {} gold logs", preds.len(), golds.len()),
        });
    }
    Ok(())
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn general_correct(p: &AnnotatedLog, g: &AnnotatedLog) -> bool {
    p.tags().iter().zip(g.tags()).all(|(a, b)| a.collapse() == b.collapse())
}

pub fn general_accuracy(preds: &[AnnotatedLog], golds: &[AnnotatedLog]) -> Result<f64> {
    check_pairs(preds, golds)?;
    let ok = preds.iter().zip(golds).filter(|(p, g)| general_correct(p, g)).count();
    Ok(fraction(ok, golds.len()))
}

pub fn variable_aware_accuracy(preds: &[AnnotatedLog], golds: &[AnnotatedLog]) -> Result<f64> {
    check_pairs(preds, golds)?;
    let ok = preds.iter().zip(golds).filter(|(p, g)| p.tags() == g.tags()).count();
    Ok(fraction(ok, golds.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        fraction(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        fraction(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    /// Category abbreviation (`OID`, ..., or `VAR` for binary annotations).
    pub category: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-label TP/FP/FN counts.
pub fn category_counts(
    preds: &[AnnotatedLog],
    golds: &[AnnotatedLog],
    level: MatchLevel,
) -> Result<BTreeMap<Label, Counts>> {
    check_pairs(preds, golds)?;
    let mut counts: BTreeMap<Label, Counts> = BTreeMap::new();
    for (p, g) in preds.iter().zip(golds) {
        match level {
            MatchLevel::Span => {
                let gold = spans(g.tags());
                let pred = spans(p.tags());
                for s in &pred {
                    let c = counts.entry(s.label).or_default();
                    if gold.contains(s) {
                        c.tp += 1;
                    } else {
                        c.fp += 1;
                    }
                }
                for s in gold.iter().filter(|s| !pred.contains(s)) {
                    counts.entry(s.label).or_default().fn_ += 1;
                }
            }
            MatchLevel::Token => {
                for (a, b) in p.tags().iter().zip(g.tags()) {
                    match (a.label(), b.label()) {
                        (Some(x), Some(y)) if x == y => counts.entry(x).or_default().tp += 1,
                        (x, y) => {
                            if let Some(x) = x {
                                counts.entry(x).or_default().fp += 1;
                            }
                            if let Some(y) = y {
                                counts.entry(y).or_default().fn_ += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub logs: usize,
    pub general_correct: usize,
    pub variable_aware_correct: usize,
    pub general_accuracy: f64,
    pub variable_aware_accuracy: f64,
    pub level: MatchLevel,
    /// One row per category in taxonomy order (plus `VAR` when binary tags occur).
    pub categories: Vec<CategoryScore>,
    /// Unweighted means over categories with at least one TP, FP or FN.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricsReport {
    pub fn category(&self, abbrev: &str) -> Option<&CategoryScore> {
        self.categories.iter().find(|c| c.category == abbrev)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "logs evaluated           {}", self.logs);
        let _ = writeln!(
            s,
            "general accuracy         {:.4}  ({}/{})",
            self.general_accuracy, self.general_correct, self.logs
        );
        let _ = writeln!(
            s,
            "variable-aware accuracy  {:.4}  ({}/{})",
            self.variable_aware_accuracy, self.variable_aware_correct, self.logs
        );
        let _ = writeln!(s);
        let level = match self.level {
            MatchLevel::Span => "span",
            MatchLevel::Token => "token",
        };
        let _ = writeln!(s, "per-category scores ({level} level)");
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
            "category", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        for c in &self.categories {
            let _ = writeln!(
                s,
                "{:<8} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                c.category, c.counts.tp, c.counts.fp, c.counts.fn_, c.precision, c.recall, c.f1
            );
        }
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            "macro", "", "", "", self.macro_precision, self.macro_recall, self.macro_f1
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// All measures at once.
pub fn evaluate(preds: &[AnnotatedLog], golds: &[AnnotatedLog], level: MatchLevel) -> Result<MetricsReport> {
    check_pairs(preds, golds)?;
    let counts = category_counts(preds, golds, level)?;
    let mut labels: Vec<Label> = VariableCategory::ALL.iter().map(|&c| Label::Category(c)).collect();
    if counts.contains_key(&Label::Var) {
        labels.push(Label::Var);
    }
    let categories: Vec<CategoryScore> = labels
        .iter()
        .map(|l| {
            let c = counts.get(l).copied().unwrap_or_default();
            CategoryScore {
                category: l.abbrev().to_string(),
                counts: c,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
            }
        })
        .collect();
    let included: Vec<&CategoryScore> = categories.iter().filter(|c| !c.counts.is_empty()).collect();
    let mean = |f: fn(&CategoryScore) -> f64| fraction_f(included.iter().map(|c| f(c)).sum(), included.len());
    let general_correct = preds.iter().zip(golds).filter(|(p, g)| general_correct(p, g)).count();
    let variable_aware_correct = preds.iter().zip(golds).filter(|(p, g)| p.tags() == g.tags()).count();
    Ok(MetricsReport {
        logs: golds.len(),
        general_correct,
        variable_aware_correct,
        general_accuracy: fraction(general_correct, golds.len()),
        variable_aware_accuracy: fraction(variable_aware_correct, golds.len()),
        level,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        categories,
    })
}

fn fraction_f(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(pairs: &[(&str, &str)]) -> AnnotatedLog {
        AnnotatedLog::from_pairs(pairs)
    }

    /// L1 exact, L2 right split but wrong category, L3 variable missed, L4 all static.
    fn accuracy_fixture() -> (Vec<AnnotatedLog>, Vec<AnnotatedLog>) {
        let golds = vec![
            log(&[("open", "O"), ("blk_1", "B-OID")]),
            log(&[("read", "O"), ("/tmp/x", "B-LOI")]),
            log(&[("took", "O"), ("20", "B-TDA"), ("ms", "O")]),
            log(&[("all", "O"), ("done", "O")]),
        ];
        let preds = vec![
            log(&[("open", "O"), ("blk_1", "B-OID")]),
            log(&[("read", "O"), ("/tmp/x", "B-OBN")]),
            log(&[("took", "O"), ("20", "O"), ("ms", "O")]),
            log(&[("all", "O"), ("done", "O")]),
        ];
        (preds, golds)
    }

    #[test]
    fn accuracy_fixture_values() {
        let (p, g) = accuracy_fixture();
        assert_eq!(general_accuracy(&p, &g).unwrap(), 0.75);
        assert_eq!(variable_aware_accuracy(&p, &g).unwrap(), 0.5);
        assert_eq!(general_accuracy(&g, &g).unwrap(), 1.0);
        assert_eq!(variable_aware_accuracy(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn prf_fixture_values() {
        let golds = vec![
            log(&[("id", "O"), ("1", "B-OID")]),
            log(&[("id", "O"), ("2", "B-OID")]),
            log(&[("id", "O"), ("3", "B-OID")]),
        ];
        let preds = vec![
            log(&[("id", "O"), ("1", "B-OID")]),
            log(&[("id", "O"), ("2", "B-LOI")]),
            log(&[("id", "O"), ("3", "O")]),
        ];
        let r = evaluate(&preds, &golds, MatchLevel::Span).unwrap();
        let oid = r.category("OID").unwrap();
        assert_eq!((oid.precision, oid.recall, oid.f1), (1.0, 1.0 / 3.0, 0.5));
        let loi = r.category("LOI").unwrap();
        assert_eq!((loi.precision, loi.recall, loi.f1), (0.0, 0.0, 0.0));
        // only OID and LOI take part in the macro average
        assert!((r.macro_f1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn span_boundaries_must_match_exactly() {
        let gold = vec![log(&[("a", "B-TDA"), ("b", "I-TDA"), ("c", "O")])];
        let pred = vec![log(&[("a", "B-TDA"), ("b", "O"), ("c", "O")])];
        let span = category_counts(&pred, &gold, MatchLevel::Span).unwrap();
        let tda = span[&Label::Category(VariableCategory::TimeOrDuration)];
        assert_eq!((tda.tp, tda.fp, tda.fn_), (0, 1, 1));
        let tok = category_counts(&pred, &gold, MatchLevel::Token).unwrap();
        let tda = tok[&Label::Category(VariableCategory::TimeOrDuration)];
        assert_eq!((tda.tp, tda.fp, tda.fn_), (1, 0, 1));
    }

    #[test]
    fn token_mismatch_names_the_log() {
        let (p, mut g) = accuracy_fixture();
        g[2] = log(&[("took", "O"), ("21", "B-TDA"), ("ms", "O")]);
        match general_accuracy(&p, &g) {
            Err(Error::TokenMismatch { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(evaluate(&p[..3], &g, MatchLevel::Span), Err(Error::TokenMismatch { .. })));
    }

    #[test]
    fn report_renders() {
        let (p, g) = accuracy_fixture();
        let r = evaluate(&p, &g, MatchLevel::Span).unwrap();
        let text = r.to_text();
        assert!(text.contains("general accuracy         0.7500  (3/4)"));
        assert!(text.contains("variable-aware accuracy  0.5000  (2/4)"));
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    fn arb_tags(len: usize) -> impl Strategy<Value = Vec<Tag>> {
        let labels = [
            Label::Category(VariableCategory::ObjectId),
            Label::Category(VariableCategory::LocationIndicator),
            Label::Category(VariableCategory::TimeOrDuration),
        ];
        proptest::collection::vec((0usize..3, 0usize..3), len).prop_map(move |raw| {
            let mut tags: Vec<Tag> = Vec::new();
            for (kind, l) in raw {
                let label = labels[l];
                let t = match kind {
                    0 => Tag::Outside,
                    1 => Tag::Begin(label),
                    _ => match tags.last().and_then(|t| t.label()) {
                        Some(prev) => Tag::Inside(prev),
                        None => Tag::Begin(label),
                    },
                };
                tags.push(t);
            }
            tags
        })
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<(Vec<Tag>, Vec<Tag>)>> {
        proptest::collection::vec(
            (1usize..6).prop_flat_map(|n| (arb_tags(n), arb_tags(n))),
            1..8,
        )
    }

    fn build(pairs: &[(Vec<Tag>, Vec<Tag>)]) -> (Vec<AnnotatedLog>, Vec<AnnotatedLog>) {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (a, b) in pairs {
            let toks: Vec<_> = (0..a.len()).map(|i| crate::Token::new(format!("t{i}")).unwrap()).collect();
            p.push(AnnotatedLog::new(toks.clone(), a.clone()).unwrap());
            g.push(AnnotatedLog::new(toks, b.clone()).unwrap());
        }
        (p, g)
    }

    /// Spans by scanning every `(start, end)` and checking maximality directly.
    fn brute_spans(tags: &[Tag]) -> Vec<Span> {
        let mut out = Vec::new();
        for s in 0..tags.len() {
            for e in s + 1..=tags.len() {
                let Tag::Begin(label) = tags[s] else { continue };
                let inner = tags[s + 1..e].iter().all(|t| *t == Tag::Inside(label));
                let closed = e == tags.len() || tags[e] != Tag::Inside(label);
                if inner && closed {
                    out.push(Span { label, start: s, end: e });
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn variable_aware_never_exceeds_general(pairs in arb_pairs()) {
            let (p, g) = build(&pairs);
            prop_assert!(variable_aware_accuracy(&p, &g).unwrap() <= general_accuracy(&p, &g).unwrap());
        }

        #[test]
        fn metrics_are_permutation_invariant(pairs in arb_pairs(), rot in 0usize..8) {
            let (p, g) = build(&pairs);
            let k = rot % pairs.len();
            let (mut p2, mut g2) = (p.clone(), g.clone());
            p2.rotate_left(k);
            g2.rotate_left(k);
            prop_assert_eq!(evaluate(&p, &g, MatchLevel::Span).unwrap(), evaluate(&p2, &g2, MatchLevel::Span).unwrap());
        }

        #[test]
        fn spans_match_brute_force(tags in (1usize..8).prop_flat_map(arb_tags)) {
            prop_assert_eq!(spans(&tags), brute_spans(&tags));
        }

        #[test]
        fn span_counts_match_set_oracle(pairs in arb_pairs()) {
            let (p, g) = build(&pairs);
            let counts = category_counts(&p, &g, MatchLevel::Span).unwrap();
            let mut expected: BTreeMap<Label, Counts> = BTreeMap::new();
            for (a, b) in &pairs {
                let (sa, sb) = (brute_spans(a), brute_spans(b));
                for s in &sa {
                    let c = expected.entry(s.label).or_default();
                    if sb.contains(s) { c.tp += 1 } else { c.fp += 1 }
                }
                for s in sb.iter().filter(|s| !sa.contains(s)) {
                    expected.entry(s.label).or_default().fn_ += 1;
                }
            }
            prop_assert_eq!(counts, expected);
        }
    }
}
