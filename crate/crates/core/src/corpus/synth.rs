//! Synthetic annotated corpora with known ground truth.
//!
//! Templates are random sequences of static words with variable slots; each
//! slot has a category (drawn so that all ten categories occur) and logs are
//! produced by filling slots with values shaped like that category: hex or
//! numeric ids for OID, paths and addresses for LOI, hyphenated names for OBN,
//! numbers for amounts, durations and resources, small integers and codes for
//! type/switch/status indicators, mixed strings for OTP.
//!
//! A fraction of OID/LOI/OBN slots are *polymorphic*: they accept two of those
//! three categories, and the category of each generated value is only visible
//! from its shape. Static context alone cannot resolve them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedLog, Token};
use crate::taxonomy::{Label, Tag, VariableCategory};
use crate::{Error, Result};

use VariableCategory::*;

/// Which static words templates may use. The two families are disjoint halves
/// of the full lexicon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lexicon {
    Full,
    FamilyA,
    FamilyB,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_templates: usize,
    pub n_logs: usize,
    pub lexicon: Lexicon,
    /// Probability that an OID/LOI/OBN slot accepts a second category.
    pub polymorphic_rate: f64,
}

impl SynthConfig {
    pub fn new(seed: u64, n_templates: usize, n_logs: usize) -> SynthConfig {
        SynthConfig {
            seed,
            n_templates,
            n_logs,
            lexicon: Lexicon::Full,
            polymorphic_rate: 0.25,
        }
    }

    pub fn with_lexicon(mut self, lexicon: Lexicon) -> SynthConfig {
        self.lexicon = lexicon;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Static(String),
    Slot(Vec<VariableCategory>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub id: usize,
    pub parts: Vec<Part>,
}

impl TemplateSpec {
    /// Template text with every slot rendered as `<*>`.
    pub fn canonical(&self) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                Part::Static(s) => s.as_str(),
                Part::Slot(_) => "<*>",
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn slots(&self) -> impl Iterator<Item = &[VariableCategory]> {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(c) => Some(c.as_slice()),
            Part::Static(_) => None,
        })
    }
}

/// Everything needed to reproduce and describe a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub config: SynthConfig,
    pub templates: Vec<TemplateSpec>,
    /// Template index of every generated log, in output order.
    pub log_templates: Vec<usize>,
    /// Number of variable occurrences per category abbreviation.
    pub category_counts: BTreeMap<String, usize>,
}

pub fn generate_synthetic(seed: u64, n_templates: usize, n_logs: usize) -> Result<(Vec<AnnotatedLog>, GeneratorSpec)> {
    SynthConfig::new(seed, n_templates, n_logs).generate()
}

impl SynthConfig {
    pub fn generate(&self) -> Result<(Vec<AnnotatedLog>, GeneratorSpec)> {
        if self.n_templates < 5 {
            return Err(Error::InvalidArgument(format!(
                "need at least 5 templates, got {}",
                self.n_templates
            )));
        }
        if self.n_logs < 10 * self.n_templates {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 logs per template ({} templates, {} logs)",
                self.n_templates, self.n_logs
            )));
        }
        if !(0.0..=1.0).contains(&self.polymorphic_rate) {
            return Err(Error::InvalidArgument("polymorphic_rate must be in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let templates = self.build_templates(&mut rng);

        let mut log_templates: Vec<usize> = (0..self.n_logs).map(|i| i % self.n_templates).collect();
        log_templates.shuffle(&mut rng);

        let mut counts: BTreeMap<String, usize> = VariableCategory::ALL
            .iter()
            .map(|c| (c.abbrev().to_string(), 0))
            .collect();
        let mut logs = Vec::with_capacity(self.n_logs);
        for &t in &log_templates {
            let mut tokens = Vec::new();
            let mut tags = Vec::new();
            for part in &templates[t].parts {
                match part {
                    Part::Static(w) => {
                        tokens.push(Token::new(w.clone()).expect("lexicon words have no whitespace"));
                        tags.push(Tag::Outside);
                    }
                    Part::Slot(cats) => {
                        let cat = *cats.choose(&mut rng).expect("slots have a category");
                        *counts.get_mut(cat.abbrev()).unwrap() += 1;
                        for (k, value) in fill(cat, &mut rng).into_iter().enumerate() {
                            tokens.push(Token::new(value).expect("fillers have no whitespace"));
                            let label = Label::Category(cat);
                            tags.push(if k == 0 { Tag::Begin(label) } else { Tag::Inside(label) });
                        }
                    }
                }
            }
            logs.push(AnnotatedLog::new(tokens, tags)?);
        }

        Ok((
            logs,
            GeneratorSpec {
                config: self.clone(),
                templates,
                log_templates,
                category_counts: counts,
            },
        ))
    }

    fn build_templates(&self, rng: &mut ChaCha8Rng) -> Vec<TemplateSpec> {
        let words = lexicon(self.lexicon);

        // Shapes first: number of static words and slot positions per template.
        let mut shapes: Vec<(usize, Vec<usize>)> = (0..self.n_templates)
            .map(|_| {
                let n_static = rng.random_range(2..=8);
                let n_slots = rng.random_range(1..=4usize).min(n_static + 1);
                (n_static, pick_gaps(n_static, n_slots, rng))
            })
            .collect();
        // Make sure there are enough slots to cover every category.
        let mut k = 0;
        while shapes.iter().map(|s| s.1.len()).sum::<usize>() < VariableCategory::ALL.len() {
            let (n_static, gaps) = &mut shapes[k % self.n_templates];
            if gaps.len() < 4 && gaps.len() < *n_static + 1 {
                *gaps = pick_gaps(*n_static, gaps.len() + 1, rng);
            }
            k += 1;
        }

        // Categories cycle through shuffled rounds of all ten.
        let total_slots: usize = shapes.iter().map(|s| s.1.len()).sum();
        let mut cats = Vec::with_capacity(total_slots + 10);
        while cats.len() < total_slots {
            let mut round = VariableCategory::ALL.to_vec();
            round.shuffle(rng);
            cats.extend(round);
        }
        cats.truncate(total_slots);
        let mut cats = cats.into_iter();

        let mut seen = BTreeSet::new();
        let mut templates = Vec::with_capacity(self.n_templates);
        for (id, (n_static, gaps)) in shapes.into_iter().enumerate() {
            let slot_cats: Vec<Vec<VariableCategory>> = gaps
                .iter()
                .map(|_| {
                    let c = cats.next().expect("one category per slot");
                    let mut accepted = vec![c];
                    if let Some(partners) = polymorphic_partners(c) {
                        if rng.random_bool(self.polymorphic_rate) {
                            accepted.push(*partners.choose(rng).unwrap());
                        }
                    }
                    accepted
                })
                .collect();
            // Redraw static words until the canonical form is new.
            loop {
                let mut chosen: Vec<&str> = words.choose_multiple(rng, n_static).copied().collect();
                chosen.shuffle(rng);
                let mut statics: Vec<String> = chosen
                    .into_iter()
                    .map(|w| {
                        if rng.random_bool(0.12) {
                            format!("{w}:")
                        } else {
                            w.to_string()
                        }
                    })
                    .collect();
                if let Some(first) = statics.first_mut() {
                    if rng.random_bool(0.5) {
                        *first = capitalize(first);
                    }
                }
                let mut parts = Vec::with_capacity(n_static + gaps.len());
                let mut slots = slot_cats.iter();
                for gap in 0..=n_static {
                    if gaps.contains(&gap) {
                        parts.push(Part::Slot(slots.next().unwrap().clone()));
                    }
                    if let Some(w) = statics.get(gap) {
                        parts.push(Part::Static(w.clone()));
                    }
                }
                let t = TemplateSpec { id, parts };
                if seen.insert(t.canonical()) {
                    templates.push(t);
                    break;
                }
            }
        }
        templates
    }
}

/// Distinct, sorted gap positions in `0..=n_static` (gap `g` sits before static word `g`).
fn pick_gaps(n_static: usize, n_slots: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let all: Vec<usize> = (0..=n_static).collect();
    let mut gaps: Vec<usize> = all.choose_multiple(rng, n_slots).copied().collect();
    gaps.sort_unstable();
    gaps
}

fn polymorphic_partners(c: VariableCategory) -> Option<&'static [VariableCategory]> {
    match c {
        ObjectId => Some(&[LocationIndicator, ObjectName]),
        LocationIndicator => Some(&[ObjectId, ObjectName]),
        ObjectName => Some(&[ObjectId, LocationIndicator]),
        _ => None,
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn hex(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len)
        .map(|_| char::from_digit(rng.random_range(0..16), 16).unwrap())
        .collect()
}

fn digits(rng: &mut ChaCha8Rng, len: usize) -> String {
    let mut s = rng.random_range(1..10).to_string();
    for _ in 1..len {
        s.push(char::from_digit(rng.random_range(0..10), 10).unwrap());
    }
    s
}

fn ip(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{}.{}.{}.{}",
        [10, 172, 192][rng.random_range(0..3)],
        rng.random_range(0..256),
        rng.random_range(0..256),
        rng.random_range(1..255)
    )
}

const PATH_SEGMENTS: &[&str] = &[
    "var", "log", "tmp", "usr", "lib", "opt", "data", "hadoop", "spark", "etc", "home", "mapreduce",
    "user", "jobs", "cache", "conf", "share", "local", "srv", "run",
];
const PATH_EXT: &[&str] = &["log", "xml", "jar", "conf", "dat", "tmp", "json"];
const NAME_STEMS: &[&str] = &[
    "meso", "node", "worker", "rack", "roof", "host", "db", "web", "app", "edge", "kafka", "zk",
    "master", "slave", "gw", "ctl", "compute", "storage",
];
const NAME_SUFFIX: &[&str] = &["local", "prod", "east", "west", "core", "main", "dev"];
const OTP_WORDS: &[&str] = &["x86_64", "utf-8", "amd64", "ipv4", "sha256", "h264", "tls1.2", "arm64"];

/// Tokens of one value of category `cat`.
fn fill(cat: VariableCategory, rng: &mut ChaCha8Rng) -> Vec<String> {
    let one = |s: String| vec![s];
    match cat {
        ObjectId => one(match rng.random_range(0..4) {
            0 => {
                let n = rng.random_range(8..=16);
                hex(rng, n)
            }
            1 => format!("blk_{}{}", if rng.random_bool(0.5) { "-" } else { "" }, digits(rng, 18)),
            2 => {
                let n = rng.random_range(10..=13);
                digits(rng, n)
            }
            _ => format!(
                "attempt_{}_{:04}_m_{:06}",
                digits(rng, 13),
                rng.random_range(0..10000),
                rng.random_range(0..1_000_000)
            ),
        }),
        LocationIndicator => one(match rng.random_range(0..4) {
            0 => {
                let depth = rng.random_range(1..=4);
                let mut p = String::new();
                for _ in 0..depth {
                    p.push('/');
                    p.push_str(PATH_SEGMENTS.choose(rng).unwrap());
                }
                if rng.random_bool(0.5) {
                    p.push_str(&format!("/part-{:05}.{}", rng.random_range(0..100), PATH_EXT.choose(rng).unwrap()));
                }
                p
            }
            1 => ip(rng),
            2 => format!("{}:{}", ip(rng), rng.random_range(1024..65536)),
            _ => format!(
                "hdfs://{}-{}:{}/{}",
                NAME_STEMS.choose(rng).unwrap(),
                rng.random_range(1..100),
                [8020, 9000, 50010][rng.random_range(0..3)],
                PATH_SEGMENTS.choose(rng).unwrap()
            ),
        }),
        ObjectName => one(match rng.random_range(0..3) {
            0 => format!("{}-{:02}", NAME_STEMS.choose(rng).unwrap(), rng.random_range(0..100)),
            1 => format!(
                "{}{}-{}",
                NAME_STEMS.choose(rng).unwrap(),
                rng.random_range(1..100),
                NAME_SUFFIX.choose(rng).unwrap()
            ),
            _ => format!(
                "{}-{}-{}",
                NAME_STEMS.choose(rng).unwrap(),
                NAME_STEMS.choose(rng).unwrap(),
                rng.random_range(1..20)
            ),
        }),
        TypeIndicator => one(if rng.random_bool(0.7) {
            rng.random_range(0..10).to_string()
        } else {
            format!("{}{}", ['T', 'K', 'P'][rng.random_range(0..3)], rng.random_range(0..10))
        }),
        SwitchIndicator => one(["0", "1", "2", "-1"][rng.random_range(0..4)].to_string()),
        TimeOrDuration => match rng.random_range(0..5) {
            0 => one(rng.random_range(1..600).to_string()),
            1 => one(format!("{}.{}", rng.random_range(0..100), rng.random_range(0..10))),
            2 => one(format!("{}ms", rng.random_range(1..5000))),
            3 => one(format!(
                "{:02}:{:02}:{:02}",
                rng.random_range(0..24),
                rng.random_range(0..60),
                rng.random_range(0..60)
            )),
            _ => vec![
                format!(
                    "20{:02}-{:02}-{:02}",
                    rng.random_range(10..25),
                    rng.random_range(1..13),
                    rng.random_range(1..29)
                ),
                format!(
                    "{:02}:{:02}:{:02}",
                    rng.random_range(0..24),
                    rng.random_range(0..60),
                    rng.random_range(0..60)
                ),
            ],
        },
        ComputingResources => one(match rng.random_range(0..4) {
            0 => format!("{}{}", rng.random_range(1..4096), ["MB", "KB", "GB"][rng.random_range(0..3)]),
            1 => rng.random_range(64..65536).to_string(),
            2 => format!("{}.{}%", rng.random_range(0..100), rng.random_range(0..10)),
            _ => format!("{}.{}GB", rng.random_range(0..64), rng.random_range(0..10)),
        }),
        ObjectAmount => one(rng.random_range(0..5000).to_string()),
        StatusCode => one(match rng.random_range(0..3) {
            0 => ["200", "404", "500", "503", "403", "301"][rng.random_range(0..6)].to_string(),
            1 => format!("0x{}", hex(rng, 4)),
            _ => rng.random_range(0..16).to_string(),
        }),
        OtherParameters => one(match rng.random_range(0..3) {
            0 => format!("{:04}", rng.random_range(0..10000)),
            1 => format!("v{}.{}.{}", rng.random_range(0..5), rng.random_range(0..20), rng.random_range(0..10)),
            _ => OTP_WORDS.choose(rng).unwrap().to_string(),
        }),
    }
}

fn lexicon(which: Lexicon) -> Vec<&'static str> {
    match which {
        Lexicon::Full => WORDS.to_vec(),
        Lexicon::FamilyA => WORDS.iter().step_by(2).copied().collect(),
        Lexicon::FamilyB => WORDS.iter().skip(1).step_by(2).copied().collect(),
    }
}

const WORDS: &[&str] = &[
    "starting", "executor", "on", "host", "added", "attempt", "to", "list", "of", "failed", "maps",
    "adding", "path", "spec", "domain", "is", "full", "using", "configuration", "type", "saw",
    "change", "in", "network", "reachability", "scheduled", "snapshot", "period", "at", "kernel",
    "available", "total", "error", "detected", "and", "corrected", "child", "state", "payload",
    "data", "block", "received", "from", "src", "dest", "size", "served", "deleting", "file",
    "verification", "succeeded", "for", "packet", "responder", "terminating", "exception", "while",
    "serving", "allocated", "container", "released", "memory", "task", "finished", "stage", "job",
    "submitted", "completed", "shuffle", "fetch", "request", "response", "session", "opened",
    "closed", "user", "connection", "accepted", "refused", "timeout", "retrying", "after",
    "seconds", "waiting", "lock", "acquired", "service", "stopped", "started", "registered",
    "unregistered", "instance", "spawned", "destroyed", "volume", "attached", "detached", "image",
    "cache", "hit", "miss", "queue", "length", "thread", "pool", "worker", "heartbeat", "lost",
    "recovered", "leader", "elected", "follower", "snapshotting", "transaction", "log", "commit",
    "rollback", "checkpoint", "disk", "usage", "quota", "exceeded", "interrupt", "device", "driver",
    "loaded", "unloaded", "module", "power", "battery", "level", "screen", "wake", "sleep",
    "display", "brightness", "sensor", "reading", "temperature", "fan", "speed", "cpu", "load",
    "average", "process", "killed", "signal", "exit", "code", "status", "port", "listening",
    "bound", "socket", "peer", "reset", "handshake", "certificate", "expired", "token", "refresh",
    "authentication", "failure", "password", "invalid", "rejected", "publickey", "route", "table",
    "updated", "entry", "removed", "mount", "unmount", "partition", "sector", "parity", "node",
    "rack", "replica", "replication", "factor", "namenode", "datanode", "heap", "garbage",
    "collection", "pause",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_and_size() {
        let (logs, spec) = generate_synthetic(1, 20, 2000).unwrap();
        assert_eq!(logs.len(), 2000);
        assert_eq!(spec.templates.len(), 20);
        for (cat, n) in &spec.category_counts {
            assert!(*n >= 20, "{cat} appears only {n} times");
        }
        // counted independently from the tags themselves
        let mut begins: BTreeMap<String, usize> = BTreeMap::new();
        for log in &logs {
            for t in log.tags() {
                if let Tag::Begin(l) = t {
                    *begins.entry(l.to_string()).or_default() += 1;
                }
            }
        }
        for (cat, n) in &spec.category_counts {
            assert_eq!(begins.get(cat).copied().unwrap_or(0), *n);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(5, 8, 200).unwrap();
        let b = generate_synthetic(5, 8, 200).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(
            serde_json::to_string(&a.1).unwrap(),
            serde_json::to_string(&b.1).unwrap()
        );
        assert_ne!(a.0, generate_synthetic(6, 8, 200).unwrap().0);
    }

    #[test]
    fn templates_are_distinct_and_shaped() {
        for seed in 0..20 {
            let (logs, spec) = generate_synthetic(seed, 5, 50).unwrap();
            let canon: BTreeSet<_> = spec.templates.iter().map(|t| t.canonical()).collect();
            assert_eq!(canon.len(), 5);
            let slots: usize = spec.templates.iter().map(|t| t.slots().count()).sum();
            assert!(slots >= 10);
            for t in &spec.templates {
                let statics = t.parts.iter().filter(|p| matches!(p, Part::Static(_))).count();
                let n_slots = t.slots().count();
                assert!((2..=8).contains(&statics));
                assert!((1..=4).contains(&n_slots));
            }
            for (log, &t) in logs.iter().zip(&spec.log_templates) {
                // one B- tag per slot
                let begins = log.tags().iter().filter(|t| matches!(t, Tag::Begin(_))).count();
                assert_eq!(begins, spec.templates[t].slots().count());
            }
            // all ten categories occur somewhere
            let cats: BTreeSet<_> = spec.templates.iter().flat_map(|t| t.slots().map(|s| s[0])).collect();
            assert_eq!(cats.len(), 10);
        }
    }

    #[test]
    fn static_words_never_look_like_values() {
        for w in WORDS {
            assert!(w.chars().all(|c| c.is_ascii_lowercase()), "{w}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cat in VariableCategory::ALL {
            for _ in 0..200 {
                for v in fill(cat, &mut rng) {
                    assert!(!v.chars().all(|c| c.is_ascii_alphabetic() || c == ':'), "{cat}: {v}");
                }
            }
        }
    }

    #[test]
    fn families_are_disjoint() {
        assert_eq!(WORDS.iter().collect::<BTreeSet<_>>().len(), WORDS.len());
        let a: BTreeSet<_> = lexicon(Lexicon::FamilyA).into_iter().collect();
        let b: BTreeSet<_> = lexicon(Lexicon::FamilyB).into_iter().collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn rejects_small_configs() {
        assert!(generate_synthetic(0, 4, 100).is_err());
        assert!(generate_synthetic(0, 5, 49).is_err());
    }
}
