//! Variable categories, the IOB tag alphabet and tag-sequence rules.
//!
//! The multiclass alphabet has 21 tags in a fixed order: `O` first, then the
//! `B-`/`I-` pair of every category in the order of [`VariableCategory::ALL`]:
//!
//! ```text
//! 0 O   1 B-OID 2 I-OID 3 B-LOI 4 I-LOI ... 19 B-OTP 20 I-OTP
//! ```
//!
//! Binary mode uses the three tags `O`, `B-VAR`, `I-VAR`. The order is part of
//! the model file and is checked when a model is loaded.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten categories of dynamic variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableCategory {
    /// OID: identification of an object (session id, attempt id, ...).
    ObjectId,
    /// LOI: paths, URIs, IP addresses.
    LocationIndicator,
    /// OBN: domain, task, job or host names.
    ObjectName,
    /// TID: type of an object or action.
    TypeIndicator,
    /// SID: state of a switch variable.
    SwitchIndicator,
    /// TDA: time or duration of an action.
    TimeOrDuration,
    /// CRS: computing resources in use or left.
    ComputingResources,
    /// OBA: amount of an object.
    ObjectAmount,
    /// STC: status code of an object or action.
    StatusCode,
    /// OTP: anything that fits none of the above.
    OtherParameters,
}

impl VariableCategory {
    pub const ALL: [VariableCategory; 10] = [
        VariableCategory::ObjectId,
        VariableCategory::LocationIndicator,
        VariableCategory::ObjectName,
        VariableCategory::TypeIndicator,
        VariableCategory::SwitchIndicator,
        VariableCategory::TimeOrDuration,
        VariableCategory::ComputingResources,
        VariableCategory::ObjectAmount,
        VariableCategory::StatusCode,
        VariableCategory::OtherParameters,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            VariableCategory::ObjectId => "OID",
            VariableCategory::LocationIndicator => "LOI",
            VariableCategory::ObjectName => "OBN",
            VariableCategory::TypeIndicator => "TID",
            VariableCategory::SwitchIndicator => "SID",
            VariableCategory::TimeOrDuration => "TDA",
            VariableCategory::ComputingResources => "CRS",
            VariableCategory::ObjectAmount => "OBA",
            VariableCategory::StatusCode => "STC",
            VariableCategory::OtherParameters => "OTP",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariableCategory::ObjectId => "Object ID",
            VariableCategory::LocationIndicator => "Location Indicator",
            VariableCategory::ObjectName => "Object Name",
            VariableCategory::TypeIndicator => "Type Indicator",
            VariableCategory::SwitchIndicator => "Switch Indicator",
            VariableCategory::TimeOrDuration => "Time/Duration of an Action",
            VariableCategory::ComputingResources => "Computing Resources",
            VariableCategory::ObjectAmount => "Object Amount",
            VariableCategory::StatusCode => "Status Code",
            VariableCategory::OtherParameters => "Other Parameters",
        }
    }

    /// Position in [`VariableCategory::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Parses a comma-separated list of abbreviations. Empty input gives an
    /// empty list.
    pub fn parse_list(s: &str) -> Result<Vec<VariableCategory>, UnknownCategory> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for VariableCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variable category `{0}` (valid: OID, LOI, OBN, TID, SID, TDA, CRS, OBA, STC, OTP)")]
pub struct UnknownCategory(pub String);

impl FromStr for VariableCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariableCategory::ALL
            .iter()
            .copied()
            .find(|c| c.abbrev() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// What a `B-`/`I-` tag refers to: one of the real categories, or the single
/// `VAR` pseudo-category used by binary (static vs. variable) models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Category(VariableCategory),
    Var,
}

impl Label {
    pub fn abbrev(self) -> &'static str {
        match self {
            Label::Category(c) => c.abbrev(),
            Label::Var => "VAR",
        }
    }

    pub fn category(self) -> Option<VariableCategory> {
        match self {
            Label::Category(c) => Some(c),
            Label::Var => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for Label {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "VAR" {
            Ok(Label::Var)
        } else {
            s.parse().map(Label::Category)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(Label),
    Inside(Label),
}

impl Tag {
    pub fn label(self) -> Option<Label> {
        match self {
            Tag::Outside => None,
            Tag::Begin(l) | Tag::Inside(l) => Some(l),
        }
    }

    pub fn is_variable(self) -> bool {
        !matches!(self, Tag::Outside)
    }

    /// Replaces the label of a `B-`/`I-` tag with `VAR`.
    pub fn to_binary(self) -> Tag {
        match self {
            Tag::Outside => Tag::Outside,
            Tag::Begin(_) => Tag::Begin(Label::Var),
            Tag::Inside(_) => Tag::Inside(Label::Var),
        }
    }

    pub fn collapse(self) -> BinaryTag {
        if self.is_variable() {
            BinaryTag::Variable
        } else {
            BinaryTag::Static
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid tag `{0}`")]
pub struct InvalidTag(pub String);

impl FromStr for Tag {
    type Err = InvalidTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let bad = || InvalidTag(s.to_string());
        let (prefix, label) = s.split_once('-').ok_or_else(bad)?;
        let label: Label = label.parse().map_err(|_| bad())?;
        match prefix {
            "B" => Ok(Tag::Begin(label)),
            "I" => Ok(Tag::Inside(label)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryTag {
    Static,
    Variable,
}

/// Multiclass (21 tags over the ten categories) or binary (`O`, `B-VAR`, `I-VAR`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    Multiclass,
    Binary,
}

impl TagMode {
    pub fn tags(self) -> Vec<Tag> {
        match self {
            TagMode::Multiclass => tag_vocabulary(),
            TagMode::Binary => binary_tag_vocabulary(),
        }
    }

    /// Whether `tag` belongs to this mode's alphabet.
    pub fn admits(self, tag: Tag) -> bool {
        matches!(
            (self, tag.label()),
            (_, None)
                | (TagMode::Multiclass, Some(Label::Category(_)))
                | (TagMode::Binary, Some(Label::Var))
        )
    }
}

impl fmt::Display for TagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagMode::Multiclass => "multiclass",
            TagMode::Binary => "binary",
        })
    }
}

impl FromStr for TagMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multiclass" => Ok(TagMode::Multiclass),
            "binary" => Ok(TagMode::Binary),
            _ => Err(format!("unknown mode `{s}` (expected multiclass or binary)")),
        }
    }
}

/// The 21 multiclass tags in model order.
pub fn tag_vocabulary() -> Vec<Tag> {
    let mut tags = Vec::with_capacity(1 + 2 * VariableCategory::ALL.len());
    tags.push(Tag::Outside);
    for c in VariableCategory::ALL {
        tags.push(Tag::Begin(Label::Category(c)));
        tags.push(Tag::Inside(Label::Category(c)));
    }
    tags
}

pub fn binary_tag_vocabulary() -> Vec<Tag> {
    vec![
        Tag::Outside,
        Tag::Begin(Label::Var),
        Tag::Inside(Label::Var),
    ]
}

/// IOB transition rule. `None` stands for the sequence start (as `prev`) or
/// the sequence end (as `next`).
///
/// Only an `I-X` tag can be invalid, and only when it does not follow `B-X` or `I-X`.
pub fn is_valid_transition(prev: Option<Tag>, next: Option<Tag>) -> bool {
    match next {
        Some(Tag::Inside(label)) => matches!(
            prev,
            Some(Tag::Begin(p)) | Some(Tag::Inside(p)) if p == label
        ),
        _ => true,
    }
}

/// Index of the first tag that breaks the IOB rule, if any.
pub fn first_invalid_transition(tags: &[Tag]) -> Option<usize> {
    let mut prev = None;
    for (i, &t) in tags.iter().enumerate() {
        if !is_valid_transition(prev, Some(t)) {
            return Some(i);
        }
        prev = Some(t);
    }
    None
}

pub fn is_well_formed(tags: &[Tag]) -> bool {
    first_invalid_transition(tags).is_none()
}

pub fn collapse_binary(tags: &[Tag]) -> Vec<BinaryTag> {
    tags.iter().map(|t| t.collapse()).collect()
}

/// An ordered tag alphabet with index lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    mode: TagMode,
    tags: Vec<Tag>,
    index: HashMap<Tag, usize>,
}

impl TagSet {
    pub fn new(mode: TagMode) -> Self {
        let tags = mode.tags();
        let index = tags.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        TagSet { mode, tags, index }
    }

    pub fn mode(&self) -> TagMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag(&self, index: usize) -> Tag {
        self.tags[index]
    }

    pub fn index_of(&self, tag: Tag) -> Option<usize> {
        self.index.get(&tag).copied()
    }

    /// `mask[i * n + j]` is true when the transition `tags[i] -> tags[j]` is forbidden.
    pub fn forbidden_transitions(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.len() * self.len());
        for &a in &self.tags {
            for &b in &self.tags {
                mask.push(!is_valid_transition(Some(a), Some(b)));
            }
        }
        mask
    }

    pub fn forbidden_starts(&self) -> Vec<bool> {
        self.tags
            .iter()
            .map(|&t| !is_valid_transition(None, Some(t)))
            .collect()
    }

    pub fn forbidden_ends(&self) -> Vec<bool> {
        self.tags
            .iter()
            .map(|&t| !is_valid_transition(Some(t), None))
            .collect()
    }
}
