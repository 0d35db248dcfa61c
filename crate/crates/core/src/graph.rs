//! Labeled triplet graphs.
//!
//! A [`RelationalGraph`] is an immutable set of `(subject, relation, object)`
//! triplets. Labels compare by their normalized form, so two triplets that
//! differ only in whitespace or case are the same edge. Every operation
//! returns a new graph.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use regex::RegexBuilder;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::alignment::Alignment;
use crate::error::{Error, Result};

/// Reserved node label standing in for the blank of a question template.
pub const PLACEHOLDER: &str = "#";

/// How the placeholder is written in exported artifacts.
pub const PLACEHOLDER_EXPORT: &str = "⟨MASK⟩";

/// A node or relation label: the text as produced upstream plus its canonical form.
#[derive(Clone)]
pub struct Label {
    raw: String,
    norm: String,
}

/// Trim, collapse internal whitespace and case-fold.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

pub fn normalize_label(raw: &str) -> Result<Label> {
    Label::new(raw)
}

impl Label {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        let norm = normalize_text(&raw);
        if norm.is_empty() {
            return Err(Error::InvalidLabel(raw));
        }
        Ok(Label { raw, norm })
    }

    pub fn placeholder() -> Self {
        Label {
            raw: PLACEHOLDER.to_owned(),
            norm: PLACEHOLDER.to_owned(),
        }
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }

    pub fn is_placeholder(&self) -> bool {
        self.norm == PLACEHOLDER
    }

    /// True when the label contains the placeholder as a whole word.
    pub fn mentions_placeholder(&self) -> bool {
        contains_whole_word(&self.norm, PLACEHOLDER)
    }

    /// Raw text with the placeholder rendered for export.
    pub fn display(&self) -> String {
        if self.is_placeholder() {
            PLACEHOLDER_EXPORT.to_owned()
        } else if self.mentions_placeholder() {
            replace_whole_word(&self.raw, PLACEHOLDER, PLACEHOLDER_EXPORT)
                .unwrap_or_else(|| self.raw.clone())
        } else {
            self.raw.clone()
        }
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.norm == other.norm
    }
}

impl Eq for Label {}

impl Hash for Label {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.norm.hash(state);
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm.cmp(&other.norm)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.raw)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Label::new(raw).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<&str> for Label {
    type Error = Error;

    fn try_from(raw: &str) -> Result<Self> {
        Label::new(raw)
    }
}

/// A directed labeled edge. Ordering and equality use normalized labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: Label,
    pub relation: Label,
    pub object: Label,
}

impl Triplet {
    pub fn new(subject: Label, relation: Label, object: Label) -> Self {
        Triplet {
            subject,
            relation,
            object,
        }
    }

    pub fn parse(subject: &str, relation: &str, object: &str) -> Result<Self> {
        Ok(Triplet::new(
            Label::new(subject)?,
            Label::new(relation)?,
            Label::new(object)?,
        ))
    }

    fn map_nodes(&self, mut f: impl FnMut(&Label) -> Label) -> Triplet {
        Triplet::new(f(&self.subject), self.relation.clone(), f(&self.object))
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.relation, self.object)
    }
}

/// Which rule [`RelationalGraph::substitute_with_outcome`] applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubstitutionOutcome {
    /// Whole node labels matched; the count of distinct nodes replaced.
    Exact(usize),
    /// No node matched exactly; the label occurred as a whole word inside this many nodes.
    Substring(usize),
    NoMatch,
}

impl SubstitutionOutcome {
    pub fn is_no_match(self) -> bool {
        self == SubstitutionOutcome::NoMatch
    }
}

/// An immutable set of triplets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RelationalGraph {
    triplets: BTreeSet<Triplet>,
}

impl RelationalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, triplet: &Triplet) -> bool {
        self.triplets.contains(triplet)
    }

    /// Triplets in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &Triplet> {
        self.triplets.iter()
    }

    pub fn nodes(&self) -> BTreeSet<Label> {
        let mut nodes = BTreeSet::new();
        for t in &self.triplets {
            nodes.insert(t.subject.clone());
            nodes.insert(t.object.clone());
        }
        nodes
    }

    pub fn with(&self, triplet: Triplet) -> Self {
        let mut triplets = self.triplets.clone();
        triplets.insert(triplet);
        RelationalGraph { triplets }
    }

    /// Set union. On normalized collisions the raw labels of `self` are kept.
    pub fn union(&self, other: &RelationalGraph) -> Self {
        let mut triplets = self.triplets.clone();
        for t in &other.triplets {
            if !triplets.contains(t) {
                triplets.insert(t.clone());
            }
        }
        RelationalGraph { triplets }
    }

    pub fn intersect_count(&self, other: &RelationalGraph) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.triplets.iter().filter(|t| large.contains(t)).count()
    }

    /// Relabel nodes through `f`. Relation labels are untouched.
    pub fn map_nodes(&self, mut f: impl FnMut(&Label) -> Label) -> Self {
        self.triplets.iter().map(|t| t.map_nodes(&mut f)).collect()
    }

    pub fn substitute(&self, from: &Label, to: &Label) -> Self {
        self.substitute_with_outcome(from, to).0
    }

    /// Replace node `from` by `to`.
    ///
    /// Whole node labels equal to `from` are replaced first. Only when no node
    /// matches exactly is `from` replaced as a whole word inside longer node labels.
    pub fn substitute_with_outcome(&self, from: &Label, to: &Label) -> (Self, SubstitutionOutcome) {
        let nodes = self.nodes();
        if nodes.contains(from) {
            let g = self.map_nodes(|l| if l == from { to.clone() } else { l.clone() });
            return (g, SubstitutionOutcome::Exact(1));
        }

        let mut hits = 0;
        for node in &nodes {
            if contains_whole_word(node.norm(), from.norm()) {
                hits += 1;
            }
        }
        if hits == 0 {
            return (self.clone(), SubstitutionOutcome::NoMatch);
        }
        let g = self.map_nodes(|l| replace_in_label(l, from, to).unwrap_or_else(|| l.clone()));
        (g, SubstitutionOutcome::Substring(hits))
    }

    /// Replace `token` everywhere it occurs in node labels, as a whole label or as a whole word.
    pub fn replace_token(&self, token: &Label, to: &Label) -> Self {
        self.map_nodes(|l| {
            if l == token {
                to.clone()
            } else {
                replace_in_label(l, token, to).unwrap_or_else(|| l.clone())
            }
        })
    }

    /// Apply a node alignment to every triplet. Distinct triplets may collapse.
    pub fn project(&self, phi: &Alignment) -> Result<Self> {
        let mut triplets = BTreeSet::new();
        for t in &self.triplets {
            let s = phi
                .target(&t.subject)
                .ok_or_else(|| Error::IncompleteAlignment(t.subject.raw().to_owned()))?;
            let o = phi
                .target(&t.object)
                .ok_or_else(|| Error::IncompleteAlignment(t.object.raw().to_owned()))?;
            triplets.insert(Triplet::new(s.clone(), t.relation.clone(), o.clone()));
        }
        Ok(RelationalGraph { triplets })
    }

    /// Byte-stable JSON: triplets as raw strings in canonical order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }
}

pub fn graph_union(g1: &RelationalGraph, g2: &RelationalGraph) -> RelationalGraph {
    g1.union(g2)
}

pub fn intersect_count(g1: &RelationalGraph, g2: &RelationalGraph) -> usize {
    g1.intersect_count(g2)
}

impl FromIterator<Triplet> for RelationalGraph {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        let mut triplets = BTreeSet::new();
        for t in iter {
            if !triplets.contains(&t) {
                triplets.insert(t);
            }
        }
        RelationalGraph { triplets }
    }
}

impl<'a> IntoIterator for &'a RelationalGraph {
    type Item = &'a Triplet;
    type IntoIter = std::collections::btree_set::Iter<'a, Triplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.triplets.iter()
    }
}

impl Serialize for RelationalGraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.triplets.iter())
    }
}

impl<'de> Deserialize<'de> for RelationalGraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let triplets = Vec::<Triplet>::deserialize(deserializer)?;
        Ok(triplets.into_iter().collect())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Byte ranges of whole-word, case-insensitive occurrences of `needle` in `haystack`.
fn whole_word_matches(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    let words: Vec<String> = needle.split_whitespace().map(regex::escape).collect();
    if words.is_empty() {
        return Vec::new();
    }
    let re = RegexBuilder::new(&words.join(r"\s+"))
        .case_insensitive(true)
        .build()
        .expect("escaped pattern is valid");
    re.find_iter(haystack)
        .filter(|m| {
            let before = haystack[..m.start()].chars().next_back();
            let after = haystack[m.end()..].chars().next();
            !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
        })
        .map(|m| (m.start(), m.end()))
        .collect()
}

pub(crate) fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    !whole_word_matches(haystack, needle).is_empty()
}

fn replace_whole_word(haystack: &str, needle: &str, replacement: &str) -> Option<String> {
    let collapsed = haystack.split_whitespace().collect::<Vec<_>>().join(" ");
    let matches = whole_word_matches(&collapsed, needle);
    if matches.is_empty() {
        return None;
    }
    let mut out = String::with_capacity(collapsed.len());
    let mut last = 0;
    for (start, end) in matches {
        out.push_str(&collapsed[last..start]);
        out.push_str(replacement);
        last = end;
    }
    out.push_str(&collapsed[last..]);
    Some(out)
}

fn replace_in_label(label: &Label, from: &Label, to: &Label) -> Option<Label> {
    let replaced = replace_whole_word(label.raw(), from.norm(), to.raw())?;
    Label::new(replaced).ok()
}
