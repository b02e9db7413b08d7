//! Domain types shared by every other module.
//!
//! Everything here is immutable once built and carries no I/O.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on content tokens per instance (one slot of the encoder budget
/// is reserved for the separator).
pub const DEFAULT_MAX_SEQ_LEN: usize = 49;

/// Maximum number of tokens in a relation description.
pub const MAX_DESCRIPTION_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Half-open token interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    /// Inclusive index of the last token.
    pub fn last(&self) -> usize {
        self.end - 1
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: Span,
    pub tail: Span,
    pub relation: RelationId,
}

impl Triple {
    pub fn new(head: Span, relation: RelationId, tail: Span) -> Self {
        Triple { head, tail, relation }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub tokens: Vec<String>,
    pub triples: Vec<Triple>,
}

impl Instance {
    pub fn new(id: u64, tokens: Vec<String>, mut triples: Vec<Triple>) -> Self {
        triples.sort();
        triples.dedup();
        Instance { id, tokens, triples }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_relation(&self, relation: RelationId) -> bool {
        self.triples.iter().any(|t| t.relation == relation)
    }

    pub fn triples_of(&self, relation: RelationId) -> impl Iterator<Item = &Triple> {
        self.triples.iter().filter(move |t| t.relation == relation)
    }
}

/// A single invariant violation reported by [`validate_instance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyTokens,
    LengthExceedsMax { len: usize, max: usize },
    EmptySpan { triple: usize, span: Span },
    SpanEndBeyondLength { triple: usize, span: Span, len: usize },
    UnknownRelation { triple: usize, relation: RelationId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTokens => write!(f, "token list is empty"),
            Violation::LengthExceedsMax { len, max } => {
                write!(f, "length exceeds max ({len} > {max})")
            }
            Violation::EmptySpan { triple, span } => {
                write!(f, "triple {triple}: empty span {span}")
            }
            Violation::SpanEndBeyondLength { triple, span, len } => {
                write!(f, "triple {triple}: span end > m ({span} with m={len})")
            }
            Violation::UnknownRelation { triple, relation } => {
                write!(f, "triple {triple}: relation {relation} not in catalog")
            }
        }
    }
}

/// Checks every instance invariant and returns all violations found. An
/// empty list means the instance is valid. Passing `None` for the catalog
/// skips the relation check.
pub fn validate_instance(
    inst: &Instance,
    max_len: usize,
    catalog: Option<&RelationCatalog>,
) -> Vec<Violation> {
    let m = inst.tokens.len();
    let mut out = Vec::new();
    if m == 0 {
        out.push(Violation::EmptyTokens);
    }
    if m > max_len {
        out.push(Violation::LengthExceedsMax { len: m, max: max_len });
    }
    for (k, t) in inst.triples.iter().enumerate() {
        for span in [t.head, t.tail] {
            if span.is_empty() {
                out.push(Violation::EmptySpan { triple: k, span });
            } else if span.end > m {
                out.push(Violation::SpanEndBeyondLength { triple: k, span, len: m });
            }
        }
        if let Some(cat) = catalog {
            if cat.get(t.relation).is_none() {
                out.push(Violation::UnknownRelation { triple: k, relation: t.relation });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub id: RelationId,
    pub name: String,
    pub description: Vec<String>,
}

/// Ordered set of relation categories. Ids are dense indices into the catalog.
#[derive(Clone, Debug, Default)]
pub struct RelationCatalog {
    entries: Vec<RelationEntry>,
    by_name: HashMap<String, RelationId>,
}

impl RelationCatalog {
    /// Builds a catalog from hierarchical names; descriptions are derived with
    /// [`crate::ingest::relation_description`].
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut cat = RelationCatalog::default();
        for name in names {
            cat.push(name.as_ref())?;
        }
        Ok(cat)
    }

    pub fn push(&mut self, name: &str) -> Result<RelationId> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateRelation(name.to_string()));
        }
        let description = crate::ingest::relation_description(name)?;
        let id = RelationId(self.entries.len() as u32);
        self.entries.push(RelationEntry { id, name: name.to_string(), description });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Returns the id for `name`, inserting it if it is new.
    pub fn intern(&mut self, name: &str) -> Result<RelationId> {
        match self.by_name.get(name) {
            Some(id) => Ok(*id),
            None => self.push(name),
        }
    }

    pub fn id(&self, name: &str) -> Result<RelationId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn get(&self, id: RelationId) -> Option<&RelationEntry> {
        self.entries.get(id.index())
    }

    pub fn entry(&self, id: RelationId) -> Result<&RelationEntry> {
        self.get(id).ok_or(Error::RelationNotInCatalog(id.0))
    }

    pub fn name(&self, id: RelationId) -> Option<&str> {
        self.get(id).map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationEntry> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.entries.iter().map(|e| e.id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeId {
    TpLinker,
    Bitt,
}

impl SchemeId {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::TpLinker => "tplinker",
            SchemeId::Bitt => "bitt",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tplinker" => Ok(SchemeId::TpLinker),
            "bitt" => Ok(SchemeId::Bitt),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Chunk structure of a label sequence: `chunks` equal-length chunks, each
/// with its own alphabet size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkLayout {
    pub scheme: SchemeId,
    /// Number of tokens the layout was built for.
    pub m: usize,
    pub chunk_len: usize,
    pub alphabet: Vec<usize>,
}

impl ChunkLayout {
    pub fn chunks(&self) -> usize {
        self.alphabet.len()
    }

    /// Total sequence length `n = chunks * chunk_len`.
    pub fn len(&self) -> usize {
        self.chunks() * self.chunk_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position_to_chunk(&self, p: usize) -> Result<(usize, usize)> {
        if p >= self.len() {
            return Err(Error::PositionOutOfRange { position: p, len: self.len() });
        }
        Ok((p / self.chunk_len, p % self.chunk_len))
    }

    pub fn chunk_to_position(&self, chunk: usize, i: usize) -> Result<usize> {
        if chunk >= self.chunks() || i >= self.chunk_len {
            return Err(Error::PositionOutOfRange {
                position: chunk * self.chunk_len + i,
                len: self.len(),
            });
        }
        Ok(chunk * self.chunk_len + i)
    }
}

impl fmt::Display for ChunkLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}(m={}, chunks={}, chunk_len={})",
            self.scheme,
            self.m,
            self.chunks(),
            self.chunk_len
        )
    }
}

/// Chunk-major label assignment for one (instance, relation) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSeq {
    pub layout: ChunkLayout,
    pub labels: Vec<u8>,
}

impl LabelSeq {
    pub fn zeros(layout: ChunkLayout) -> Self {
        let n = layout.len();
        LabelSeq { layout, labels: vec![0; n] }
    }

    pub fn chunk(&self, c: usize) -> &[u8] {
        let len = self.layout.chunk_len;
        &self.labels[c * len..(c + 1) * len]
    }

    pub fn chunk_mut(&mut self, c: usize) -> &mut [u8] {
        let len = self.layout.chunk_len;
        &mut self.labels[c * len..(c + 1) * len]
    }

    /// True when every label lies inside its chunk's alphabet.
    pub fn respects_alphabet(&self) -> bool {
        (0..self.layout.chunks())
            .all(|c| self.chunk(c).iter().all(|&l| (l as usize) < self.layout.alphabet[c]))
    }
}

/// A support instance with one label sequence per episode category.
#[derive(Clone, Debug)]
pub struct SupportItem {
    pub instance: Instance,
    pub labels: Vec<LabelSeq>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub categories: Vec<RelationId>,
    pub support: Vec<SupportItem>,
    pub query: Instance,
    /// Query triples restricted to the episode categories.
    pub query_gold: Vec<Triple>,
}

impl Episode {
    /// Number of support instances holding at least one triple of each category.
    pub fn category_counts(&self) -> Vec<usize> {
        self.categories
            .iter()
            .map(|&r| self.support.iter().filter(|s| s.instance.has_relation(r)).count())
            .collect()
    }
}
