//! Dataset loading, task splits, triple masking and the embedding cache.

mod cache;
mod split;

pub use cache::{write_cache, CacheWriter, EmbeddingCache, RecordInfo, HEADER_LEN, MAGIC, VERSION};
pub use split::{build_split, nyt24_catalog, SplitMode, TaskSplit, NYT_GROUP_A, NYT_GROUP_B, NYT_GROUP_C};

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_instance, Instance, RelationCatalog, RelationId, Span, Triple, MAX_DESCRIPTION_LEN};

/// Word sequence derived from a hierarchical relation name: split on `/` and
/// `_`, lowercased, empties dropped, capped at [`MAX_DESCRIPTION_LEN`].
pub fn relation_description(name: &str) -> Result<Vec<String>> {
    let words: Vec<String> = name
        .split(['/', '_'])
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .take(MAX_DESCRIPTION_LEN)
        .collect();
    if words.is_empty() {
        return Err(Error::EmptyDescription(name.to_string()));
    }
    Ok(words)
}

/// Copy of `inst` keeping only triples whose relation is in `allowed`.
pub fn mask_triples(inst: &Instance, allowed: &HashSet<RelationId>) -> Instance {
    Instance {
        id: inst.id,
        tokens: inst.tokens.clone(),
        triples: inst.triples.iter().filter(|t| allowed.contains(&t.relation)).copied().collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TripleRecord {
    head: [usize; 2],
    tail: [usize; 2],
    relation: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InstanceRecord {
    id: u64,
    tokens: Vec<String>,
    #[serde(default)]
    triples: Vec<TripleRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvalidPolicy {
    Skip,
    Fatal,
}

/// How relation names in the data are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationPolicy {
    /// Unknown names are an error.
    Strict,
    /// Unknown names are appended to the catalog.
    Grow,
}

#[derive(Debug, Default)]
pub struct ReadReport {
    pub instances: Vec<Instance>,
    /// `(line number, violations)` for skipped instances.
    pub skipped: Vec<(usize, Vec<String>)>,
}

pub fn read_instances(
    path: impl AsRef<Path>,
    catalog: &mut RelationCatalog,
    relations: RelationPolicy,
    max_len: usize,
    invalid: InvalidPolicy,
) -> Result<ReadReport> {
    let file = std::fs::File::open(path)?;
    parse_instances(BufReader::new(file), catalog, relations, max_len, invalid)
}

/// Parses JSONL instances (one object per line; blank lines ignored).
pub fn parse_instances<R: BufRead>(
    reader: R,
    catalog: &mut RelationCatalog,
    relations: RelationPolicy,
    max_len: usize,
    invalid: InvalidPolicy,
) -> Result<ReadReport> {
    let mut report = ReadReport::default();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let mut triples = Vec::with_capacity(rec.triples.len());
        for t in &rec.triples {
            let relation = match relations {
                RelationPolicy::Strict => catalog.id(&t.relation),
                RelationPolicy::Grow => catalog.intern(&t.relation),
            }
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            triples.push(Triple::new(Span::new(t.head[0], t.head[1]), relation, Span::new(t.tail[0], t.tail[1])));
        }
        let inst = Instance::new(rec.id, rec.tokens, triples);
        let violations = validate_instance(&inst, max_len, Some(catalog));
        if violations.is_empty() {
            report.instances.push(inst);
            continue;
        }
        let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
        match invalid {
            InvalidPolicy::Fatal => {
                return Err(Error::Parse { line: line_no, message: format!("invalid instance {}: {}", inst.id, msgs.join("; ")) })
            }
            InvalidPolicy::Skip => {
                log::warn!("line {line_no}: skipping instance {}: {}", inst.id, msgs.join("; "));
                report.skipped.push((line_no, msgs));
            }
        }
    }
    Ok(report)
}

pub fn instance_to_json(inst: &Instance, catalog: &RelationCatalog) -> Result<String> {
    let rec = InstanceRecord {
        id: inst.id,
        tokens: inst.tokens.clone(),
        triples: inst
            .triples
            .iter()
            .map(|t| {
                Ok(TripleRecord {
                    head: [t.head.start, t.head.end],
                    tail: [t.tail.start, t.tail.end],
                    relation: catalog.entry(t.relation)?.name.clone(),
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string(&rec)?)
}

pub fn write_instances<W: Write>(mut out: W, instances: &[Instance], catalog: &RelationCatalog) -> Result<()> {
    for inst in instances {
        writeln!(out, "{}", instance_to_json(inst, catalog)?)?;
    }
    Ok(())
}
