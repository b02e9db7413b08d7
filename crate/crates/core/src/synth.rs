//! Deterministic synthetic corpus with template sentences.
//!
//! Every relation owns a two-word trigger and a head and tail entity type. A
//! clause reads `<head marker> H <left> <right> T <tail marker>`, padded with
//! filler words; some sentences join two clauses of different relations.
//! Entities are drawn from shared per-type pools, so a relation is
//! recognisable only from the context around the entity. Held-out relations
//! pair trigger words that the training relations use in other combinations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Instance, RelationCatalog, RelationId, Span, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EntityType {
    Person,
    City,
    Company,
    Country,
}

const TYPE_PREFIX: [(EntityType, &str); 4] =
    [(EntityType::Person, "per"), (EntityType::City, "cty"), (EntityType::Company, "org"), (EntityType::Country, "ctr")];

struct RelationTemplate {
    name: &'static str,
    left: &'static str,
    right: &'static str,
    head: EntityType,
    tail: EntityType,
}

const RELATIONS: [RelationTemplate; 8] = [
    RelationTemplate { name: "/people/person/place_of_birth", left: "born", right: "in", head: EntityType::Person, tail: EntityType::City },
    RelationTemplate { name: "/business/person/company", left: "works", right: "for", head: EntityType::Person, tail: EntityType::Company },
    RelationTemplate { name: "/location/location/contains", left: "holds", right: "at", head: EntityType::Country, tail: EntityType::City },
    RelationTemplate { name: "/business/company/founders", left: "run", right: "by", head: EntityType::Company, tail: EntityType::Person },
    RelationTemplate { name: "/people/person/nationality", left: "born", right: "for", head: EntityType::Person, tail: EntityType::Country },
    RelationTemplate { name: "/location/country/capital", left: "works", right: "at", head: EntityType::Country, tail: EntityType::City },
    RelationTemplate { name: "/people/person/children", left: "holds", right: "by", head: EntityType::Person, tail: EntityType::Person },
    RelationTemplate { name: "/business/company/place_founded", left: "run", right: "in", head: EntityType::Company, tail: EntityType::City },
];

const HEAD_MARKER: &str = "the";
const TAIL_MARKER: &str = "indeed";
const JOINER: &str = "while";
const FILLERS: [&str; 8] = ["reports", "said", "yesterday", "officially", "again", "news", "later", "today"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Sentences generated per relation, counting each clause once.
    pub per_relation: usize,
    /// Tokens per entity pool.
    pub pool_size: usize,
    /// Filler words before and after a sentence, at most.
    pub max_fillers: usize,
    /// Probability that a sentence carries a second clause.
    pub two_clause_rate: f64,
    /// Relations held out as the target domain, taken from the end of the list.
    pub target_relations: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { per_relation: 60, pool_size: 4, max_fillers: 2, two_clause_rate: 0.0, target_relations: 4, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub catalog: RelationCatalog,
    pub instances: Vec<Instance>,
    pub source: Vec<RelationId>,
    pub target: Vec<RelationId>,
}

impl SynthCorpus {
    /// Instances with at least one triple of `relations`.
    pub fn instances_with(&self, relations: &[RelationId]) -> Vec<Instance> {
        self.instances
            .iter()
            .filter(|i| i.triples.iter().any(|t| relations.contains(&t.relation)))
            .cloned()
            .collect()
    }
}

fn entity(kind: EntityType, pool: usize, rng: &mut ChaCha8Rng) -> String {
    let prefix = TYPE_PREFIX.iter().find(|(k, _)| *k == kind).map(|(_, p)| *p).unwrap_or("ent");
    format!("{prefix}{}", rng.gen_range(0..pool))
}

fn fillers(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(0..=cfg.max_fillers);
    (0..n).map(|_| FILLERS.choose(rng).copied().unwrap_or("said").to_string()).collect()
}

/// Appends one clause to `tokens` and returns its triple.
fn clause(r: usize, cfg: &SynthConfig, tokens: &mut Vec<String>, rng: &mut ChaCha8Rng) -> Triple {
    let t = &RELATIONS[r];
    let head = entity(t.head, cfg.pool_size, rng);
    let mut tail = entity(t.tail, cfg.pool_size, rng);
    while tail == head {
        tail = entity(t.tail, cfg.pool_size, rng);
    }
    tokens.push(HEAD_MARKER.into());
    let h = tokens.len();
    tokens.push(head);
    tokens.push(t.left.into());
    tokens.push(t.right.into());
    let tl = tokens.len();
    tokens.push(tail);
    tokens.push(TAIL_MARKER.into());
    Triple::new(Span::new(h, h + 1), RelationId(r as u32), Span::new(tl, tl + 1))
}

pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.pool_size < 2 || cfg.per_relation == 0 {
        return Err(Error::Config("synthetic corpus needs pool_size >= 2 and per_relation > 0".into()));
    }
    if cfg.target_relations == 0 || cfg.target_relations >= RELATIONS.len() {
        return Err(Error::Config(format!("target_relations must be in 1..{}", RELATIONS.len())));
    }
    if !(0.0..=1.0).contains(&cfg.two_clause_rate) {
        return Err(Error::Config("two_clause_rate must lie in [0, 1]".into()));
    }
    let catalog = RelationCatalog::from_names(RELATIONS.iter().map(|t| t.name))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split = RELATIONS.len() - cfg.target_relations;
    let mut instances = Vec::new();
    for r in 0..RELATIONS.len() {
        // Second clauses stay inside the same domain so that source sentences
        // never mention target relations.
        let domain = if r < split { 0..split } else { split..RELATIONS.len() };
        for _ in 0..cfg.per_relation {
            let mut tokens = fillers(cfg, &mut rng);
            let mut triples = vec![clause(r, cfg, &mut tokens, &mut rng)];
            if domain.len() > 1 && rng.gen_bool(cfg.two_clause_rate) {
                let mut other = rng.gen_range(domain.clone());
                while other == r {
                    other = rng.gen_range(domain.clone());
                }
                tokens.push(JOINER.into());
                triples.push(clause(other, cfg, &mut tokens, &mut rng));
                if rng.gen_bool(0.5) {
                    triples.reverse();
                }
            }
            tokens.extend(fillers(cfg, &mut rng));
            instances.push(Instance::new(instances.len() as u64, tokens, triples));
        }
    }
    Ok(SynthCorpus {
        catalog,
        instances,
        source: (0..split as u32).map(RelationId).collect(),
        target: (split as u32..RELATIONS.len() as u32).map(RelationId).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_instance, DEFAULT_MAX_SEQ_LEN};

    #[test]
    fn deterministic_per_seed() {
        let a = synthetic_corpus(&SynthConfig::default()).unwrap();
        let b = synthetic_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(a.instances, b.instances);
        let c = synthetic_corpus(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a.instances, c.instances);
    }

    #[test]
    fn instances_are_valid_and_split_is_disjoint() {
        let c = synthetic_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(c.catalog.len(), 8);
        assert_eq!(c.instances.len(), 8 * 60);
        for inst in &c.instances {
            assert!(validate_instance(inst, DEFAULT_MAX_SEQ_LEN, Some(&c.catalog)).is_empty(), "{inst:?}");
            let src = inst.triples.iter().any(|t| c.source.contains(&t.relation));
            let tgt = inst.triples.iter().any(|t| c.target.contains(&t.relation));
            assert!(src != tgt);
        }
        assert!(c.source.iter().all(|r| !c.target.contains(r)));
    }

    #[test]
    fn trigger_sits_between_head_and_tail() {
        let c = synthetic_corpus(&SynthConfig::default()).unwrap();
        for inst in &c.instances {
            for t in &inst.triples {
                let r = &RELATIONS[t.relation.index()];
                assert_eq!(inst.tokens[t.head.end], r.left);
                assert_eq!(inst.tokens[t.head.end + 1], r.right);
                assert_eq!(t.head.end + 2, t.tail.start);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(synthetic_corpus(&SynthConfig { target_relations: 8, ..Default::default() }).is_err());
        assert!(synthetic_corpus(&SynthConfig { pool_size: 1, ..Default::default() }).is_err());
    }
}
