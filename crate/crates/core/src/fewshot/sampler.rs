//! N-way K~2K-shot episode sampling.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::mask_triples;
use crate::tagging::Scheme;
use crate::types::{Episode, Instance, RelationId, SupportItem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n: usize,
    pub k: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { n: 2, k: 1, max_attempts: 10_000, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::Config(format!("sampler needs N >= 1 and K >= 1, got N={} K={}", self.n, self.k)));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// Index of a dataset by relation, reused across episodes.
pub struct EpisodeSampler<'a> {
    data: &'a [Instance],
    scheme: &'a dyn Scheme,
    cfg: SamplerConfig,
    by_relation: BTreeMap<RelationId, Vec<usize>>,
    eligible: Vec<RelationId>,
}

impl<'a> EpisodeSampler<'a> {
    /// Episodes draw their categories from `relations`. A relation is eligible
    /// when more than `K` instances contain it.
    pub fn new(data: &'a [Instance], relations: &[RelationId], scheme: &'a dyn Scheme, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut by_relation: BTreeMap<RelationId, Vec<usize>> = relations.iter().map(|&r| (r, Vec::new())).collect();
        for (idx, inst) in data.iter().enumerate() {
            let mut seen = HashSet::new();
            for t in &inst.triples {
                if seen.insert(t.relation) {
                    if let Some(list) = by_relation.get_mut(&t.relation) {
                        list.push(idx);
                    }
                }
            }
        }
        let eligible: Vec<RelationId> =
            by_relation.iter().filter(|(_, v)| v.len() > cfg.k).map(|(&r, _)| r).collect();
        if eligible.len() < cfg.n {
            return Err(Error::Infeasible(format!(
                "{} relations have more than K={} instances, an episode needs N={}",
                eligible.len(),
                cfg.k,
                cfg.n
            )));
        }
        Ok(EpisodeSampler { data, scheme, cfg, by_relation, eligible })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn eligible(&self) -> &[RelationId] {
        &self.eligible
    }

    /// Draws `N` distinct eligible categories, then an episode over them.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Episode> {
        let mut cats: Vec<RelationId> = self.eligible.choose_multiple(rng, self.cfg.n).copied().collect();
        cats.sort();
        self.sample_for(&cats, rng)
    }

    /// Builds the support set by rejection: a random instance holding at
    /// least one category is accepted unless it pushes some count past `2K`,
    /// until every count reaches `K`. The query is drawn uniformly from the
    /// remaining instances holding a category.
    pub fn sample_for<R: Rng>(&self, categories: &[RelationId], rng: &mut R) -> Result<Episode> {
        let pool = self.pool(categories)?;
        let chosen = self.support_indices(categories, &pool, rng)?;
        let taken: HashSet<usize> = chosen.iter().copied().collect();

        let rest: Vec<usize> = pool.iter().copied().filter(|i| !taken.contains(i)).collect();
        if rest.is_empty() {
            return Err(Error::Infeasible("no instance left for the query".into()));
        }
        let q = rest[rng.gen_range(0..rest.len())];

        let allowed: HashSet<RelationId> = categories.iter().copied().collect();
        let support = chosen
            .iter()
            .map(|&idx| {
                let instance = mask_triples(&self.data[idx], &allowed);
                let labels = categories.iter().map(|&c| self.scheme.encode(instance.len(), &instance.triples, c)).collect();
                SupportItem { instance, labels }
            })
            .collect();
        let query = mask_triples(&self.data[q], &allowed);
        let query_gold = query.triples.clone();
        Ok(Episode { categories: categories.to_vec(), support, query, query_gold })
    }

    /// Dataset indices of the instances holding at least one category.
    fn pool(&self, categories: &[RelationId]) -> Result<Vec<usize>> {
        if categories.is_empty() {
            return Err(Error::Infeasible("episode needs at least one category".into()));
        }
        let mut pool = Vec::new();
        for c in categories {
            let list = self
                .by_relation
                .get(c)
                .ok_or_else(|| Error::Infeasible(format!("relation {c} is not in the sampling pool")))?;
            if list.len() < self.cfg.k {
                return Err(Error::Infeasible(format!("relation {c} has {} instances, K={}", list.len(), self.cfg.k)));
            }
            pool.extend_from_slice(list);
        }
        pool.sort_unstable();
        pool.dedup();
        Ok(pool)
    }

    /// Dataset indices of a support set for `categories`, in acceptance order.
    pub fn sample_support<R: Rng>(&self, categories: &[RelationId], rng: &mut R) -> Result<Vec<usize>> {
        let pool = self.pool(categories)?;
        self.support_indices(categories, &pool, rng)
    }

    fn support_indices<R: Rng>(&self, categories: &[RelationId], pool: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        let (n, k) = (categories.len(), self.cfg.k);
        let contains = |idx: usize| -> Vec<bool> { categories.iter().map(|&c| self.data[idx].has_relation(c)).collect() };
        let mut counts = vec![0usize; n];
        let mut chosen: Vec<usize> = Vec::new();
        let mut taken = HashSet::new();
        let mut attempts = 0;
        while counts.iter().any(|&c| c < k) {
            attempts += 1;
            if attempts > self.cfg.max_attempts {
                return Err(Error::AttemptsExceeded(self.cfg.max_attempts));
            }
            let idx = pool[rng.gen_range(0..pool.len())];
            if taken.contains(&idx) {
                continue;
            }
            let hits = contains(idx);
            if counts.iter().zip(&hits).any(|(&c, &h)| c + h as usize > 2 * k) {
                continue;
            }
            for (c, h) in counts.iter_mut().zip(&hits) {
                *c += *h as usize;
            }
            taken.insert(idx);
            chosen.push(idx);
        }
        Ok(chosen)
    }

    /// Sampler over explicit categories only.
    fn for_categories(data: &'a [Instance], categories: &[RelationId], scheme: &'a dyn Scheme, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut by_relation: BTreeMap<RelationId, Vec<usize>> = categories.iter().map(|&c| (c, Vec::new())).collect();
        for (idx, inst) in data.iter().enumerate() {
            for (c, list) in by_relation.iter_mut() {
                if inst.has_relation(*c) {
                    list.push(idx);
                }
            }
        }
        Ok(EpisodeSampler { data, scheme, cfg, by_relation, eligible: categories.to_vec() })
    }
}

/// One episode over explicit `categories`.
pub fn sample_episode<R: Rng>(
    data: &[Instance],
    categories: &[RelationId],
    scheme: &dyn Scheme,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Episode> {
    EpisodeSampler::for_categories(data, categories, scheme, *cfg)?.sample_for(categories, rng)
}

/// Support set alone, as dataset indices.
pub fn sample_support<R: Rng>(
    data: &[Instance],
    categories: &[RelationId],
    scheme: &dyn Scheme,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    EpisodeSampler::for_categories(data, categories, scheme, *cfg)?.sample_support(categories, rng)
}

/// Checks the count and disjointness guarantees of an episode.
pub fn check_episode(ep: &Episode, k: usize) -> Result<()> {
    for (c, count) in ep.categories.iter().zip(ep.category_counts()) {
        if count < k || count > 2 * k {
            return Err(Error::Infeasible(format!("relation {c} appears in {count} support instances, K={k}")));
        }
    }
    if ep.support.iter().any(|s| s.instance.id == ep.query.id) {
        return Err(Error::Infeasible(format!("query {} is also in the support set", ep.query.id)));
    }
    Ok(())
}
