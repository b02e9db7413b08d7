//! Token embeddings and the adaptive heads applied on top of them.

mod hash;
mod heads;

pub use hash::{fnv1a64, hash_embed, mix64};
pub use heads::{
    bitt_heads, head_count, pretrain_logits, pretrain_logits_backward, tplinker_heads, Classifier,
    HeadParams, HiddenStates, Linear, Tensors, DEFAULT_HIDDEN,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::EmbeddingCache;
use crate::types::{Instance, RelationCatalog, RelationId};

pub const DEFAULT_HASH_DIM: usize = 64;
pub const DEFAULT_CACHE_DIM: usize = 768;

/// Relation-conditioned token embeddings of one instance (`m × d`).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub instance_id: u64,
    pub relation: RelationId,
    pub values: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Source of frozen token embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, inst: &Instance, relation: RelationId) -> Result<EmbeddingMatrix>;
}

#[derive(Clone, Debug)]
pub struct HashEncoder {
    pub seed: u64,
    pub dim: usize,
    descriptions: Vec<Vec<String>>,
}

impl HashEncoder {
    pub fn new(catalog: &RelationCatalog, seed: u64, dim: usize) -> Self {
        HashEncoder { seed, dim, descriptions: catalog.iter().map(|e| e.description.clone()).collect() }
    }
}

impl EmbeddingProvider for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inst: &Instance, relation: RelationId) -> Result<EmbeddingMatrix> {
        let desc = self
            .descriptions
            .get(relation.index())
            .ok_or(Error::RelationNotInCatalog(relation.0))?;
        let values = hash_embed(&inst.tokens, desc, self.seed, self.dim)?;
        Ok(EmbeddingMatrix { instance_id: inst.id, relation, values })
    }
}

/// Embeddings read from an FSRE cache written by the exporter.
pub struct CachedEncoder {
    cache: EmbeddingCache,
    dim: usize,
}

impl CachedEncoder {
    pub fn new(cache: EmbeddingCache, expected_dim: usize) -> Result<Self> {
        if cache.dim() != expected_dim {
            return Err(crate::error::CacheError::DimMismatch { expected: expected_dim, found: cache.dim() }.into());
        }
        Ok(CachedEncoder { cache, dim: expected_dim })
    }
}

impl EmbeddingProvider for CachedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inst: &Instance, relation: RelationId) -> Result<EmbeddingMatrix> {
        let e = load_cached_embedding(&self.cache, inst.id, relation, self.dim)?;
        if e.m() != inst.len() {
            return Err(Error::Dimension(format!(
                "cached record for instance {} has {} rows, instance has {} tokens",
                inst.id,
                e.m(),
                inst.len()
            )));
        }
        Ok(e)
    }
}

pub fn load_cached_embedding(
    cache: &EmbeddingCache,
    instance_id: u64,
    relation: RelationId,
    expected_dim: usize,
) -> Result<EmbeddingMatrix> {
    if cache.dim() != expected_dim {
        return Err(crate::error::CacheError::DimMismatch { expected: expected_dim, found: cache.dim() }.into());
    }
    let rows = cache.read(instance_id, relation.0)?;
    let m = rows.len() / cache.dim();
    let values = Array2::from_shape_vec((m, cache.dim()), rows.into_iter().map(f64::from).collect())
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(EmbeddingMatrix { instance_id, relation, values })
}
