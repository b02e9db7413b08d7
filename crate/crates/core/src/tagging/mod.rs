//! Invertible tagging functions mapping `(instance, triples, relation)` to a
//! chunked label sequence, and their decoders.

mod bitt;
mod tplinker;

pub use bitt::{Bitt, BIESO_B, BIESO_E, BIESO_I, BIESO_O, BIESO_S};
pub use tplinker::TpLinker;

use crate::error::{Error, Result};
use crate::types::{ChunkLayout, Instance, LabelSeq, RelationCatalog, RelationId, SchemeId, Triple};

pub trait Scheme: Send + Sync {
    fn id(&self) -> SchemeId;

    fn layout_for(&self, m: usize) -> ChunkLayout;

    /// Labels the `relation` triples of `triples` for a sentence of `m`
    /// tokens. Triples of other relations are ignored.
    fn encode(&self, m: usize, triples: &[Triple], relation: RelationId) -> LabelSeq;

    /// Recovers the triples encoded in `labels`, tagging them with `relation`.
    fn decode(&self, labels: &LabelSeq, relation: RelationId, m: usize) -> Result<Vec<Triple>>;
}

pub fn scheme_for(id: SchemeId) -> &'static dyn Scheme {
    match id {
        SchemeId::TpLinker => &TpLinker,
        SchemeId::Bitt => &Bitt,
    }
}

/// Encodes `inst` for `relation`, rejecting relations unknown to `catalog`.
pub fn encode_instance(
    scheme: &dyn Scheme,
    catalog: &RelationCatalog,
    inst: &Instance,
    relation: RelationId,
) -> Result<LabelSeq> {
    catalog.entry(relation)?;
    Ok(scheme.encode(inst.len(), &inst.triples, relation))
}

pub(crate) fn check_layout(labels: &LabelSeq, expected: &ChunkLayout) -> Result<()> {
    if &labels.layout != expected || labels.labels.len() != expected.len() {
        return Err(Error::LayoutMismatch {
            expected: expected.to_string(),
            found: labels.layout.to_string(),
        });
    }
    Ok(())
}
