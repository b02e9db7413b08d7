//! Handshaking tagging with three m×m link matrices and no upper-triangle
//! folding: every label is 0 or 1.
//!
//! Chunk 0 links an entity's first token to its last token, chunk 1 links
//! subject start to object start, chunk 2 links subject end to object end.
//! Cell `(i, j)` sits at intra-chunk index `i * m + j`.

use std::collections::BTreeSet;

use super::{check_layout, Scheme};
use crate::error::Result;
use crate::types::{ChunkLayout, LabelSeq, RelationId, SchemeId, Span, Triple};

pub const ENTITY_CHUNK: usize = 0;
pub const HEAD_LINK_CHUNK: usize = 1;
pub const TAIL_LINK_CHUNK: usize = 2;

#[derive(Clone, Copy, Debug, Default)]
pub struct TpLinker;

impl TpLinker {
    fn cell(m: usize, i: usize, j: usize) -> usize {
        i * m + j
    }
}

impl Scheme for TpLinker {
    fn id(&self) -> SchemeId {
        SchemeId::TpLinker
    }

    fn layout_for(&self, m: usize) -> ChunkLayout {
        ChunkLayout { scheme: SchemeId::TpLinker, m, chunk_len: m * m, alphabet: vec![2, 2, 2] }
    }

    fn encode(&self, m: usize, triples: &[Triple], relation: RelationId) -> LabelSeq {
        let mut y = LabelSeq::zeros(self.layout_for(m));
        for t in triples.iter().filter(|t| t.relation == relation) {
            for span in [t.head, t.tail] {
                y.chunk_mut(ENTITY_CHUNK)[Self::cell(m, span.start, span.last())] = 1;
            }
            y.chunk_mut(HEAD_LINK_CHUNK)[Self::cell(m, t.head.start, t.tail.start)] = 1;
            y.chunk_mut(TAIL_LINK_CHUNK)[Self::cell(m, t.head.last(), t.tail.last())] = 1;
        }
        y
    }

    fn decode(&self, labels: &LabelSeq, relation: RelationId, m: usize) -> Result<Vec<Triple>> {
        check_layout(labels, &self.layout_for(m))?;
        let ent = labels.chunk(ENTITY_CHUNK);
        let sh = labels.chunk(HEAD_LINK_CHUNK);
        let st = labels.chunk(TAIL_LINK_CHUNK);

        let mut entities = Vec::new();
        for i in 0..m {
            for j in i..m {
                if ent[Self::cell(m, i, j)] == 1 {
                    entities.push(Span::new(i, j + 1));
                }
            }
        }

        let mut out = BTreeSet::new();
        for h in &entities {
            for t in &entities {
                if sh[Self::cell(m, h.start, t.start)] == 1
                    && st[Self::cell(m, h.last(), t.last())] == 1
                {
                    out.insert(Triple::new(*h, relation, *t));
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}
