//! Bidirectional tree tagging with eight per-token chunks.
//!
//! Entities are ordered by `(start, end)`. A triple is *forward* when its head
//! precedes its tail, *backward* when it follows, and a *self* link when both
//! spans coincide. For each direction the tags record which entities act as
//! heads and, for every tail, the rank of its head among the same-direction
//! heads between them (1 = nearest). Role and link tags are written on every
//! token of an entity; decoding only trusts them when all tokens agree.
//!
//! | chunk | alphabet | meaning                                   |
//! |-------|----------|-------------------------------------------|
//! | 0     | 5        | BIESO entity boundaries                   |
//! | 1     | 4        | forward role (bit 0 head, bit 1 tail)     |
//! | 2     | 5        | forward link rank of the nearest head     |
//! | 3     | 4        | backward role                             |
//! | 4     | 5        | backward link rank of the nearest head    |
//! | 5     | 5        | forward link rank of the second head      |
//! | 6     | 5        | backward link rank of the second head     |
//! | 7     | 2        | self link                                 |
//!
//! The scheme is exact when entities do not overlap, no tail has more than
//! two heads per direction, and every rank is at most [`MAX_RANK`].

use std::collections::{BTreeMap, BTreeSet};

use super::{check_layout, Scheme};
use crate::error::Result;
use crate::types::{ChunkLayout, LabelSeq, RelationId, SchemeId, Span, Triple};

pub const BIESO_O: u8 = 0;
pub const BIESO_B: u8 = 1;
pub const BIESO_I: u8 = 2;
pub const BIESO_E: u8 = 3;
pub const BIESO_S: u8 = 4;

pub const MAX_RANK: usize = 4;

const ENTITY: usize = 0;
const FWD_ROLE: usize = 1;
const FWD_LINK: usize = 2;
const BWD_ROLE: usize = 3;
const BWD_LINK: usize = 4;
const FWD_LINK2: usize = 5;
const BWD_LINK2: usize = 6;
const SELF_LINK: usize = 7;

const ROLE_HEAD: u8 = 1;
const ROLE_TAIL: u8 = 2;

#[derive(Clone, Copy, Debug, Default)]
pub struct Bitt;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn chunks(self) -> (usize, usize, usize) {
        match self {
            Direction::Forward => (FWD_ROLE, FWD_LINK, FWD_LINK2),
            Direction::Backward => (BWD_ROLE, BWD_LINK, BWD_LINK2),
        }
    }
}

fn key(s: &Span) -> (usize, usize) {
    (s.start, s.end)
}

/// Heads of `direction` that a tail at `tail` may link to, nearest first.
fn candidates(heads: &[Span], tail: &Span, direction: Direction) -> Vec<Span> {
    match direction {
        Direction::Forward => {
            heads.iter().rev().filter(|h| key(h) < key(tail)).copied().collect()
        }
        Direction::Backward => heads.iter().filter(|h| key(h) > key(tail)).copied().collect(),
    }
}

fn paint(chunk: &mut [u8], span: &Span, value: u8) {
    for l in &mut chunk[span.start..span.end] {
        *l = value;
    }
}

impl Scheme for Bitt {
    fn id(&self) -> SchemeId {
        SchemeId::Bitt
    }

    fn layout_for(&self, m: usize) -> ChunkLayout {
        ChunkLayout { scheme: SchemeId::Bitt, m, chunk_len: m, alphabet: vec![5, 4, 5, 4, 5, 5, 5, 2] }
    }

    fn encode(&self, m: usize, triples: &[Triple], relation: RelationId) -> LabelSeq {
        let mut y = LabelSeq::zeros(self.layout_for(m));
        let rel: Vec<&Triple> = triples.iter().filter(|t| t.relation == relation).collect();

        let entities: BTreeSet<Span> = rel.iter().flat_map(|t| [t.head, t.tail]).collect();
        for e in &entities {
            let chunk = y.chunk_mut(ENTITY);
            if e.len() == 1 {
                chunk[e.start] = BIESO_S;
            } else {
                chunk[e.start] = BIESO_B;
                for l in &mut chunk[e.start + 1..e.last()] {
                    *l = BIESO_I;
                }
                chunk[e.last()] = BIESO_E;
            }
        }

        for t in rel.iter().filter(|t| t.head == t.tail) {
            paint(y.chunk_mut(SELF_LINK), &t.head, 1);
        }

        for direction in [Direction::Forward, Direction::Backward] {
            let (role_chunk, link_chunk, link2_chunk) = direction.chunks();
            let edges: Vec<&Triple> = rel
                .iter()
                .filter(|t| match direction {
                    Direction::Forward => key(&t.head) < key(&t.tail),
                    Direction::Backward => key(&t.head) > key(&t.tail),
                })
                .copied()
                .collect();
            let heads: Vec<Span> =
                edges.iter().map(|t| t.head).collect::<BTreeSet<_>>().into_iter().collect();
            let mut roles: BTreeMap<Span, u8> = BTreeMap::new();
            let mut parents: BTreeMap<Span, Vec<Span>> = BTreeMap::new();
            for t in &edges {
                *roles.entry(t.head).or_default() |= ROLE_HEAD;
                *roles.entry(t.tail).or_default() |= ROLE_TAIL;
                parents.entry(t.tail).or_default().push(t.head);
            }
            for (e, role) in &roles {
                paint(y.chunk_mut(role_chunk), e, *role);
            }
            for (tail, ps) in &parents {
                let cands = candidates(&heads, tail, direction);
                let mut ranks: Vec<usize> = ps
                    .iter()
                    .filter_map(|p| cands.iter().position(|c| c == p).map(|r| r + 1))
                    .collect();
                ranks.sort_unstable();
                ranks.dedup();
                if let Some(&r) = ranks.first() {
                    paint(y.chunk_mut(link_chunk), tail, r.min(MAX_RANK) as u8);
                }
                if let Some(&r) = ranks.get(1) {
                    paint(y.chunk_mut(link2_chunk), tail, r.min(MAX_RANK) as u8);
                }
            }
        }
        y
    }

    fn decode(&self, labels: &LabelSeq, relation: RelationId, m: usize) -> Result<Vec<Triple>> {
        check_layout(labels, &self.layout_for(m))?;
        let entities = parse_bieso(labels.chunk(ENTITY));

        // Tag of an entity in a chunk, or 0 when its tokens disagree.
        let tag = |c: usize, e: &Span| -> u8 {
            let chunk = labels.chunk(c);
            let first = chunk[e.start];
            if chunk[e.start..e.end].iter().all(|&l| l == first) {
                first
            } else {
                0
            }
        };

        let mut out = BTreeSet::new();
        for e in &entities {
            if tag(SELF_LINK, e) == 1 {
                out.insert(Triple::new(*e, relation, *e));
            }
        }
        for direction in [Direction::Forward, Direction::Backward] {
            let (role_chunk, link_chunk, link2_chunk) = direction.chunks();
            let heads: Vec<Span> =
                entities.iter().filter(|e| tag(role_chunk, e) & ROLE_HEAD != 0).copied().collect();
            for tail in entities.iter().filter(|e| tag(role_chunk, e) & ROLE_TAIL != 0) {
                let cands = candidates(&heads, tail, direction);
                for c in [link_chunk, link2_chunk] {
                    let rank = tag(c, tail) as usize;
                    if rank > 0 {
                        if let Some(h) = cands.get(rank - 1) {
                            out.insert(Triple::new(*h, relation, *tail));
                        }
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

/// Entity spans from a BIESO chunk; malformed runs are skipped.
fn parse_bieso(chunk: &[u8]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &l) in chunk.iter().enumerate() {
        match l {
            BIESO_S => {
                out.push(Span::new(i, i + 1));
                open = None;
            }
            BIESO_B => open = Some(i),
            BIESO_I => {}
            BIESO_E => {
                if let Some(s) = open.take() {
                    out.push(Span::new(s, i + 1));
                }
            }
            _ => open = None,
        }
    }
    out
}
