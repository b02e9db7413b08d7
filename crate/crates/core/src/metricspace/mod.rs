//! Distance computation: exact squared-Euclidean kernels, the decomposed
//! pair distance of the handshaking scheme with its accelerated fills,
//! per-label chunk distances and prototypes.

mod accel;
mod exact;
mod kernels;
mod labels;

pub use accel::{
    fill_negative, fill_negative_cell, fill_positive, top_e_candidates, Candidate, NegativeDistances, NegativeFill,
    PairFill, PairRoute, TopE, DEFAULT_TOP_E,
};
pub use exact::{exact_pair_fill, ExactFill};
pub use kernels::{pair_distance, sqdist, sqdist_with, SupportBlocks};
pub use labels::{chunk_label_distances, prototype_update, LabelDistances, LabelRoute, PrototypeBank, DEFAULT_GAMMA};

/// Closed-form pair-sum count of the exhaustive path.
pub fn exact_pair_sums(m_query: usize, blocks: &SupportBlocks) -> u64 {
    (m_query * m_query * blocks.pair_count()) as u64
}

/// Closed-form pair-sum count of the accelerated path:
/// `m² · (|W_S| + Σ_s min(E, m_s)²)`.
pub fn accel_pair_sums(m_query: usize, blocks: &SupportBlocks, positives: usize, e: usize) -> u64 {
    let per_cell: usize = (0..blocks.instances()).map(|s| e.min(blocks.len_of(s)).pow(2)).sum();
    (m_query * m_query * (positives + per_cell)) as u64
}
