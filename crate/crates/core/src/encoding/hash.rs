//! Deterministic hashed token embeddings, used when no cached transformer
//! embeddings are available.

use ndarray::Array2;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(s: &str) -> u64 {
    s.bytes().fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a token hash with a coordinate index and a seed.
pub fn mix64(token_hash: u64, k: usize, seed: u64) -> u64 {
    splitmix64(token_hash ^ splitmix64(seed.rotate_left(17) ^ (k as u64).wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// Uniform in `[-1, 1]` from the top 53 bits.
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn token_vector(token: &str, seed: u64, d: usize) -> Vec<f64> {
    let h = fnv1a64(token);
    (0..d).map(|k| to_unit(mix64(h, k, seed))).collect()
}

/// Embeds `tokens` conditioned on `relation_tokens`.
///
/// Row `i` is the L2-normalised sum of the token vector, half the mean
/// relation-token vector and a quarter of each neighbour's vector.
pub fn hash_embed(tokens: &[String], relation_tokens: &[String], seed: u64, d: usize) -> Result<Array2<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    if d < 8 {
        return Err(Error::Dimension(format!("hash embedding dim must be >= 8, got {d}")));
    }
    let m = tokens.len();
    let vecs: Vec<Vec<f64>> = tokens.iter().map(|t| token_vector(t, seed, d)).collect();
    let mut rel = vec![0.0; d];
    if !relation_tokens.is_empty() {
        for t in relation_tokens {
            for (acc, v) in rel.iter_mut().zip(token_vector(t, seed, d)) {
                *acc += v;
            }
        }
        let inv = 1.0 / relation_tokens.len() as f64;
        rel.iter_mut().for_each(|x| *x *= inv);
    }

    let mut out = Array2::zeros((m, d));
    for i in 0..m {
        let mut row = out.row_mut(i);
        for k in 0..d {
            let mut v = vecs[i][k] + 0.5 * rel[k];
            if i > 0 {
                v += 0.25 * vecs[i - 1][k];
            }
            if i + 1 < m {
                v += 0.25 * vecs[i + 1][k];
            }
            row[k] = v;
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        }
    }
    Ok(out)
}
