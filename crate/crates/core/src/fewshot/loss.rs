//! Softmin cross-entropy over per-label distances of one chunk.
//!
//! `L_c = -(1/(len·N_c)) Σ_p log softmax(-D[·, p])[gold_p]` and the episode
//! loss is the mean of `L_c` over chunks. A `+∞` distance marks a label with
//! no candidate; it drops out of the softmax. Positions whose gold label is
//! unavailable contribute nothing.

use crate::error::{Error, Result};

/// `-log softmax(-d)[gold]` and its gradient `δ_{l,gold} - p_l`, or `None`
/// when the gold label is unavailable.
pub fn softmin_term(d: &[f64], gold: usize) -> Result<Option<(f64, Vec<f64>)>> {
    if let Some(bad) = d.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
        return Err(Error::NonFinite(format!("label distance {bad}")));
    }
    if gold >= d.len() {
        return Err(Error::Dimension(format!("gold label {gold} outside alphabet of {}", d.len())));
    }
    if d[gold].is_infinite() {
        return Ok(None);
    }
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = d.iter().map(|&v| (lo - v).exp()).sum();
    let loss = d[gold] - lo + z.ln();
    let grad = d
        .iter()
        .enumerate()
        .map(|(l, &v)| (l == gold) as u8 as f64 - (lo - v).exp() / z)
        .collect();
    Ok(Some((loss, grad)))
}

fn check(distances: &[Vec<f64>], gold: &[u8]) -> Result<()> {
    if distances.is_empty() {
        return Err(Error::Dimension("chunk has no labels".into()));
    }
    if let Some(row) = distances.iter().find(|r| r.len() != gold.len()) {
        return Err(Error::Dimension(format!("{} distances for {} positions", row.len(), gold.len())));
    }
    Ok(())
}

/// Loss of one chunk. `distances[l][p]` is the distance of position `p` to
/// label `l`.
pub fn chunk_loss(distances: &[Vec<f64>], gold: &[u8]) -> Result<f64> {
    Ok(chunk_loss_grad(distances, gold)?.0)
}

/// Loss of one chunk and its gradient with respect to every distance.
pub fn chunk_loss_grad(distances: &[Vec<f64>], gold: &[u8]) -> Result<(f64, Vec<Vec<f64>>)> {
    check(distances, gold)?;
    let n_labels = distances.len();
    let coef = 1.0 / (gold.len() * n_labels) as f64;
    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; gold.len()]; n_labels];
    let mut d = vec![0.0; n_labels];
    for (p, &g) in gold.iter().enumerate() {
        for l in 0..n_labels {
            d[l] = distances[l][p];
        }
        if let Some((term, dd)) = softmin_term(&d, g as usize)? {
            loss += term;
            for l in 0..n_labels {
                grad[l][p] = coef * dd[l];
            }
        }
    }
    Ok((coef * loss, grad))
}

/// Mean of the chunk losses.
pub fn sequence_loss(chunks: &[(Vec<Vec<f64>>, Vec<u8>)]) -> Result<f64> {
    if chunks.is_empty() {
        return Err(Error::Dimension("no chunks".into()));
    }
    let mut total = 0.0;
    for (d, g) in chunks {
        total += chunk_loss(d, g)?;
    }
    Ok(total / chunks.len() as f64)
}
