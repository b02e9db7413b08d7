//! Nearest-neighbour labelling of the query and triple extraction.

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::encoding::{EmbeddingProvider, HeadParams, HiddenStates};
use crate::error::{Error, Result};
use crate::metricspace::{sqdist_with, PairRoute, SupportBlocks};
use crate::par::Exec;
use crate::tagging::{scheme_for, Scheme};
use crate::types::{Episode, LabelSeq, SchemeId, Triple};

/// Label of the nearest support position for every query position; ties go
/// to the lowest support index. `d` is `query positions × support positions`.
pub fn infer_labels(d: ArrayView2<f64>, support_labels: &[u8]) -> Result<Vec<u8>> {
    if d.ncols() != support_labels.len() {
        return Err(Error::Dimension(format!("{} support labels for {} columns", support_labels.len(), d.ncols())));
    }
    if d.ncols() == 0 {
        return Ok(vec![0; d.nrows()]);
    }
    Ok(d.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = k;
                }
            }
            support_labels[best]
        })
        .collect())
}

fn argmin(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for (k, v) in values.enumerate() {
        if v < best.0 || best.1 == usize::MAX {
            best = (v, k);
        }
    }
    best
}

/// Nearest support token pair of every query pair `(i, j)` under
/// `D_h[i, a] + D_t[j, b]` with `a`, `b` in one support instance. The
/// minimum splits into independent head and tail minima per instance, so the
/// search costs `m·|S|·m_s` instead of `m²·Σ m_s²`. Ties go to the lowest
/// `(instance, row, col)`.
pub fn nearest_pairs(dh: ArrayView2<f64>, dt: ArrayView2<f64>, blocks: &SupportBlocks) -> Vec<PairRoute> {
    let per_block = |d: ArrayView2<f64>| -> Vec<Vec<(f64, usize)>> {
        d.rows()
            .into_iter()
            .map(|row| {
                (0..blocks.instances())
                    .map(|s| {
                        let r = blocks.range(s);
                        let (v, k) = argmin(r.clone().map(|c| row[c]));
                        (v, r.start + k)
                    })
                    .collect()
            })
            .collect()
    };
    let a = per_block(dh);
    let b = per_block(dt);
    let mut out = Vec::with_capacity(dh.nrows() * dt.nrows());
    for ai in &a {
        for bj in &b {
            let (_, s) = argmin(ai.iter().zip(bj).map(|(x, y)| x.0 + y.0));
            out.push(PairRoute { row: ai[s].1, col: bj[s].1 });
        }
    }
    out
}

/// Hidden states of the support instances stacked row-wise, per head.
fn stack(states: &[HiddenStates], head: usize) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = states.iter().map(|h| h.states[head].view()).collect();
    concatenate(Axis(0), &views).expect("equal hidden sizes")
}

/// Predicted label sequence of the query for one category.
pub fn predict_labels(
    scheme: &dyn Scheme,
    query: &HiddenStates,
    support: &[HiddenStates],
    support_labels: &[&LabelSeq],
    exec: Exec,
) -> Result<LabelSeq> {
    let m = query.m();
    let lens: Vec<usize> = support.iter().map(HiddenStates::m).collect();
    let blocks = SupportBlocks::new(&lens);
    let mut out = LabelSeq::zeros(scheme.layout_for(m));
    if support.is_empty() {
        return Ok(out);
    }
    match scheme.id() {
        SchemeId::TpLinker => {
            let dh = sqdist_with(exec, query.head().view(), stack(support, 0).view())?;
            let dt = sqdist_with(exec, query.tail().view(), stack(support, 1).view())?;
            let routes = nearest_pairs(dh.view(), dt.view(), &blocks);
            for c in 0..out.layout.chunks() {
                let chunk = out.chunk_mut(c);
                for (cell, r) in routes.iter().enumerate() {
                    let s = blocks.instance_of(r.row);
                    let ms = blocks.len_of(s);
                    let (a, b) = (r.row - blocks.offset(s), r.col - blocks.offset(s));
                    chunk[cell] = support_labels[s].chunk(c)[a * ms + b];
                }
            }
        }
        SchemeId::Bitt => {
            for c in 0..out.layout.chunks() {
                let d = sqdist_with(exec, query.chunk(c).view(), stack(support, c).view())?;
                let labels: Vec<u8> = support_labels.iter().flat_map(|l| l.chunk(c).iter().copied()).collect();
                let pred = infer_labels(d.view(), &labels)?;
                out.chunk_mut(c).copy_from_slice(&pred);
            }
        }
    }
    Ok(out)
}

/// Triples predicted for the query of `ep`: every category is labelled by
/// nearest neighbour, decoded, and the results are united.
pub fn predict_triples(
    ep: &Episode,
    heads: &HeadParams,
    provider: &dyn EmbeddingProvider,
    exec: Exec,
) -> Result<Vec<Triple>> {
    let scheme = scheme_for(heads.scheme);
    let mut out = Vec::new();
    for (ci, &c) in ep.categories.iter().enumerate() {
        let q = heads.apply(provider.embed(&ep.query, c)?.values.view())?;
        let support = ep
            .support
            .iter()
            .map(|s| heads.apply(provider.embed(&s.instance, c)?.values.view()))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<&LabelSeq> = ep.support.iter().map(|s| &s.labels[ci]).collect();
        let pred = predict_labels(scheme, &q, &support, &labels, exec)?;
        out.extend(scheme.decode(&pred, c, ep.query.len())?);
    }
    out.sort();
    out.dedup();
    Ok(out)
}
