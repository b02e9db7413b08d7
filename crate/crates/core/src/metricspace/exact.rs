//! Exact label distances for pair-level chunks by visiting every support pair.

use ndarray::{Array2, ArrayView2};

use super::accel::{PairFill, PairRoute};
use super::kernels::SupportBlocks;
use crate::error::{Error, Result};
use crate::par::{map_range, Exec};

#[derive(Clone, Debug)]
pub struct ExactFill {
    /// Minimum over support pairs labelled 1.
    pub positive: Option<PairFill>,
    /// Minimum over support pairs labelled 0.
    pub negative: Option<PairFill>,
    pub pair_sums: u64,
}

/// `labels[s]` is the `m_s × m_s` row-major 0/1 chunk of support instance `s`.
pub fn exact_pair_fill(
    dh: ArrayView2<f64>,
    dt: ArrayView2<f64>,
    blocks: &SupportBlocks,
    labels: &[&[u8]],
    exec: Exec,
) -> Result<ExactFill> {
    if labels.len() != blocks.instances() {
        return Err(Error::Dimension(format!("{} label chunks for {} support instances", labels.len(), blocks.instances())));
    }
    for (s, l) in labels.iter().enumerate() {
        if l.len() != blocks.len_of(s).pow(2) {
            return Err(Error::Dimension(format!("support instance {s}: chunk has {} labels", l.len())));
        }
    }
    let (mh, mt) = (dh.nrows(), dt.nrows());
    let none = PairRoute { row: usize::MAX, col: usize::MAX };

    let rows = map_range(exec, mh, |i| {
        let mut out = Vec::with_capacity(mt);
        for j in 0..mt {
            let mut best = [(f64::INFINITY, none); 2];
            for s in 0..blocks.instances() {
                let ms = blocks.len_of(s);
                let off = blocks.offset(s);
                let chunk = labels[s];
                for a in 0..ms {
                    let h = dh[[i, off + a]];
                    for b in 0..ms {
                        let v = h + dt[[j, off + b]];
                        let slot = &mut best[(chunk[a * ms + b] != 0) as usize];
                        if v < slot.0 {
                            *slot = (v, PairRoute { row: off + a, col: off + b });
                        }
                    }
                }
            }
            out.push(best);
        }
        out
    });

    let mut neg_vals = Vec::with_capacity(mh * mt);
    let mut neg_routes = Vec::with_capacity(mh * mt);
    let mut pos_vals = Vec::with_capacity(mh * mt);
    let mut pos_routes = Vec::with_capacity(mh * mt);
    for row in rows {
        for [n, p] in row {
            neg_vals.push(n.0);
            neg_routes.push(n.1);
            pos_vals.push(p.0);
            pos_routes.push(p.1);
        }
    }
    let any = |l: u8| labels.iter().any(|c| c.iter().any(|&x| (x != 0) == (l != 0)));
    let build = |vals: Vec<f64>, routes: Vec<PairRoute>| PairFill {
        values: Array2::from_shape_vec((mh, mt), vals).expect("mh*mt values"),
        routes,
    };
    Ok(ExactFill {
        positive: any(1).then(|| build(pos_vals, pos_routes)),
        negative: any(0).then(|| build(neg_vals, neg_routes)),
        pair_sums: (mh * mt * blocks.pair_count()) as u64,
    })
}
