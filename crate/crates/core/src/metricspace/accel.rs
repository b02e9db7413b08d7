//! Accelerated positive/negative pair distances for the handshaking scheme.
//!
//! The exact label distances need every support pair for every query pair
//! (`m⁴·|S|` pair sums). Here the positive distance iterates only over the
//! positive support cells, and the negative distance is read off the `E`
//! nearest support pairs, found from the `E` nearest head tokens and the `E`
//! nearest tail tokens of each support instance.
//!
//! Pair-sum cost: `m² · (|W_S| + Σ_s min(E, m_s)²)`, i.e. `m²·(|W_S| + |S|·E²)`
//! when every support instance has at least `E` tokens.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::kernels::SupportBlocks;
use crate::error::{Error, Result};
use crate::par::{map_range, Exec};

pub const DEFAULT_TOP_E: usize = 3;

/// A support token pair, as global support columns of the head and tail token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairRoute {
    pub row: usize,
    pub col: usize,
}

/// Per query pair minimum over some set of support pairs, with the support
/// pair that attained it.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFill {
    pub values: Array2<f64>,
    pub routes: Vec<PairRoute>,
}

impl PairFill {
    pub fn route(&self, i: usize, j: usize) -> PairRoute {
        self.routes[i * self.values.ncols() + j]
    }
}

/// Minimum over the positive support pairs. `positives` are global columns
/// `(row, col)` that must lie in one support instance. Returns `None` when
/// there are no positives, plus the number of pair sums evaluated.
pub fn fill_positive(
    dh: ArrayView2<f64>,
    dt: ArrayView2<f64>,
    blocks: &SupportBlocks,
    positives: &[PairRoute],
    exec: Exec,
) -> Result<(Option<PairFill>, u64)> {
    for p in positives {
        if p.row >= blocks.total() || p.col >= blocks.total() {
            return Err(Error::Dimension(format!("positive ({}, {}) out of range", p.row, p.col)));
        }
        if blocks.instance_of(p.row) != blocks.instance_of(p.col) {
            return Err(Error::CrossInstance { row: p.row, col: p.col });
        }
    }
    if positives.is_empty() {
        return Ok((None, 0));
    }
    let mut sorted = positives.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let (m, mt) = (dh.nrows(), dt.nrows());
    let rows = map_range(exec, m, |i| {
        let mut vals = Vec::with_capacity(mt);
        let mut routes = Vec::with_capacity(mt);
        for j in 0..mt {
            let mut best = f64::INFINITY;
            let mut arg = sorted[0];
            for p in &sorted {
                let v = dh[[i, p.row]] + dt[[j, p.col]];
                if v < best {
                    best = v;
                    arg = *p;
                }
            }
            vals.push(best);
            routes.push(arg);
        }
        (vals, routes)
    });
    let count = (m * mt * sorted.len()) as u64;
    let mut values = Vec::with_capacity(m * mt);
    let mut routes = Vec::with_capacity(m * mt);
    for (v, r) in rows {
        values.extend(v);
        routes.extend(r);
    }
    let values = Array2::from_shape_vec((m, mt), values).expect("m*m values");
    Ok((Some(PairFill { values, routes }), count))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub value: f64,
    pub route: PairRoute,
}

/// The `E` smallest pair distances of every query pair, ascending.
#[derive(Clone, Debug)]
pub struct TopE {
    pub e: usize,
    pub m_head: usize,
    pub m_tail: usize,
    pub cells: Vec<Vec<Candidate>>,
    pub pair_sums: u64,
}

impl TopE {
    pub fn cell(&self, i: usize, j: usize) -> &[Candidate] {
        &self.cells[i * self.m_tail + j]
    }

    pub fn values(&self, i: usize, j: usize) -> Vec<f64> {
        self.cell(i, j).iter().map(|c| c.value).collect()
    }
}

fn by_value_then_index(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Per query row and support instance, the `k` nearest support columns.
fn nearest_per_block(d: ArrayView2<f64>, blocks: &SupportBlocks, e: usize, exec: Exec) -> Vec<Vec<Vec<(f64, usize)>>> {
    map_range(exec, d.nrows(), |i| {
        (0..blocks.instances())
            .map(|s| {
                let mut v: Vec<(f64, usize)> = blocks.range(s).map(|c| (d[[i, c]], c)).collect();
                v.sort_unstable_by(by_value_then_index);
                v.truncate(e.min(blocks.len_of(s)));
                v
            })
            .collect()
    })
}

/// Top-`E` candidate pair distances for every query pair.
pub fn top_e_candidates(
    dh: ArrayView2<f64>,
    dt: ArrayView2<f64>,
    blocks: &SupportBlocks,
    e: usize,
    exec: Exec,
) -> Result<TopE> {
    if e < 2 {
        return Err(Error::Config(format!("top-E needs E >= 2, got {e}")));
    }
    if dh.ncols() != blocks.total() || dt.ncols() != blocks.total() {
        return Err(Error::Dimension("distance matrices do not match the support layout".into()));
    }
    if (0..blocks.instances()).any(|s| blocks.len_of(s) < e) {
        log::warn!("top-E: E={e} exceeds the length of a support instance; clamping per instance");
    }
    let a = nearest_per_block(dh, blocks, e, exec);
    let b = nearest_per_block(dt, blocks, e, exec);
    let (mh, mt) = (dh.nrows(), dt.nrows());
    let per_cell: usize = (0..blocks.instances()).map(|s| e.min(blocks.len_of(s)).pow(2)).sum();

    let rows = map_range(exec, mh, |i| {
        (0..mt)
            .map(|j| {
                let mut cands = Vec::with_capacity(per_cell);
                for s in 0..blocks.instances() {
                    for &(va, ra) in &a[i][s] {
                        for &(vb, cb) in &b[j][s] {
                            cands.push(Candidate { value: va + vb, route: PairRoute { row: ra, col: cb } });
                        }
                    }
                }
                cands.sort_unstable_by(|x, y| x.value.total_cmp(&y.value).then(x.route.cmp(&y.route)));
                cands.truncate(e);
                cands
            })
            .collect::<Vec<_>>()
    });
    Ok(TopE {
        e,
        m_head: mh,
        m_tail: mt,
        cells: rows.into_iter().flatten().collect(),
        pair_sums: (mh * mt * per_cell) as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeFill {
    /// Smallest remaining candidate.
    #[default]
    Min,
    /// Mean of the remaining candidates.
    Avg,
}

impl std::str::FromStr for NegativeFill {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(NegativeFill::Min),
            "avg" => Ok(NegativeFill::Avg),
            other => Err(Error::Config(format!("unknown negative fill {other:?}"))),
        }
    }
}

/// Negative distance of one cell from its ascending candidate values.
///
/// The first candidate equal to `positive` is removed; the rest form `W`.
/// Returns the fill value and the indices of the candidates it averages (one
/// index in min mode), or `None` when `W` is empty.
pub fn fill_negative_cell(dhat: &[f64], positive: Option<f64>, mode: NegativeFill) -> Option<(f64, Vec<usize>)> {
    let removed = positive.and_then(|p| dhat.iter().position(|&v| v == p));
    let w: Vec<usize> = (0..dhat.len()).filter(|&k| Some(k) != removed).collect();
    if w.is_empty() {
        return None;
    }
    match mode {
        NegativeFill::Min => {
            let mut best = w[0];
            for &k in &w[1..] {
                if dhat[k] < dhat[best] {
                    best = k;
                }
            }
            Some((dhat[best], vec![best]))
        }
        NegativeFill::Avg => {
            let mean = w.iter().map(|&k| dhat[k]).sum::<f64>() / w.len() as f64;
            Some((mean, w))
        }
    }
}

/// Negative fill for all cells. Cells with an empty `W` get `+∞` and no picks.
#[derive(Clone, Debug)]
pub struct NegativeDistances {
    pub values: Array2<f64>,
    /// Support pairs contributing to each cell and their weights.
    pub picks: Vec<Vec<(PairRoute, f64)>>,
}

pub fn fill_negative(top: &TopE, positive: Option<&PairFill>, mode: NegativeFill) -> NegativeDistances {
    let (mh, mt) = (top.m_head, top.m_tail);
    let mut values = Array2::from_elem((mh, mt), f64::INFINITY);
    let mut picks = Vec::with_capacity(mh * mt);
    for i in 0..mh {
        for j in 0..mt {
            let cell = top.cell(i, j);
            let dhat: Vec<f64> = cell.iter().map(|c| c.value).collect();
            let dp = positive.map(|p| p.values[[i, j]]);
            match fill_negative_cell(&dhat, dp, mode) {
                Some((v, used)) => {
                    values[[i, j]] = v;
                    let w = 1.0 / used.len() as f64;
                    picks.push(used.into_iter().map(|k| (cell[k].route, w)).collect());
                }
                None => picks.push(Vec::new()),
            }
        }
    }
    NegativeDistances { values, picks }
}
