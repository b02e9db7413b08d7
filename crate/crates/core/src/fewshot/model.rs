//! Episode loss and its analytic gradient with respect to the head parameters.
//!
//! Minimum and top-E selections act as fixed routings: the gradient of a
//! label distance flows only into the support positions that produced it.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::loss::chunk_loss_grad;
use crate::encoding::{EmbeddingProvider, HeadParams, HiddenStates};
use crate::error::{Error, Result};
use crate::metricspace::{
    chunk_label_distances, exact_pair_fill, fill_negative, fill_positive, sqdist_with, top_e_candidates,
    LabelRoute, NegativeFill, PairRoute, PrototypeBank, SupportBlocks, DEFAULT_TOP_E,
};
use crate::par::Exec;
use crate::tagging::scheme_for;
use crate::types::{Episode, LabelSeq, SchemeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Every support pair is visited.
    Exact,
    /// Positive pairs plus the top-E candidates.
    #[default]
    Accel,
}

impl std::str::FromStr for DistanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(DistanceMode::Exact),
            "accel" => Ok(DistanceMode::Accel),
            other => Err(Error::Config(format!("unknown distance mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub distance: DistanceMode,
    pub negative: NegativeFill,
    pub top_e: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { distance: DistanceMode::Accel, negative: NegativeFill::Min, top_e: DEFAULT_TOP_E }
    }
}

/// Embeddings and label sequences of one category of an episode.
#[derive(Clone, Debug)]
pub struct CategoryBatch {
    pub query: Array2<f64>,
    pub query_labels: LabelSeq,
    pub support: Vec<Array2<f64>>,
    pub support_labels: Vec<LabelSeq>,
}

/// An episode with every embedding looked up, one batch per category.
#[derive(Clone, Debug)]
pub struct PreparedEpisode {
    pub scheme: SchemeId,
    pub categories: Vec<CategoryBatch>,
}

pub fn prepare_episode(ep: &Episode, scheme: SchemeId, provider: &dyn EmbeddingProvider) -> Result<PreparedEpisode> {
    let tagger = scheme_for(scheme);
    let mut categories = Vec::with_capacity(ep.categories.len());
    for (ci, &c) in ep.categories.iter().enumerate() {
        let support_labels: Vec<LabelSeq> = ep
            .support
            .iter()
            .map(|s| s.labels.get(ci).cloned().ok_or_else(|| Error::Dimension("support item lacks labels".into())))
            .collect::<Result<_>>()?;
        if support_labels.iter().any(|l| l.layout.scheme != scheme) {
            return Err(Error::Dimension(format!("support labels are not {scheme} sequences")));
        }
        categories.push(CategoryBatch {
            query: provider.embed(&ep.query, c)?.values,
            query_labels: tagger.encode(ep.query.len(), &ep.query_gold, c),
            support: ep.support.iter().map(|s| Ok(provider.embed(&s.instance, c)?.values)).collect::<Result<_>>()?,
            support_labels,
        });
    }
    Ok(PreparedEpisode { scheme, categories })
}

/// Gradient of `Σ G[a,b]·‖q_a − s_b‖²` with respect to the rows of `q` and `s`.
fn sqdist_backward(g: ArrayView2<f64>, q: ArrayView2<f64>, sup: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let row = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    let col = g.sum_axis(Axis(0)).insert_axis(Axis(1));
    let dq = (&q * &row - g.dot(&sup)) * 2.0;
    let ds = (&sup * &col - g.t().dot(&q)) * 2.0;
    (dq, ds)
}

fn stack(states: &[HiddenStates], head: usize) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = states.iter().map(|h| h.states[head].view()).collect();
    concatenate(Axis(0), &views).expect("equal hidden sizes")
}

fn check_finite(name: &str, a: &Array2<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// `(loss, d_query_states, d_support_states)` of one category, support
/// states stacked row-wise.
type CategoryGrads = (f64, Vec<Array2<f64>>, Vec<Array2<f64>>);

fn tplinker_category(
    q: &HiddenStates,
    sup: &[HiddenStates],
    batch: &CategoryBatch,
    cfg: &LossConfig,
    exec: Exec,
) -> Result<CategoryGrads> {
    let lens: Vec<usize> = sup.iter().map(HiddenStates::m).collect();
    let blocks = SupportBlocks::new(&lens);
    let (sh, st) = (stack(sup, 0), stack(sup, 1));
    let dh = sqdist_with(exec, q.head().view(), sh.view())?;
    let dt = sqdist_with(exec, q.tail().view(), st.view())?;
    check_finite("head distances", &dh)?;
    check_finite("tail distances", &dt)?;
    let m = q.m();
    let mut g_dh = Array2::<f64>::zeros(dh.dim());
    let mut g_dt = Array2::<f64>::zeros(dt.dim());
    let top = match cfg.distance {
        DistanceMode::Accel => Some(top_e_candidates(dh.view(), dt.view(), &blocks, cfg.top_e, exec)?),
        DistanceMode::Exact => None,
    };
    let chunks = batch.query_labels.layout.chunks();
    let mut loss = 0.0;
    for c in 0..chunks {
        let chunk_labels: Vec<&[u8]> = batch.support_labels.iter().map(|l| l.chunk(c)).collect();
        // Per cell: label distances and the support pairs (with weights) behind them.
        let (neg_vals, neg_routes, pos_vals, pos_routes): (Vec<f64>, Vec<Vec<(PairRoute, f64)>>, Vec<f64>, Vec<Option<PairRoute>>) =
            match &top {
                None => {
                    let fill = exact_pair_fill(dh.view(), dt.view(), &blocks, &chunk_labels, exec)?;
                    let (nv, nr) = match &fill.negative {
                        Some(f) => (f.values.iter().copied().collect(), f.routes.iter().map(|&r| vec![(r, 1.0)]).collect()),
                        None => (vec![f64::INFINITY; m * m], vec![Vec::new(); m * m]),
                    };
                    let (pv, pr) = match &fill.positive {
                        Some(f) => (f.values.iter().copied().collect(), f.routes.iter().map(|&r| Some(r)).collect()),
                        None => (vec![f64::INFINITY; m * m], vec![None; m * m]),
                    };
                    (nv, nr, pv, pr)
                }
                Some(top) => {
                    let mut positives = Vec::new();
                    for (s, l) in chunk_labels.iter().enumerate() {
                        let ms = blocks.len_of(s);
                        let off = blocks.offset(s);
                        for (k, &v) in l.iter().enumerate() {
                            if v != 0 {
                                positives.push(PairRoute { row: off + k / ms, col: off + k % ms });
                            }
                        }
                    }
                    let (pos, _) = fill_positive(dh.view(), dt.view(), &blocks, &positives, exec)?;
                    let neg = fill_negative(top, pos.as_ref(), cfg.negative);
                    let (pv, pr) = match &pos {
                        Some(f) => (f.values.iter().copied().collect(), f.routes.iter().map(|&r| Some(r)).collect()),
                        None => (vec![f64::INFINITY; m * m], vec![None; m * m]),
                    };
                    (neg.values.iter().copied().collect(), neg.picks, pv, pr)
                }
            };
        let (lc, grad) = chunk_loss_grad(&[neg_vals, pos_vals], batch.query_labels.chunk(c))?;
        loss += lc;
        for cell in 0..m * m {
            let (i, j) = (cell / m, cell % m);
            let gn = grad[0][cell];
            if gn != 0.0 {
                for &(r, w) in &neg_routes[cell] {
                    g_dh[[i, r.row]] += gn * w;
                    g_dt[[j, r.col]] += gn * w;
                }
            }
            let gp = grad[1][cell];
            if gp != 0.0 {
                if let Some(r) = pos_routes[cell] {
                    g_dh[[i, r.row]] += gp;
                    g_dt[[j, r.col]] += gp;
                }
            }
        }
    }
    let inv = 1.0 / chunks as f64;
    g_dh *= inv;
    g_dt *= inv;
    let (dqh, dsh) = sqdist_backward(g_dh.view(), q.head().view(), sh.view());
    let (dqt, dst) = sqdist_backward(g_dt.view(), q.tail().view(), st.view());
    Ok((loss * inv, vec![dqh, dqt], vec![dsh, dst]))
}

fn bitt_category(
    q: &HiddenStates,
    sup: &[HiddenStates],
    batch: &CategoryBatch,
    protos: Option<&PrototypeBank>,
    exec: Exec,
) -> Result<CategoryGrads> {
    let layout = &batch.query_labels.layout;
    let chunks = layout.chunks();
    let mut loss = 0.0;
    let mut dq_all = Vec::with_capacity(chunks);
    let mut ds_all = Vec::with_capacity(chunks);
    for c in 0..chunks {
        let n_labels = layout.alphabet[c];
        let qc = q.chunk(c);
        let sc = stack(sup, c);
        let d = sqdist_with(exec, qc.view(), sc.view())?;
        check_finite("chunk distances", &d)?;
        let labels: Vec<u8> = batch.support_labels.iter().flat_map(|l| l.chunk(c).iter().copied()).collect();
        let bank = protos.map(|b| b.chunk(c));
        let ld = chunk_label_distances(d.view(), &labels, n_labels, bank.map(|_| qc.view()), bank)?;
        let (lc, grad) = chunk_loss_grad(&ld.values, batch.query_labels.chunk(c))?;
        loss += lc;
        let mut g = Array2::<f64>::zeros(d.dim());
        let mut dq_proto = Array2::<f64>::zeros(qc.dim());
        for (l, routes) in ld.routes.iter().enumerate() {
            for (p, route) in routes.iter().enumerate() {
                let gv = grad[l][p];
                if gv == 0.0 {
                    continue;
                }
                match route {
                    LabelRoute::Support(col) => g[[p, *col]] += gv,
                    LabelRoute::Prototype => {
                        let proto = &bank.expect("prototype route implies a bank")[l];
                        let diff = &qc.row(p) - proto;
                        let mut row = dq_proto.row_mut(p);
                        row.scaled_add(2.0 * gv, &diff);
                    }
                    LabelRoute::Absent => {}
                }
            }
        }
        let (dq, ds) = sqdist_backward(g.view(), qc.view(), sc.view());
        dq_all.push(dq + dq_proto);
        ds_all.push(ds);
    }
    let inv = 1.0 / chunks as f64;
    for a in dq_all.iter_mut().chain(ds_all.iter_mut()) {
        *a *= inv;
    }
    Ok((loss * inv, dq_all, ds_all))
}

/// Mean loss over the episode categories and its gradient with respect to
/// every head parameter. `protos` supplies distances for labels missing from
/// the support set (BiTT); with `None` such labels are unavailable.
pub fn loss_and_grads(
    prep: &PreparedEpisode,
    heads: &HeadParams,
    protos: Option<&PrototypeBank>,
    cfg: &LossConfig,
    exec: Exec,
) -> Result<(f64, HeadParams)> {
    if heads.scheme != prep.scheme {
        return Err(Error::Dimension(format!("{} heads for a {} episode", heads.scheme, prep.scheme)));
    }
    if prep.categories.is_empty() {
        return Err(Error::Dimension("episode has no categories".into()));
    }
    let mut grads = heads.zeros_like();
    let mut loss = 0.0;
    let inv = 1.0 / prep.categories.len() as f64;
    for batch in &prep.categories {
        if batch.support.is_empty() {
            return Err(Error::Dimension("episode has no support instances".into()));
        }
        let q = heads.apply(batch.query.view())?;
        let sup: Vec<HiddenStates> = batch.support.iter().map(|e| heads.apply(e.view())).collect::<Result<_>>()?;
        let (l, dq, ds) = match prep.scheme {
            SchemeId::TpLinker => tplinker_category(&q, &sup, batch, cfg, exec)?,
            SchemeId::Bitt => bitt_category(&q, &sup, batch, protos, exec)?,
        };
        loss += l * inv;
        let scaled: Vec<Array2<f64>> = dq.into_iter().map(|a| a * inv).collect();
        heads.backward(batch.query.view(), &scaled, &mut grads);
        let mut off = 0;
        for (emb, h) in batch.support.iter().zip(&sup) {
            let m = h.m();
            let part: Vec<Array2<f64>> = ds.iter().map(|a| a.slice(s![off..off + m, ..]).to_owned() * inv).collect();
            heads.backward(emb.view(), &part, &mut grads);
            off += m;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("episode loss".into()));
    }
    Ok((loss, grads))
}

/// Loss only.
pub fn episode_loss(
    prep: &PreparedEpisode,
    heads: &HeadParams,
    protos: Option<&PrototypeBank>,
    cfg: &LossConfig,
    exec: Exec,
) -> Result<f64> {
    Ok(loss_and_grads(prep, heads, protos, cfg, exec)?.0)
}
