use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.9;

/// Where a per-label distance came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelRoute {
    /// Nearest support position carrying the label.
    Support(usize),
    /// The label has no support position; distance to its prototype.
    Prototype,
    /// The label is unavailable (`+∞`).
    Absent,
}

/// `values[l][p]`: distance from query position `p` to label `l`.
#[derive(Clone, Debug)]
pub struct LabelDistances {
    pub values: Vec<Vec<f64>>,
    pub routes: Vec<Vec<LabelRoute>>,
}

/// Per-label minimum over the support positions of one chunk.
///
/// `d` is `positions × support positions`, `support_labels` holds one label
/// per support column. For labels without support positions the distance to
/// the label's prototype is used when `prototypes` is given (the query
/// states must then be passed too); otherwise the label is absent.
pub fn chunk_label_distances(
    d: ArrayView2<f64>,
    support_labels: &[u8],
    n_labels: usize,
    query_states: Option<ArrayView2<f64>>,
    prototypes: Option<&[Array1<f64>]>,
) -> Result<LabelDistances> {
    if support_labels.len() != d.ncols() {
        return Err(Error::Dimension(format!("{} support labels for {} columns", support_labels.len(), d.ncols())));
    }
    if let Some(&bad) = support_labels.iter().find(|&&l| l as usize >= n_labels) {
        return Err(Error::Dimension(format!("label {bad} outside alphabet of {n_labels}")));
    }
    let p = d.nrows();
    let mut values = vec![vec![f64::INFINITY; p]; n_labels];
    let mut routes = vec![vec![LabelRoute::Absent; p]; n_labels];
    let mut present = vec![false; n_labels];
    for &l in support_labels {
        present[l as usize] = true;
    }
    for pos in 0..p {
        for (col, &l) in support_labels.iter().enumerate() {
            let v = d[[pos, col]];
            let l = l as usize;
            if v < values[l][pos] {
                values[l][pos] = v;
                routes[l][pos] = LabelRoute::Support(col);
            }
        }
    }
    if let Some(protos) = prototypes {
        let q = query_states.ok_or_else(|| Error::Dimension("prototype fallback needs query states".into()))?;
        if protos.len() != n_labels {
            return Err(Error::Dimension(format!("{} prototypes for {n_labels} labels", protos.len())));
        }
        for l in (0..n_labels).filter(|&l| !present[l]) {
            for pos in 0..p {
                values[l][pos] = q.row(pos).iter().zip(protos[l].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                routes[l][pos] = LabelRoute::Prototype;
            }
        }
    }
    Ok(LabelDistances { values, routes })
}

/// Exponential moving averages of the hidden states of each (chunk, label).
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeBank {
    pub gamma: f64,
    pub chunks: Vec<Vec<Array1<f64>>>,
}

impl PrototypeBank {
    /// Zero prototypes for every label of every chunk.
    pub fn new(alphabet: &[usize], hidden: usize, gamma: f64) -> Self {
        PrototypeBank {
            gamma,
            chunks: alphabet.iter().map(|&n| vec![Array1::zeros(hidden); n]).collect(),
        }
    }

    pub fn chunk(&self, c: usize) -> &[Array1<f64>] {
        &self.chunks[c]
    }

    /// `P ← (1-γ)·P + γ·mean(states of label l)`, skipped for labels with no
    /// support position.
    pub fn update(&mut self, chunk: usize, states: ArrayView2<f64>, labels: &[u8]) -> Result<()> {
        if labels.len() != states.nrows() {
            return Err(Error::Dimension(format!("{} labels for {} states", labels.len(), states.nrows())));
        }
        let gamma = self.gamma;
        let protos = &mut self.chunks[chunk];
        for (l, proto) in protos.iter_mut().enumerate() {
            let rows: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] as usize == l).collect();
            if rows.is_empty() {
                continue;
            }
            let mut mean = Array1::<f64>::zeros(states.ncols());
            for &k in &rows {
                mean += &states.row(k);
            }
            mean /= rows.len() as f64;
            *proto = &*proto * (1.0 - gamma) + mean * gamma;
        }
        Ok(())
    }
}

pub fn prototype_update(bank: &mut PrototypeBank, chunk: usize, states: ArrayView2<f64>, labels: &[u8]) -> Result<()> {
    bank.update(chunk, states, labels)
}
