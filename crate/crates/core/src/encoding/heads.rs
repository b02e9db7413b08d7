//! Adaptive linear heads mapping frozen token embeddings to the metric space,
//! and the linear classifier used only during pretraining.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::SchemeId;

/// `y = x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    /// Weights uniform in `(-1/sqrt(in), 1/sqrt(in))`, zero bias.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = Array2::from_shape_fn((input, output), |_| rng.gen_range(-bound..bound));
        Linear { weight, bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, layer expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    /// Accumulates parameter gradients for upstream `dy` and returns `dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }

    pub fn zeros_like(&self) -> Self {
        Linear::zeros(self.input_dim(), self.output_dim())
    }
}

/// Flat views over every trainable tensor, in a fixed order.
pub trait Tensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl Tensors for [Linear] {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Default hidden size of the metric space.
pub const DEFAULT_HIDDEN: usize = 32;

/// Number of heads a scheme owns: head/tail for TPLinker, one per chunk for BiTT.
pub fn head_count(scheme: SchemeId) -> usize {
    match scheme {
        SchemeId::TpLinker => 2,
        SchemeId::Bitt => 8,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub scheme: SchemeId,
    pub heads: Vec<Linear>,
}

impl HeadParams {
    pub fn init<R: Rng>(scheme: SchemeId, embed_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let heads = (0..head_count(scheme)).map(|_| Linear::init(embed_dim, hidden, rng)).collect();
        HeadParams { scheme, heads }
    }

    pub fn zeros_like(&self) -> Self {
        HeadParams { scheme: self.scheme, heads: self.heads.iter().map(Linear::zeros_like).collect() }
    }

    pub fn embed_dim(&self) -> usize {
        self.heads[0].input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.heads[0].output_dim()
    }

    /// Applies every head to `embeddings`.
    pub fn apply(&self, embeddings: ArrayView2<f64>) -> Result<HiddenStates> {
        let states = self.heads.iter().map(|h| h.forward(embeddings)).collect::<Result<Vec<_>>>()?;
        Ok(HiddenStates { scheme: self.scheme, states })
    }

    /// Backpropagates per-head upstream gradients into `grad`.
    pub fn backward(&self, embeddings: ArrayView2<f64>, d_states: &[Array2<f64>], grad: &mut HeadParams) {
        for ((head, g), d) in self.heads.iter().zip(grad.heads.iter_mut()).zip(d_states) {
            head.backward(embeddings, d.view(), g);
        }
    }
}

impl Tensors for HeadParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.heads.as_slice().tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.heads.as_mut_slice().tensors_mut()
    }
}

/// Per-head hidden states of one instance: `[H_h, H_t]` for TPLinker, one
/// matrix per chunk for BiTT. Every matrix is `m × hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStates {
    pub scheme: SchemeId,
    pub states: Vec<Array2<f64>>,
}

impl HiddenStates {
    pub fn head(&self) -> &Array2<f64> {
        &self.states[0]
    }

    pub fn tail(&self) -> &Array2<f64> {
        &self.states[1]
    }

    pub fn chunk(&self, c: usize) -> &Array2<f64> {
        &self.states[c]
    }

    pub fn m(&self) -> usize {
        self.states[0].nrows()
    }
}

pub fn tplinker_heads(embeddings: ArrayView2<f64>, params: &HeadParams) -> Result<HiddenStates> {
    if params.scheme != SchemeId::TpLinker {
        return Err(Error::Dimension("expected TPLinker head parameters".into()));
    }
    params.apply(embeddings)
}

pub fn bitt_heads(embeddings: ArrayView2<f64>, params: &HeadParams) -> Result<HiddenStates> {
    if params.scheme != SchemeId::Bitt {
        return Err(Error::Dimension("expected BiTT head parameters".into()));
    }
    params.apply(embeddings)
}

/// Pretraining classifier: one linear layer per chunk. For TPLinker the input
/// of a cell `(i, j)` is the concatenation `[H_h[i]; H_t[j]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub scheme: SchemeId,
    pub layers: Vec<Linear>,
}

impl Classifier {
    pub fn init<R: Rng>(scheme: SchemeId, hidden: usize, alphabet: &[usize], rng: &mut R) -> Self {
        let input = match scheme {
            SchemeId::TpLinker => 2 * hidden,
            SchemeId::Bitt => hidden,
        };
        let layers = alphabet.iter().map(|&n| Linear::init(input, n, rng)).collect();
        Classifier { scheme, layers }
    }

    pub fn zeros_like(&self) -> Self {
        Classifier { scheme: self.scheme, layers: self.layers.iter().map(Linear::zeros_like).collect() }
    }
}

impl Tensors for Classifier {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.as_slice().tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.as_mut_slice().tensors_mut()
    }
}

/// Label scores per chunk: `chunk_len × N_c` for each chunk.
pub fn pretrain_logits(hidden: &HiddenStates, cls: &Classifier) -> Result<Vec<Array2<f64>>> {
    if hidden.scheme != cls.scheme {
        return Err(Error::Dimension("classifier and hidden states use different schemes".into()));
    }
    match cls.scheme {
        SchemeId::TpLinker => {
            let (hh, ht) = (hidden.head(), hidden.tail());
            let nh = hh.ncols();
            let m = hh.nrows();
            cls.layers
                .iter()
                .map(|layer| {
                    if layer.input_dim() != 2 * nh {
                        return Err(Error::Dimension(format!(
                            "classifier expects {} inputs, pair state has {}",
                            layer.input_dim(),
                            2 * nh
                        )));
                    }
                    let u = hh.dot(&layer.weight.slice(ndarray::s![..nh, ..]));
                    let v = ht.dot(&layer.weight.slice(ndarray::s![nh.., ..]));
                    let k = layer.output_dim();
                    let mut z = Array2::zeros((m * m, k));
                    for i in 0..m {
                        for j in 0..m {
                            for l in 0..k {
                                z[[i * m + j, l]] = u[[i, l]] + v[[j, l]] + layer.bias[l];
                            }
                        }
                    }
                    Ok(z)
                })
                .collect()
        }
        SchemeId::Bitt => cls
            .layers
            .iter()
            .enumerate()
            .map(|(c, layer)| layer.forward(hidden.chunk(c).view()))
            .collect(),
    }
}

/// Backpropagates per-chunk logit gradients to the classifier and to the
/// hidden states. Returns the hidden-state gradients, one per head.
pub fn pretrain_logits_backward(
    hidden: &HiddenStates,
    cls: &Classifier,
    d_logits: &[Array2<f64>],
    grad: &mut Classifier,
) -> Vec<Array2<f64>> {
    match cls.scheme {
        SchemeId::TpLinker => {
            let (hh, ht) = (hidden.head(), hidden.tail());
            let (m, nh) = hh.dim();
            let mut dh = Array2::zeros((m, nh));
            let mut dt = Array2::zeros((m, nh));
            for ((layer, g), dz) in cls.layers.iter().zip(grad.layers.iter_mut()).zip(d_logits) {
                let k = layer.output_dim();
                let mut du = Array2::<f64>::zeros((m, k));
                let mut dv = Array2::<f64>::zeros((m, k));
                for i in 0..m {
                    for j in 0..m {
                        for l in 0..k {
                            let v = dz[[i * m + j, l]];
                            du[[i, l]] += v;
                            dv[[j, l]] += v;
                        }
                    }
                }
                let wa = layer.weight.slice(ndarray::s![..nh, ..]);
                let wb = layer.weight.slice(ndarray::s![nh.., ..]);
                {
                    let mut ga = g.weight.slice_mut(ndarray::s![..nh, ..]);
                    ga += &hh.t().dot(&du);
                }
                {
                    let mut gb = g.weight.slice_mut(ndarray::s![nh.., ..]);
                    gb += &ht.t().dot(&dv);
                }
                g.bias += &du.sum_axis(Axis(0));
                dh += &du.dot(&wa.t());
                dt += &dv.dot(&wb.t());
            }
            vec![dh, dt]
        }
        SchemeId::Bitt => cls
            .layers
            .iter()
            .zip(grad.layers.iter_mut())
            .enumerate()
            .map(|(c, (layer, g))| layer.backward(hidden.chunk(c).view(), d_logits[c].view(), g))
            .collect(),
    }
}
