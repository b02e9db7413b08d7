use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::par::{map_range, Exec};

/// Column layout of the support tokens: instance `s` owns columns
/// `offsets[s] .. offsets[s] + lens[s]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportBlocks {
    offsets: Vec<usize>,
    lens: Vec<usize>,
    owner: Vec<usize>,
}

impl SupportBlocks {
    pub fn new(lens: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(lens.len());
        let mut owner = Vec::new();
        let mut acc = 0;
        for (s, &l) in lens.iter().enumerate() {
            offsets.push(acc);
            owner.extend(std::iter::repeat_n(s, l));
            acc += l;
        }
        SupportBlocks { offsets, lens: lens.to_vec(), owner }
    }

    /// `count` instances of `m` tokens each.
    pub fn uniform(count: usize, m: usize) -> Self {
        SupportBlocks::new(&vec![m; count])
    }

    pub fn instances(&self) -> usize {
        self.lens.len()
    }

    pub fn total(&self) -> usize {
        self.owner.len()
    }

    pub fn len_of(&self, s: usize) -> usize {
        self.lens[s]
    }

    pub fn offset(&self, s: usize) -> usize {
        self.offsets[s]
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s] + self.lens[s]
    }

    pub fn instance_of(&self, col: usize) -> usize {
        self.owner[col]
    }

    /// Σ m_s², the number of token pairs in the support set.
    pub fn pair_count(&self) -> usize {
        self.lens.iter().map(|l| l * l).sum()
    }
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
pub fn sqdist(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    sqdist_with(Exec::default(), a, b)
}

pub fn sqdist_with(exec: Exec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!("sqdist operands have {} and {} columns", a.ncols(), b.ncols())));
    }
    let (p, q) = (a.nrows(), b.nrows());
    let rows = map_range(exec, p, |i| {
        let ai = a.row(i);
        (0..q)
            .map(|j| ai.iter().zip(b.row(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .collect::<Vec<f64>>()
    });
    Ok(Array2::from_shape_vec((p, q), rows.into_iter().flatten().collect()).expect("p*q entries"))
}

/// Distance between query pair `(i, j)` and support pair `(row, col)` given
/// as global support columns, as the sum of its head and tail parts.
pub fn pair_distance(
    dh: ArrayView2<f64>,
    dt: ArrayView2<f64>,
    blocks: &SupportBlocks,
    i: usize,
    j: usize,
    row: usize,
    col: usize,
) -> Result<f64> {
    if i >= dh.nrows() || j >= dt.nrows() || row >= blocks.total() || col >= blocks.total() {
        return Err(Error::Dimension(format!("pair ({i},{j}) vs ({row},{col}) out of range")));
    }
    if blocks.instance_of(row) != blocks.instance_of(col) {
        return Err(Error::CrossInstance { row, col });
    }
    Ok(dh[[i, row]] + dt[[j, col]])
}
