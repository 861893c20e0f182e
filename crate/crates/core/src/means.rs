//! Mean (centroid) collections in the four layouts the variants work on, and
//! the object-to-cluster assignment.

use serde::{Deserialize, Serialize};

use crate::data::{InvertedFile, OwnerKind, SparseVector};
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Which layout a [`MeanSet`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanRepr {
    /// `k × D`, zero-padded.
    Dense,
    /// `D × k`, zero-padded: one full row of `k` values per term.
    DenseInverted,
    /// Per-term postings of `(mean id, value)` over nonzero entries only.
    SparseInverted,
    /// One sorted sparse vector per mean.
    SparseStandard,
}

/// `k` unit-norm means over a `D`-term vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub enum MeanSet {
    Dense(DenseMatrix),
    DenseInverted(DenseMatrix),
    SparseInverted(InvertedFile),
    SparseStandard { means: Vec<SparseVector>, dim: usize },
}

impl MeanSet {
    /// Lays out `means` (owner `j + 1` is `means[j]`) in `repr`.
    pub fn from_sparse(means: Vec<SparseVector>, dim: usize, repr: MeanRepr) -> Result<Self> {
        for (j, m) in means.iter().enumerate() {
            if m.max_term().is_some_and(|t| t as usize > dim) {
                return Err(Error::domain(format!(
                    "mean {} exceeds dimension {dim}",
                    j + 1
                )));
            }
        }
        Ok(match repr {
            MeanRepr::SparseStandard => MeanSet::SparseStandard { means, dim },
            MeanRepr::SparseInverted => {
                MeanSet::SparseInverted(InvertedFile::build(&means, dim, OwnerKind::Means)?)
            }
            MeanRepr::Dense => MeanSet::Dense(dense_rows(&means, dim)),
            MeanRepr::DenseInverted => MeanSet::DenseInverted(dense_rows(&means, dim).transpose()),
        })
    }

    pub fn repr(&self) -> MeanRepr {
        match self {
            MeanSet::Dense(_) => MeanRepr::Dense,
            MeanSet::DenseInverted(_) => MeanRepr::DenseInverted,
            MeanSet::SparseInverted(_) => MeanRepr::SparseInverted,
            MeanSet::SparseStandard { .. } => MeanRepr::SparseStandard,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            MeanSet::Dense(m) => m.rows(),
            MeanSet::DenseInverted(m) => m.cols(),
            MeanSet::SparseInverted(inv) => inv.n_owners(),
            MeanSet::SparseStandard { means, .. } => means.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeanSet::Dense(m) => m.cols(),
            MeanSet::DenseInverted(m) => m.rows(),
            MeanSet::SparseInverted(inv) => inv.dim(),
            MeanSet::SparseStandard { dim, .. } => *dim,
        }
    }

    /// The means as sorted sparse vectors; zero padding is dropped.
    pub fn to_sparse(&self) -> Vec<SparseVector> {
        match self {
            MeanSet::Dense(m) => (0..m.rows()).map(|j| SparseVector::from_dense(m.row(j))).collect(),
            MeanSet::DenseInverted(m) => {
                let t = m.transpose();
                (0..t.rows()).map(|j| SparseVector::from_dense(t.row(j))).collect()
            }
            MeanSet::SparseInverted(inv) => inv.to_vectors(),
            MeanSet::SparseStandard { means, .. } => means.clone(),
        }
    }

    /// `k × D` dense copy.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MeanSet::Dense(m) => m.clone(),
            MeanSet::DenseInverted(m) => m.transpose(),
            _ => dense_rows(&self.to_sparse(), self.dim()),
        }
    }

    pub fn convert(&self, repr: MeanRepr) -> MeanSet {
        if repr == self.repr() {
            return self.clone();
        }
        MeanSet::from_sparse(self.to_sparse(), self.dim(), repr)
            .expect("converting a valid mean set")
    }

    /// `x · μ_j` for 0-based `j`, summed over the terms of `x` in ascending
    /// order.
    pub fn dot(&self, j: usize, x: &SparseVector) -> f64 {
        let mut acc = 0.0;
        match self {
            MeanSet::Dense(m) => {
                let row = m.row(j);
                for (t, v) in x.iter() {
                    acc += v * row[t as usize - 1];
                }
            }
            MeanSet::DenseInverted(m) => {
                for (t, v) in x.iter() {
                    acc += v * m.get(t as usize - 1, j);
                }
            }
            MeanSet::SparseInverted(inv) => {
                for (t, v) in x.iter() {
                    acc += v * inv.get(t, j as u32 + 1);
                }
            }
            MeanSet::SparseStandard { means, .. } => acc = x.dot(&means[j]),
        }
        acc
    }

    /// Distinct terms per mean, `(ntm)_j`.
    pub fn term_counts(&self) -> Vec<u64> {
        match self {
            MeanSet::SparseStandard { means, .. } => means.iter().map(|m| m.nnz() as u64).collect(),
            MeanSet::Dense(m) => (0..m.rows())
                .map(|j| m.row(j).iter().filter(|v| **v != 0.0).count() as u64)
                .collect(),
            _ => self.to_sparse().iter().map(|m| m.nnz() as u64).collect(),
        }
    }

    /// Means holding each term, `(nc)_p`, counting nonzero entries only.
    pub fn centroid_freq(&self) -> Vec<u64> {
        match self {
            MeanSet::SparseInverted(inv) => inv.frequencies(),
            MeanSet::DenseInverted(m) => (0..m.rows())
                .map(|p| m.row(p).iter().filter(|v| **v != 0.0).count() as u64)
                .collect(),
            _ => {
                let mut nc = vec![0u64; self.dim()];
                for m in self.to_sparse() {
                    for &t in m.terms() {
                        nc[t as usize - 1] += 1;
                    }
                }
                nc
            }
        }
    }

    /// `Σ_j (ntm)_j`, equal to `Σ_p (nc)_p`.
    pub fn total_terms(&self) -> u64 {
        self.term_counts().iter().sum()
    }
}

fn dense_rows(means: &[SparseVector], dim: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(means.len(), dim);
    for (j, v) in means.iter().enumerate() {
        let row = m.row_mut(j);
        for (t, x) in v.iter() {
            row[t as usize - 1] = x;
        }
    }
    m
}

/// 64-bit FNV-1a over the labels, each as 4 little-endian bytes.
pub fn fnv1a_labels(labels: &[u32]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for l in labels {
        for b in l.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

/// Cluster label (1-based) of every object, plus cluster sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<u32>,
    sizes: Vec<u32>,
}

impl Assignment {
    pub fn from_labels(labels: Vec<u32>, k: usize) -> Result<Self> {
        let mut sizes = vec![0u32; k];
        for (i, &a) in labels.iter().enumerate() {
            if a == 0 || a as usize > k {
                return Err(Error::domain(format!(
                    "object {} assigned to cluster {a} outside 1..={k}",
                    i + 1
                )));
            }
            sizes[a as usize - 1] += 1;
        }
        Ok(Self { labels, sizes })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// 1-based cluster of 0-based object `i`.
    #[inline]
    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Member indices (0-based) per cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .sizes
            .iter()
            .map(|&s| Vec::with_capacity(s as usize))
            .collect();
        for (i, &a) in self.labels.iter().enumerate() {
            out[a as usize - 1].push(i);
        }
        out
    }

    pub fn empty_clusters(&self) -> usize {
        self.sizes.iter().filter(|&&s| s == 0).count()
    }

    pub fn digest(&self) -> u64 {
        fnv1a_labels(&self.labels)
    }

    /// Objects whose label differs from `other`'s.
    pub fn disagreements(&self, other: &Assignment) -> usize {
        self.labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count()
    }
}
