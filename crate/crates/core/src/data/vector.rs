use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sparse feature vector stored as two parallel arrays: 1-based term ids in
/// strictly increasing order and their nonzero values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    terms: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(terms: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if terms.len() != values.len() {
            return Err(Error::domain(format!(
                "term/value length mismatch: {} vs {}",
                terms.len(),
                values.len()
            )));
        }
        for (h, (&t, &v)) in terms.iter().zip(&values).enumerate() {
            if t == 0 {
                return Err(Error::domain("term ids are 1-based; found 0"));
            }
            if h > 0 && terms[h - 1] >= t {
                return Err(Error::domain(format!(
                    "term ids not strictly increasing at position {h}: {} then {t}",
                    terms[h - 1]
                )));
            }
            if !v.is_finite() || v == 0.0 {
                return Err(Error::domain(format!(
                    "value for term {t} must be finite and nonzero, got {v}"
                )));
            }
        }
        Ok(Self { terms, values })
    }

    /// Builds a vector from `(term, value)` pairs in any order. Duplicate terms
    /// are rejected.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let (terms, values) = entries.into_iter().unzip();
        Self::new(terms, values)
    }

    /// Invariants are the caller's responsibility.
    pub(crate) fn from_parts_unchecked(terms: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(terms.len(), values.len());
        debug_assert!(terms.windows(2).all(|w| w[0] < w[1]));
        Self { terms, values }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Number of stored entries, `(nt)_i` for objects and `(ntm)_j` for means.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn terms(&self) -> &[u32] {
        &self.terms
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (u32, f64)> + '_ {
        self.terms.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max_term(&self) -> Option<u32> {
        self.terms.last().copied()
    }

    /// Value at `term`, zero when absent.
    pub fn get(&self, term: u32) -> f64 {
        match self.terms.binary_search(&term) {
            Ok(h) => self.values[h],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Returns a copy scaled to unit L2 norm, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return None;
        }
        let values = self.values.iter().map(|v| v / norm).collect();
        Some(Self {
            terms: self.terms.clone(),
            values,
        })
    }

    /// Inner product by two-way merge over the sorted term ids.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        self.dot_counted(other, &mut MergeTally::default())
    }

    /// Same as [`dot`](Self::dot), tallying pointer advances and matched
    /// terms into `tally`.
    pub fn dot_counted(&self, other: &SparseVector, tally: &mut MergeTally) -> f64 {
        let (a, b) = (&self.terms, &other.terms);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    i += 1;
                    tally.steps += 1;
                }
                std::cmp::Ordering::Greater => {
                    j += 1;
                    tally.steps += 1;
                }
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                    tally.steps += 2;
                    tally.matches += 1;
                }
            }
        }
        acc
    }

    /// Expands to a dense vector of length `dim` (index `t - 1` holds term `t`).
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (t, v) in self.iter() {
            out[t as usize - 1] = v;
        }
        out
    }

    /// Collects the nonzero entries of a dense slice.
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut terms = Vec::new();
        let mut values = Vec::new();
        for (p, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                terms.push(p as u32 + 1);
                values.push(v);
            }
        }
        Self { terms, values }
    }
}

/// Work done by [`SparseVector::dot_counted`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MergeTally {
    pub steps: u64,
    pub matches: u64,
}

/// `nnz / dim`, the fraction of the dimension a vector occupies.
pub fn sparsity(v: &SparseVector, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("sparsity undefined for dimension 0"));
    }
    if let Some(t) = v.max_term() {
        if t as usize > dim {
            return Err(Error::domain(format!("term {t} exceeds dimension {dim}")));
        }
    }
    Ok(v.nnz() as f64 / dim as f64)
}
