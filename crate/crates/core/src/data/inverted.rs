use serde::{Deserialize, Serialize};

use super::SparseVector;
use crate::{Error, Result};

/// Whose ids the postings carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OwnerKind {
    Objects,
    Means,
}

/// One term's postings: owner ids (1-based, strictly increasing) alongside
/// their values. Kept as two arrays, matching the 4-byte id + 8-byte value
/// accounting used for footprints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PostingList {
    pub owners: Vec<u32>,
    pub values: Vec<f64>,
}

impl PostingList {
    #[inline]
    pub fn len(&self) -> usize {
        self.owners.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (u32, f64)> + '_ {
        self.owners.iter().copied().zip(self.values.iter().copied())
    }

    fn push(&mut self, owner: u32, value: f64) {
        self.owners.push(owner);
        self.values.push(value);
    }
}

/// Per-term postings over a set of owners (objects or means): the transpose of
/// a list of [`SparseVector`]s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertedFile {
    kind: OwnerKind,
    n_owners: usize,
    postings: Vec<PostingList>,
}

impl InvertedFile {
    /// Inverts `vectors` over a dimension of `dim` terms. Owner `i + 1` is
    /// `vectors[i]`.
    pub fn build(vectors: &[SparseVector], dim: usize, kind: OwnerKind) -> Result<Self> {
        let mut lens = vec![0usize; dim];
        for (i, v) in vectors.iter().enumerate() {
            if let Some(t) = v.max_term() {
                if t as usize > dim {
                    return Err(Error::domain(format!(
                        "vector {} holds term {t} beyond dimension {dim}",
                        i + 1
                    )));
                }
            }
            for &t in v.terms() {
                lens[t as usize - 1] += 1;
            }
        }
        let mut postings: Vec<PostingList> = lens
            .iter()
            .map(|&n| PostingList {
                owners: Vec::with_capacity(n),
                values: Vec::with_capacity(n),
            })
            .collect();
        for (i, v) in vectors.iter().enumerate() {
            for (t, x) in v.iter() {
                postings[t as usize - 1].push(i as u32 + 1, x);
            }
        }
        Ok(Self {
            kind,
            n_owners: vectors.len(),
            postings,
        })
    }

    /// Assembles an inverted file from ready-made postings, checking owner
    /// order and range.
    pub fn from_postings(
        postings: Vec<PostingList>,
        n_owners: usize,
        kind: OwnerKind,
    ) -> Result<Self> {
        for (p, list) in postings.iter().enumerate() {
            if list.owners.len() != list.values.len() {
                return Err(Error::Corruption(format!(
                    "term {}: owner/value length mismatch",
                    p + 1
                )));
            }
            for (q, &o) in list.owners.iter().enumerate() {
                if o == 0 || o as usize > n_owners {
                    return Err(Error::Corruption(format!(
                        "term {}: owner id {o} outside 1..={n_owners}",
                        p + 1
                    )));
                }
                if q > 0 && list.owners[q - 1] >= o {
                    return Err(Error::Corruption(format!(
                        "term {}: owner ids not strictly increasing",
                        p + 1
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            n_owners,
            postings,
        })
    }

    pub fn kind(&self) -> OwnerKind {
        self.kind
    }

    pub fn n_owners(&self) -> usize {
        self.n_owners
    }

    pub fn dim(&self) -> usize {
        self.postings.len()
    }

    /// Postings of 1-based `term`.
    #[inline]
    pub fn postings(&self, term: u32) -> &PostingList {
        &self.postings[term as usize - 1]
    }

    pub fn lists(&self) -> &[PostingList] {
        &self.postings
    }

    /// Per-term list lengths: `(no)_p` over objects, `(nc)_p` over means.
    pub fn frequencies(&self) -> Vec<u64> {
        self.postings.iter().map(|l| l.len() as u64).collect()
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(PostingList::len).sum()
    }

    /// Rebuilds the owner-side vectors. `to_vectors(build(S)) == S`.
    pub fn to_vectors(&self) -> Vec<SparseVector> {
        let mut terms = vec![Vec::new(); self.n_owners];
        let mut values = vec![Vec::new(); self.n_owners];
        // ascending term order yields sorted vectors
        for (p, list) in self.postings.iter().enumerate() {
            for (o, v) in list.iter() {
                terms[o as usize - 1].push(p as u32 + 1);
                values[o as usize - 1].push(v);
            }
        }
        terms
            .into_iter()
            .zip(values)
            .map(|(t, v)| SparseVector::from_parts_unchecked(t, v))
            .collect()
    }

    /// Value of owner `owner` at `term`, zero when absent.
    pub fn get(&self, term: u32, owner: u32) -> f64 {
        let list = self.postings(term);
        match list.owners.binary_search(&owner) {
            Ok(q) => list.values[q],
            Err(_) => 0.0,
        }
    }
}
