//! Assignment and update steps of the six compared variants.
//!
//! Every assignment accumulates each partial similarity over the object's
//! shared terms in ascending term order and resolves the best cluster with
//! [`argmax`], so all variants agree on the clustering. What differs is the
//! mean layout each one walks and therefore what its [`OpCounters`] record:
//!
//! | variant | objects | means | inner loop |
//! |---------|---------|-------|------------|
//! | MFN | per-vector | dense `k × D` | all `k` means per object term |
//! | IFN | per-vector | dense `D × k` | all `k` entries of the term row |
//! | IFB | per-vector | dense `D × k` | as IFN, skipping zero entries |
//! | IVF | per-vector | inverted, nonzeros only | the term's `(nc)_s` postings |
//! | TWM | per-vector | per-vector | two-way merge per (object, mean) |
//! | IVFD | inverted | per-vector | the object postings of each mean term |

use crate::counters::OpCounters;
use crate::data::{Dataset, InvertedFile, MergeTally, OwnerKind, PostingList, SparseVector};
use crate::means::{Assignment, DenseMatrix, MeanSet};
use crate::{Error, Result};

/// Reusable buffers for one run.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    rho: Vec<f64>,
    obj_rho: Vec<f64>,
    obj_best: Vec<f64>,
    w: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Scratch {
    pub fn new(n: usize, k: usize, dim: usize) -> Self {
        Self {
            rho: vec![0.0; k],
            obj_rho: Vec::with_capacity(n),
            obj_best: Vec::with_capacity(n),
            w: vec![0.0; dim],
            seen: vec![false; dim],
            touched: Vec::new(),
        }
    }

    fn rho(&mut self, k: usize) -> &mut [f64] {
        if self.rho.len() != k {
            self.rho.resize(k, 0.0);
        }
        &mut self.rho
    }

    fn ensure_dim(&mut self, dim: usize) {
        if self.w.len() != dim {
            self.w = vec![0.0; dim];
            self.seen = vec![false; dim];
        }
    }
}

/// Smallest 1-based index among the maximizers: running maximum from −∞ with
/// strict `>`.
#[inline]
pub fn argmax(rho: &[f64]) -> u32 {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (j, &r) in rho.iter().enumerate() {
        if r > best {
            best = r;
            arg = j;
        }
    }
    arg as u32 + 1
}

fn check_dim(ds: &Dataset, dim: usize) -> Result<()> {
    if ds.dim() != dim {
        return Err(Error::domain(format!(
            "dataset dimension {} differs from means dimension {dim}",
            ds.dim()
        )));
    }
    Ok(())
}

/// IVF: per object, walk the postings `(c, u)` of each of its terms and
/// accumulate `ρ_c += v · u`.
pub fn assign_ivf(
    ds: &Dataset,
    means: &InvertedFile,
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    check_dim(ds, means.dim())?;
    let k = means.n_owners();
    let rho = scratch.rho(k);
    let mut labels = Vec::with_capacity(ds.len());
    let mut mults = 0u64;
    for x in ds.vectors() {
        rho.fill(0.0);
        for (s, v) in x.iter() {
            let list = means.postings(s);
            for (c, u) in list.iter() {
                let slot = rho
                    .get_mut((c as usize).wrapping_sub(1))
                    .ok_or_else(|| Error::Corruption(format!("mean id {c} outside 1..={k}")))?;
                *slot += v * u;
            }
            mults += list.len() as u64;
        }
        labels.push(argmax(rho));
    }
    counters.mults += mults;
    counters.adds += mults;
    counters.inner_entries += mults;
    Assignment::from_labels(labels, k)
}

/// MFN: standard dense `k × D` means; for each object term, multiply against
/// that term's entry in every mean, zeros included.
pub fn assign_mfn(
    ds: &Dataset,
    means: &DenseMatrix,
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    check_dim(ds, means.cols())?;
    let k = means.rows();
    let rho = scratch.rho(k);
    let mut labels = Vec::with_capacity(ds.len());
    for x in ds.vectors() {
        rho.fill(0.0);
        for (s, v) in x.iter() {
            let col = s as usize - 1;
            for (j, r) in rho.iter_mut().enumerate() {
                *r += v * means.get(j, col);
            }
        }
        labels.push(argmax(rho));
    }
    let n = k as u64 * ds.sum_nnz();
    counters.mults += n;
    counters.adds += n;
    counters.inner_entries += n;
    Assignment::from_labels(labels, k)
}

/// IFN: inverted dense `D × k` means; each object term scans the full row of
/// `k` values.
pub fn assign_ifn(
    ds: &Dataset,
    means: &DenseMatrix,
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    check_dim(ds, means.rows())?;
    let k = means.cols();
    let rho = scratch.rho(k);
    let mut labels = Vec::with_capacity(ds.len());
    for x in ds.vectors() {
        rho.fill(0.0);
        for (s, v) in x.iter() {
            let row = means.row(s as usize - 1);
            for (r, &u) in rho.iter_mut().zip(row) {
                *r += v * u;
            }
        }
        labels.push(argmax(rho));
    }
    let n = k as u64 * ds.sum_nnz();
    counters.mults += n;
    counters.adds += n;
    counters.inner_entries += n;
    Assignment::from_labels(labels, k)
}

/// IFB: IFN with a zero test on each mean value before the multiply-add.
pub fn assign_ifb(
    ds: &Dataset,
    means: &DenseMatrix,
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    check_dim(ds, means.rows())?;
    let k = means.cols();
    let rho = scratch.rho(k);
    let mut labels = Vec::with_capacity(ds.len());
    let mut mults = 0u64;
    for x in ds.vectors() {
        rho.fill(0.0);
        for (s, v) in x.iter() {
            let row = means.row(s as usize - 1);
            for (r, &u) in rho.iter_mut().zip(row) {
                if u == 0.0 {
                    continue;
                }
                *r += v * u;
                mults += 1;
            }
        }
        labels.push(argmax(rho));
    }
    let entries = k as u64 * ds.sum_nnz();
    counters.mults += mults;
    counters.adds += mults;
    counters.inner_entries += entries;
    counters.branch_checks += entries;
    Assignment::from_labels(labels, k)
}

/// TWM: both sides per-vector; every (object, mean) similarity is a two-way
/// merge of the sorted term lists.
pub fn assign_twm(
    ds: &Dataset,
    means: &[SparseVector],
    dim: usize,
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    check_dim(ds, dim)?;
    let k = means.len();
    let rho = scratch.rho(k);
    let mut labels = Vec::with_capacity(ds.len());
    let mut tally = MergeTally::default();
    for x in ds.vectors() {
        for (r, m) in rho.iter_mut().zip(means) {
            *r = x.dot_counted(m, &mut tally);
        }
        labels.push(argmax(rho));
    }
    counters.mults += tally.matches;
    counters.adds += tally.matches;
    counters.inner_entries += tally.matches;
    counters.merge_steps += tally.steps;
    Assignment::from_labels(labels, k)
}

/// IVFD: the objects are inverted instead. For each mean, walk the object
/// postings of its terms to fill similarities to all `N` objects, then fold
/// them into per-object running maxima. The similarity buffer is cleared
/// before every mean.
pub fn assign_ivfd(
    objects: &InvertedFile,
    means: &[SparseVector],
    scratch: &mut Scratch,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    if objects.kind() != OwnerKind::Objects {
        return Err(Error::domain("IVFD needs an inverted file over objects"));
    }
    let n = objects.n_owners();
    let k = means.len();
    let dim = objects.dim();
    scratch.obj_rho.clear();
    scratch.obj_rho.resize(n, 0.0);
    scratch.obj_best.clear();
    scratch.obj_best.resize(n, f64::NEG_INFINITY);
    let mut labels = vec![0u32; n];
    let mut mults = 0u64;
    for (j, mean) in means.iter().enumerate() {
        let rho = &mut scratch.obj_rho;
        rho.fill(0.0);
        for (s, v) in mean.iter() {
            if s as usize > dim {
                return Err(Error::domain(format!(
                    "mean {} holds term {s} beyond dimension {dim}",
                    j + 1
                )));
            }
            let list = objects.postings(s);
            for (o, u) in list.iter() {
                let slot = rho
                    .get_mut((o as usize).wrapping_sub(1))
                    .ok_or_else(|| Error::Corruption(format!("object id {o} outside 1..={n}")))?;
                *slot += v * u;
            }
            mults += list.len() as u64;
        }
        for ((best, label), &r) in scratch.obj_best.iter_mut().zip(&mut labels).zip(rho.iter()) {
            if r > *best {
                *best = r;
                *label = j as u32 + 1;
            }
        }
    }
    counters.mults += mults;
    counters.adds += mults;
    counters.inner_entries += mults;
    if k == 0 && n > 0 {
        return Err(Error::domain("no means to assign to"));
    }
    Assignment::from_labels(labels, k)
}

/// Normalized mean of one cluster as `(terms, values)`, or `None` when the
/// cluster is empty or its sum vanishes.
///
/// Members are accumulated in ascending object order, the sum is divided by
/// the cluster size, and every entry is divided by the L2 norm of the result
/// taken in ascending term order.
fn cluster_mean(ds: &Dataset, members: &[usize], scratch: &mut Scratch) -> Option<(Vec<u32>, Vec<f64>)> {
    if members.is_empty() {
        return None;
    }
    scratch.ensure_dim(ds.dim());
    let Scratch {
        w, seen, touched, ..
    } = scratch;
    touched.clear();
    for &i in members {
        for (t, v) in ds.vector(i).iter() {
            let p = t as usize - 1;
            if !seen[p] {
                seen[p] = true;
                touched.push(t);
            }
            w[p] += v;
        }
    }
    touched.sort_unstable();
    let size = members.len() as f64;
    let mut sq = 0.0;
    for &t in touched.iter() {
        let p = t as usize - 1;
        w[p] /= size;
        sq += w[p] * w[p];
    }
    let norm = sq.sqrt();
    let mut terms = Vec::with_capacity(touched.len());
    let mut values = Vec::with_capacity(touched.len());
    for &t in touched.iter() {
        let p = t as usize - 1;
        if w[p] != 0.0 && norm > 0.0 {
            terms.push(t);
            values.push(w[p] / norm);
        }
        w[p] = 0.0;
        seen[p] = false;
    }
    if terms.is_empty() {
        None
    } else {
        Some((terms, values))
    }
}

/// Update emitting per-mean sorted sparse vectors. Clusters without members
/// keep `prev[j]`.
pub fn update_sparse_standard(
    ds: &Dataset,
    asg: &Assignment,
    prev: &[SparseVector],
    scratch: &mut Scratch,
) -> Vec<SparseVector> {
    asg.members()
        .iter()
        .enumerate()
        .map(|(j, members)| match cluster_mean(ds, members, scratch) {
            Some((t, v)) => SparseVector::from_parts_unchecked(t, v),
            None => prev[j].clone(),
        })
        .collect()
}

/// Update emitting the means directly as postings: cluster by cluster, each
/// nonzero `w_p` appends `(j, w_p / ‖w‖)` to term `p`'s list, so every list
/// comes out ordered by cluster id. Clusters without members re-emit their
/// postings from `prev`.
pub fn update_ivf(
    ds: &Dataset,
    asg: &Assignment,
    prev: &InvertedFile,
    scratch: &mut Scratch,
) -> Result<InvertedFile> {
    let k = asg.k();
    let dim = ds.dim();
    let members = asg.members();
    let prev_vectors = if members.iter().any(Vec::is_empty) {
        Some(prev.to_vectors())
    } else {
        None
    };
    let mut postings = vec![PostingList::default(); dim];
    for (j, m) in members.iter().enumerate() {
        let owner = j as u32 + 1;
        match cluster_mean(ds, m, scratch) {
            Some((terms, values)) => {
                for (t, u) in terms.into_iter().zip(values) {
                    let list = &mut postings[t as usize - 1];
                    list.owners.push(owner);
                    list.values.push(u);
                }
            }
            None => {
                let old = &prev_vectors.as_ref().expect("computed when a cluster is empty")[j];
                for (t, u) in old.iter() {
                    let list = &mut postings[t as usize - 1];
                    list.owners.push(owner);
                    list.values.push(u);
                }
            }
        }
    }
    InvertedFile::from_postings(postings, k, OwnerKind::Means)
}

/// Update into a `k × D` dense matrix.
pub fn update_dense(
    ds: &Dataset,
    asg: &Assignment,
    prev: &DenseMatrix,
    scratch: &mut Scratch,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(asg.k(), ds.dim());
    for (j, m) in asg.members().iter().enumerate() {
        match cluster_mean(ds, m, scratch) {
            Some((terms, values)) => {
                let row = out.row_mut(j);
                for (t, u) in terms.into_iter().zip(values) {
                    row[t as usize - 1] = u;
                }
            }
            None => out.row_mut(j).copy_from_slice(prev.row(j)),
        }
    }
    out
}

/// Update into a `D × k` dense matrix.
pub fn update_dense_inverted(
    ds: &Dataset,
    asg: &Assignment,
    prev: &DenseMatrix,
    scratch: &mut Scratch,
) -> DenseMatrix {
    let k = asg.k();
    let mut out = DenseMatrix::zeros(ds.dim(), k);
    for (j, m) in asg.members().iter().enumerate() {
        match cluster_mean(ds, m, scratch) {
            Some((terms, values)) => {
                for (t, u) in terms.into_iter().zip(values) {
                    out.set(t as usize - 1, j, u);
                }
            }
            None => {
                for p in 0..ds.dim() {
                    out.set(p, j, prev.get(p, j));
                }
            }
        }
    }
    out
}

/// Update in whatever layout `prev` uses.
pub fn update_means(ds: &Dataset, asg: &Assignment, prev: &MeanSet, scratch: &mut Scratch) -> Result<MeanSet> {
    Ok(match prev {
        MeanSet::Dense(m) => MeanSet::Dense(update_dense(ds, asg, m, scratch)),
        MeanSet::DenseInverted(m) => MeanSet::DenseInverted(update_dense_inverted(ds, asg, m, scratch)),
        MeanSet::SparseInverted(inv) => MeanSet::SparseInverted(update_ivf(ds, asg, inv, scratch)?),
        MeanSet::SparseStandard { means, dim } => MeanSet::SparseStandard {
            means: update_sparse_standard(ds, asg, means, scratch),
            dim: *dim,
        },
    })
}
