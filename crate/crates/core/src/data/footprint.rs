use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::means::{MeanRepr, MeanSet};
use crate::{Error, Result};

/// Bytes of one `(id, value)` tuple: a 4-byte id and an 8-byte value.
pub const TUPLE_BYTES: u64 = 12;
/// Bytes of one dense value.
pub const VALUE_BYTES: u64 = 8;

/// Memory held by the object and mean structures of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub object_bytes: u64,
    pub mean_bytes: u64,
    pub total_bytes: u64,
    pub tuple_bytes: u64,
}

impl FootprintReport {
    pub fn new(object_bytes: u64, mean_bytes: u64) -> Self {
        Self {
            object_bytes,
            mean_bytes,
            total_bytes: object_bytes + mean_bytes,
            tuple_bytes: TUPLE_BYTES,
        }
    }
}

/// Sparse object storage for `sum_nnz` stored entries.
pub fn object_bytes(sum_nnz: u64) -> u64 {
    sum_nnz * TUPLE_BYTES
}

/// Zero-padded `k × D` mean storage (same for either dense layout).
pub fn dense_mean_bytes(k: u64, dim: u64) -> u64 {
    k * dim * VALUE_BYTES
}

/// Sparse mean storage for `total_terms` stored entries.
pub fn sparse_mean_bytes(total_terms: u64) -> u64 {
    total_terms * TUPLE_BYTES
}

/// Mean storage for a layout given `k`, `D` and `Σ_j (ntm)_j`.
pub fn mean_bytes(repr: MeanRepr, k: u64, dim: u64, total_terms: u64) -> u64 {
    match repr {
        MeanRepr::Dense | MeanRepr::DenseInverted => dense_mean_bytes(k, dim),
        MeanRepr::SparseInverted | MeanRepr::SparseStandard => sparse_mean_bytes(total_terms),
    }
}

/// Footprint of `ds` plus `means`. `dual_objects` counts the objects twice,
/// for a run that holds them both per-vector and inverted.
pub fn footprint(ds: &Dataset, means: &MeanSet, dual_objects: bool) -> Result<FootprintReport> {
    if ds.dim() != means.dim() {
        return Err(Error::domain(format!(
            "dataset dimension {} differs from means dimension {}",
            ds.dim(),
            means.dim()
        )));
    }
    let copies = if dual_objects { 2 } else { 1 };
    let obj = copies * object_bytes(ds.sum_nnz());
    let k = means.k() as u64;
    let mb = mean_bytes(means.repr(), k, ds.dim() as u64, means.total_terms());
    Ok(FootprintReport::new(obj, mb))
}

/// Decimal megabytes (10^6 bytes).
pub fn megabytes(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}
