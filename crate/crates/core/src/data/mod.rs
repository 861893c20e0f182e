//! Sparse vectors, inverted files, dataset ingestion and memory accounting.

mod dataset;
pub mod footprint;
mod inverted;
mod vector;

pub use dataset::{
    parse_uci_bow, parse_uci_header, read_value_rows, tfidf_normalize, Dataset, DatasetSummary,
    RawCounts, TfIdf, UciHeader, NORM_TOLERANCE,
};
pub use footprint::{footprint, FootprintReport};
pub use inverted::{InvertedFile, OwnerKind, PostingList};
pub use vector::{sparsity, MergeTally, SparseVector};
