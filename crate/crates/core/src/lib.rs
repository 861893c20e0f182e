//! Spherical k-means clustering for large, sparse, high-dimensional data.
//!
//! The centerpiece is the inverted-file mean representation ([`Variant::Ivf`]):
//! each term keeps a postings list of `(mean id, value)` tuples, so the
//! assignment step only touches the nonzero mean entries of the terms an object
//! actually contains. The other variants exist to isolate the effect of each
//! design choice (data structure, full vs sparse means, branch vs no branch,
//! inverting the objects instead of the means) while producing the same
//! clustering from the same seed.
//!
//! Besides the clustering itself the crate carries the cost-analysis side:
//!
//! | Module | What it provides |
//! |--------|------------------|
//! | [`data`] | sparse vectors, inverted files, UCI bag-of-words ingestion, tf-idf, footprints |
//! | [`clustering`] | seeding, objective, dense reference iteration, the run driver |
//! | [`variants`] | the instrumented assignment/update steps of every variant |
//! | [`counters`] | operation counters, multiplication volumes, instruction model, crossover test |
//! | [`cpi`] | degradation factors, the linear CPI model and its staged fit |
//! | [`cache`] | closed-form last-level-cache occupancy and miss models |
//! | [`synth`] | seeded synthetic corpora and frequency profiles |

pub mod cache;
pub mod clustering;
pub mod counters;
pub mod cpi;
pub mod data;
mod error;
pub mod means;
pub mod rng;
pub mod synth;
pub mod variants;

pub use clustering::{run, RunConfig, RunResult, Runner, Variant};
pub use counters::{InstModelParams, OpCounters};
pub use data::{Dataset, InvertedFile, SparseVector};
pub use error::{Error, Result};
pub use means::{Assignment, MeanSet};
