//! Higher-order matrix factorization (HOMF) for bipartite rating data.
//!
//! The library builds a joint user/item graph from ratings and optional
//! side-information graphs, turns it into a random-walk transition matrix
//! `A`, and learns embeddings `U`, `V` such that `U Vᵀ` approximates
//! `f_T(A) = (A + A² + … + Aᵀ) / T` on its nonzero support. Powers of `A`
//! are never formed: every column or row of `f_T(A)` is produced on demand
//! by `T − 1` sparse matrix-vector products.
//!
//! Module map:
//!
//! * [`sparse`]: CSR storage, matvec kernels, row normalization.
//! * [`graph`]: weighting functions and the block adjacency / transition matrix.
//! * [`walk`]: column and row sampling of `f_T(A)`, plus spectral helpers.
//! * [`factor`]: alternating ridge updates, fitting, scoring, neighbor queries.
//! * [`metrics`]: ranking metrics and AUC.
//! * [`data`], [`synthetic`], [`experiment`]: ingestion, splitting and orchestration.

pub mod data;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod graph;
pub mod metrics;
pub mod sparse;
pub mod synthetic;
pub mod walk;

mod fsutil;

pub use error::{HomfError, Result};
pub use factor::{EmbeddingPair, FitConfig, ObjectiveTrace, Side};
pub use graph::{GraphSpec, WeightFn};
pub use metrics::{MetricReport, UserTestSet};
pub use sparse::SparseMatrix;
pub use walk::{TransitionMatrix, WalkConfig};
