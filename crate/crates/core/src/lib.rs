//! Training-free composed image retrieval.
//!
//! A composed query is a reference image plus a text describing how the
//! target differs from it. `gmixer` answers it in two stages over
//! precomputed unit-norm embeddings:
//!
//! 1. **Geodesic expansion** ([`gmix`]): the text and image features are
//!    mixed along the great circle joining them at every ratio of a grid
//!    (default `0.7..=1.0` in steps of `0.05`). Each mix retrieves its exact
//!    cosine top-`K`; scores are min-max normalized per ratio and the results
//!    are unioned, keeping each candidate's best normalized score.
//! 2. **Explicit re-ranking** ([`rerank`]): candidates are re-scored with the
//!    modification-text similarity, the first-stage score, and a ReLU
//!    reward/penalty comparing include and exclude caption similarities.
//!
//! [`metrics`] scores rankings with Recall@K, mAP@K and subset Recall@K;
//! [`synth`] builds seeded corpora with planted targets for testing.
//!
//! ```
//! use gmixer::{slerp, MixRatio, UnitVector};
//!
//! let text = UnitVector::basis(2, 0).unwrap();
//! let image = UnitVector::basis(2, 1).unwrap();
//! let mid = slerp(&text, &image, MixRatio::new(0.5).unwrap()).unwrap();
//! assert!((mid.as_slice()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
//! ```

pub mod captions;
pub mod cli;
pub mod error;
pub mod gmix;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod store;
pub mod synth;
pub mod vector;

pub use error::{BundleError, CaptionError, Error, Result};
pub use gmix::{
    build_grid, expand, expand_for_reference, minmax_normalize, CandidateHit, CandidateSet,
    LambdaGrid, RetrievalConfig,
};
pub use metrics::{map_at_k, recall_at_k, subset_recall_at_k, EvalReport, GroundTruth};
pub use pipeline::{run_query, PipelineConfig, QueryResult, TextArm};
pub use rerank::{delta, rerank, DeltaVariant, QueryInstance, RankedResult, RerankOptions};
pub use store::{EmbeddingStore, ScoredId};
pub use vector::{angle_between, cosine, slerp, MixRatio, UnitVector};
