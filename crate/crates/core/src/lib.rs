//! Nonlinear feature selection from second-order Stein moments.
//!
//! For Gaussian inputs `x ~ N(0, Σ)` the second-order score is
//! `T(x) = Σ⁻¹xxᵀΣ⁻¹ − Σ⁻¹`, and the moment matrix `E[y·T(x)]` has the
//! same row space as the first-layer weights of any multi-index or
//! feedforward model generating `y`. Estimating that matrix, taking its
//! leading eigenvectors by absolute eigenvalue, and ranking features by the
//! column norms of those eigenvectors recovers the relevant features without
//! fitting the network.
//!
//! The crate is organised around that pipeline:
//!
//! * [`data`] datasets, CSV I/O and the synthetic generators,
//! * [`score`] covariance estimation and the second-order score,
//! * [`moment`] the empirical moment matrix and eigen-based selection,
//! * [`screening`] iterative diagonal screening for `p ≫ n`,
//! * [`tuning`] eigengap choice of `k1` and BIC choice of `s`,
//! * [`refit`] the small ReLU regressor used for two-step prediction,
//! * [`metrics`] TPR/FPR and replication summaries,
//! * [`pipeline`] the end-to-end driver shared by the CLI and benchmarks.
//!
//! Sample-parallel work runs on rayon when the `parallel` feature is on
//! (the default). Reductions use a fixed block partition and a fixed
//! pairwise tree, so results are bit-identical with or without the feature
//! and for any thread count.

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod moment;
pub mod parallel;
pub mod pipeline;
pub mod refit;
pub mod rng;
pub mod score;
pub mod screening;
pub mod tuning;

pub use data::{Case, Dataset, Design, GroundTruth, SimSpec, WeightNorm};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{ReplicationSummary, SelectionMetrics};
pub use moment::{SelectionResult, SelectionRule, SteinMoment};
pub use pipeline::{CovarianceChoice, K1Choice, PipelineConfig, SparsityChoice};
pub use refit::{RefitConfig, RefitModel};
pub use score::{CovarianceMethod, CovarianceModel, ScoreMatrix};
pub use screening::{ScreeningConfig, ScreeningTrace};
pub use tuning::{BicReport, EigengapReport, K1Rule};
