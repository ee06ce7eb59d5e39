//! Row-sampling low-rank approximation, an operator law of large numbers, and
//! norms of random submatrices.
//!
//! A sketch `Ã` keeps `d` rows of `A`, drawn with probability proportional to
//! their squared length and rescaled so that `E ÃᵀÃ = AᵀA`. Projecting onto
//! the top right singular vectors of `Ã` gives a rank-`k` approximation
//! `A·P_k` whose spectral error is compared against `σ_{k+1}(A) + ε‖A‖₂`.

pub mod cut;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lln;
pub mod lowrank;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod stream;

pub use cut::{
    bernoulli_subset, cut_decay_estimate, cut_norm_exact, inf_to_one_norm_exact, order_statistics_check,
    restrict, restrict_rows, spectral_decay_estimate, CutNormResult, DecayEstimate, SubsetMask,
};
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use lln::{empirical_second_moment, lln_deviation, DeviationStats, VectorEnsemble};
pub use lowrank::{
    approximation_error, block_identity_matrix, dk_bound_check, low_rank_approximate, optimality_experiment,
    projector_top_k, ApproxConfig, ApproxReport, Projector, Source,
};
pub use report::ExperimentReport;
pub use sampling::{
    required_sample_size, row_distribution, sample_sketch, sample_sketch_one_pass, sample_sketch_two_pass, Sketch,
};
pub use stream::RowStream;
