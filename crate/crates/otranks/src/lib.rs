//! Multivariate ranks and quantiles defined through semi-discrete optimal
//! transport, plus the rank-based goodness-of-fit tests they support.

pub mod error;
pub mod geom;
pub mod gof;
pub mod maps;
pub mod model;
pub mod potential;
pub mod reference;
pub mod seeding;
pub mod solver;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use gof::{
    independence_statistic, independence_test, normalized_statistic, permutation_pvalue,
    pooled_rank_realization, two_sample_exact_2d, two_sample_statistic,
    two_sample_statistic_exact_2d, two_sample_test, two_sample_test_exact_2d,
    IndependenceReport, Seeds, TwoSampleReport,
};
pub use maps::{
    depth, local_sup_deviation, psi_rate, quantile, rank, rank_at_sample,
    rank_at_sample_deterministic, RankMode, RankSolution, RateSpec,
};
pub use model::{load_model, model_from_json, model_to_json, save_model, MODEL_VERSION};
pub use potential::{PiecewiseAffinePotential, PowerCell, ACTIVE_SLACK};
pub use reference::{ReferenceKind, ReferenceMeasure};
pub use solver::{
    cell_measures, dual_objective, fit, fit_with_quadrature, transport_cost, Backend, Descent,
    FittedTransport, Quadrature, ResolvedConfig, SolverConfig,
};
pub use synth::{generate, Family, GeneratorSpec, Setting};
