//! Simulation and inference for the Heston stochastic volatility model.
//!
//! The crate simulates `(Y, X)` paths with exact CIR transitions, reduces a
//! path to the statistics that determine the drift likelihood, computes the
//! closed-form maximum likelihood estimator of `(a, b, alpha, beta)`, and
//! samples the limit laws of that estimator in the subcritical (`b > 0`),
//! critical (`b = 0`) and supercritical (`b < 0`) regimes.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod functionals;
pub mod model;
pub mod path;
pub mod rng;
pub mod sim;
pub mod stats;

pub use asymptotics::{
    boundary_hitting_time_sample, critical_limit_sample, random_scaling_transform, subcritical_covariance,
    supercritical_limit_sample, CovarianceMatrix4, LimitSample, Scaling,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate_from_path, information_matrix, log_likelihood, mle, score_vector, DyOverYMode, EstimateOptions,
    InformationMatrix, MleEstimate, ScoreVector,
};
pub use experiment::{
    feller_warning, run_experiment, ExperimentConfig, ExperimentKind, TestReport, Thresholds,
};
pub use functionals::{
    diffusion_matrix_estimate, log_identity_value, recover_volatility, sufficient_stats, DiffusionEstimate,
    Quadrature, SufficientStats,
};
pub use model::{classify, mean_vector, stationary_moment, Criticality, DiffusionMatrix, ModelParams};
pub use path::PathGrid;
pub use rng::{derive_stream, Stream};
pub use sim::{
    cir_transition_sample, simulate_critical_companion, simulate_heston_path,
    simulate_supercritical_companion, CirTransition,
};
pub use stats::{empirical_covariance, ks_one_sample, ks_two_sample, KsOutcome};
