//! Empirical-null estimation of provider-level confounding from summary
//! statistics, with corrected frequentist and pseudo-Bayesian flagging.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod en_fit;
pub mod error;
pub mod optim;
pub mod pseudo_bayes;
pub mod quadrature;
pub mod robust_init;
pub mod sim_lab;
pub mod special;
pub mod summary_model;

pub use en_fit::{
    fit, log_likelihood, model_based_covariance, null_intervals, sandwich_covariance, CovarianceForm, EnFit, EnObjective,
    FitConfig, FitMode, NullInterval,
};
pub use error::{Error, Result};
pub use optim::{nelder_mead, NelderMeadConfig, NelderMeadResult};
pub use pseudo_bayes::{
    corrected_posterior, flag_bayes, flag_from_cdf, flag_frequentist, lambda_posterior, nu_posterior,
    original_posterior, Flag, FlagDecision, FlagMethod, GammaPrior, LambdaPosterior, NuPosterior, PosteriorKind,
    PosteriorR,
};
pub use sim_lab::{
    generate, generate_cre, replicate_rng, run_replicates, CreScenario, Estimator, ReplicateMetrics, Scenario, SimConfig,
    SimDataset, SimScenario, TargetSpec,
};
pub use robust_init::{huber_regression, initialize, HuberFit, InitEstimate, DEFAULT_HUBER_TUNING};
pub use summary_model::{
    corrected_z, corrected_z_batch, naive_z, naive_z_batch, null_moments, null_moments_batch, validate_dataset,
    ConfoundingParams, Family, FamilyKind, NullMoments, ProviderSummary,
};
