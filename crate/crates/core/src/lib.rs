//! Stochastic-gradient MCMC for Bayesian neural networks with Gaussian
//! process priors in function space.
//!
//! The crate provides four dynamics over MLP weights: SGLD and SGHMC against
//! an isotropic Gaussian weight prior, and fSGLD and fSGHMC against a GP
//! prior evaluated at measurement points. Supporting modules cover dense
//! linear algebra with Cholesky factorization, reverse-mode gradients for
//! small MLPs, GP marginal-likelihood pre-training, dataset handling, and
//! Gaussian-mixture posterior predictives.

pub mod bandit;
pub mod data;
pub mod error;
pub mod gp;
pub mod likelihood;
pub mod linalg;
pub mod mlp;
pub mod predict;
pub mod rng;
pub mod samplers;

pub use bandit::{run_bandit, AgentKind, BanditConfig, BanditTrace, MushroomEnv};
pub use data::{Dataset, MeasurementPolicy, StandardizationRecord};
pub use error::{Error, Result};
pub use gp::{GpPrior, Kernel, MeanFn, MeasurementSet, PriorFactor};
pub use likelihood::{GaussianLikelihood, Minibatch, ParamPrior};
pub use linalg::{cholesky, CholeskyFactor, DenseMatrix};
pub use mlp::{Activation, MlpArchitecture, Model, ParamVector};
pub use predict::{
    export_bands, nll, predictive_ensemble, rmse, verify_tractable, PredictiveSummary,
    TractableTarget, VerificationReport, VerifyConfig,
};
pub use rng::RngState;
pub use samplers::{
    run_chain, ChainOutput, Dynamics, PriorSpec, SampleSet, SamplerConfig, StepSchedule,
};
