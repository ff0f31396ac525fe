//! Simulation and verification toolkit for a Black-Scholes market whose drift
//! and volatility switch with a finite-state continuous-time Markov chain, and
//! for the N-step multiplicative scheme that approximates it.
//!
//! Monte Carlo work runs in deterministic batches (see [`par`]); the
//! `parallel` feature (on by default) spreads batches over a rayon pool.

pub mod ctmc;
pub mod discrete;
pub mod error;
pub mod io;
pub mod lab;
pub mod limit;
pub mod linalg;
pub mod markov;
pub mod par;
pub mod report;
pub mod rng;

pub use ctmc::{evaluate_path, jump_count_mgf_check, jump_density, jump_law_compare, sample_ctmc_path, CtmcPath};
pub use discrete::{
    discrete_cf, discrete_cf_exact, sample_discrete_chain, sample_discrete_path, sample_returns, verify_conditions, CfEstimator,
    DiscreteChain, DiscretePath, DiscreteScheme, FamilyKind, ReturnFamily, StateConvention,
};
pub use error::{LabError, Result};
pub use lab::{
    cf_convergence, cf_rate_check, fdd_compare, jump_law_convergence, price_convergence, tightness_diagnostics, TightnessCell,
    TightnessReport,
};
pub use limit::{limit_cf, limit_cf_exact, price_european_call, sample_limit_fdd, CfEstimate, CfSpec, LimitSample, PriceEstimate};
pub use linalg::Matrix;
pub use markov::{
    discrete_transition_matrix, rate_asymptotics_check, transition_matrix, validate_generator, DiscreteTransition, GeneratorMatrix,
    MatrixVariant, RatePolicy, RegimeParams, TimeGrid, DEFAULT_TOL,
};
pub use par::{Execution, MonteCarlo};
pub use report::{ConvergenceReport, ReportRow};
pub use rng::SeedSpec;
