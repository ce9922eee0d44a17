//! Causal discovery between heavy-tailed variables.
//!
//! The crate simulates linear structural causal models with regularly varying
//! noise, estimates causal tail coefficients non-parametrically and through
//! (covariate-conditional) generalized Pareto margins, and tests for a
//! directed effect with a pairwise permutation scheme. An ingestion layer
//! aligns real daily series with confounder covariates into analysable pairs.

pub mod error;
pub mod evt;
pub mod ingest;
pub mod optim;
pub mod permtest;
pub mod rng;
pub mod scm;
pub mod stats;
pub mod tail;

pub use error::{Error, Result};
pub use evt::{CorrectionSpec, FitConfig, GpdFit, GpdParams, HybridCdf, Link};
pub use permtest::{run_test, TestResult, TestSpec};
pub use scm::{CausalConfiguration, CausalVerdict, ConfigLabel, Lscm, LscmSpec, NoiseSpec, SimMatrix};
pub use tail::{estimate, EstimatorConfig, GammaEstimate, KRule, PairedSample, Variant};
