//! Gaussian-mixture laboratory for studying synthetic-data generation.
//!
//! The crate simulates a ground-truth mixture, a generative mixture that
//! extends it, anchor and synthetic samples, fits mixtures by EM, estimates
//! KL divergence, entropy, total variation and HSIC, and evaluates
//! information-theoretic generalization-bound formulas.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod em;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod generation;
pub mod gmm;
pub mod io;
pub mod seed;

pub use em::{fit_gmm, responsibilities, FitConfig, FittedGmm, InitMethod};
pub use error::{Error, Result};
pub use estimators::{delta_h, hsic, mc_entropy, mc_kl, tv_distance, HsicResult, McEstimate, TvMethod};
pub use generation::{
    build_gt_gmm, build_model_m, pushforward_log_pdf, sample_anchor, sample_synthetic, AffineTransform,
    GenerationConfig,
};
pub use gmm::{gaussian_entropy, gaussian_kl, DatasetMatrix, GaussianComponent, Gmm, Provenance};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
