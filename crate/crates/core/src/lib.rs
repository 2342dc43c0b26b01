//! EM-based spike-and-slab variable selection for binary responses.
//!
//! Two engines share one E-step: a logistic engine whose β-step is solved by
//! proximal stochastic dual coordinate ascent, and a probit engine that imputes
//! truncated-normal latent responses and solves a generalized ridge problem
//! (exactly, or with squared-loss SDCA). A stochastic search sampler with a
//! point-mass spike, a correlated design generator and a simulation harness
//! complete the crate.

pub use nalgebra;

pub mod datagen;
pub mod error;
pub mod harness;
pub mod estep;
pub mod linalg;
pub mod logistic;
pub mod numeric;
pub mod probit;
pub mod sdca;
pub mod ssvs;
pub mod types;

pub use datagen::{
    generate_binary_response, generate_design, generate_replicate_betas, DesignSpec, ResponseSpec,
};
pub use error::{EmvsError, Result};
pub use harness::{
    run_path, run_ssvs_comparison, run_study, selection_metrics, Model, ModelConfig, Nu0Grid,
    PathResult, SelectionMetrics, StudyConfig, StudyModel, StudyTable,
};
pub use logistic::{fit_logistic, predict_logistic, LogisticEmConfig, PenaltyMode};
pub use probit::{fit_probit, predict_probit, BetaSolver, ProbitEmConfig};
pub use sdca::SolverConfig;
pub use ssvs::{run_ssvs_probit, SsvsConfig, SsvsResult};
pub use types::{
    recode, standardize, validate_dataset, ColumnStats, Dataset, EmState, FitResult, LabelCoding,
    SpikeSlabHyper,
};
