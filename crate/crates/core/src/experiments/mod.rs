//! Sweeps, the exact finite-support check of the synthetic-data risk bound,
//! the bound calculators and the bound ledger.

pub mod bounds;
pub mod ledger;
pub mod risk_bound;
pub mod sweep;

pub use bounds::{
    anchor_post_training_bound, ggmi_upper_bound, mi_generalization_bound, synthetic_mi_bound,
    synthetic_post_training_bound, BoundParams, SymbolicBounds, SyntheticBound,
};
pub use ledger::{build_bound_ledger, measure, BoundLedger, EstimatorBudgets, Measured, MeasuredProxies, RunOutputs};
pub use risk_bound::{verify_risk_bound, verify_risk_bound_with, RiskBoundReport, RiskTrial, RiskTrialConfig};
pub use sweep::{
    run_kl_gap_sweep, run_kl_gap_sweep_with, run_round, simulate_and_fit, spearman, RoundArtifacts, RoundResult, SweepResult,
    SweepSpec, SweptVariable, ValueSummary, SWEEP_REG_COVAR,
};
