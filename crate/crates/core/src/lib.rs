//! Multiple-outcome synthetic control estimation.
//!
//! Builds a synthetic comparison unit as a convex combination of donor
//! units by matching stacked pre-treatment outcomes (optionally demeaned
//! and standardized), estimates per-period treatment effects, and runs
//! permutation ("placebo-in-space") inference on post-to-pre RMSPE
//! ratios. A seeded interactive-fixed-effects Monte Carlo harness
//! reproduces the method's simulation benchmarks.

pub mod estimator;
pub mod inference;
pub mod panel;
pub mod prep;
pub mod sim;
pub mod solver;

pub use estimator::{
    backdate, estimate_effect_on_untreated, estimate_effects, fit_single_outcome,
    fit_synthetic_control, Direction, EffectEstimate, SCFit, Window,
};
pub use inference::{permutation_test, reject_at_alpha, rmspe, PermutationResult, Side};
pub use panel::{load_covariates, load_panel, validate_panel, write_panel, PanelDataset, PanelSchema, ValidationReport};
pub use prep::{assemble_matching_matrix, check_factor_condition, MatchSpec, MatchingMatrix};
pub use sim::{generate_draw, run_cell, run_grid, DgpConfig, DgpDraw, EstimatorKind, GridCell, SimSummary};
pub use solver::{brute_force_weights, project_simplex, solve_simplex_ls, unconstrained_ls_weights, WeightVector};
