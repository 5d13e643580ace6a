//! Permutation ("placebo-in-space") inference.
//!
//! Every unit takes a turn as pseudo-treated with the same match spec;
//! post-to-pre RMSPE ratios are ranked across units (largest = rank 1)
//! and p-values are rank/(J+1). The matching rows are identical for
//! every pseudo-treated choice (rows must be complete for all units),
//! so the reference distribution is exchangeable by construction.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::EstimatorError;
use crate::panel::PanelDataset;
use crate::prep::{assemble_unit_matrix, resolve_cutoff, resolve_outcomes, transformed_series, MatchSpec, PrepError, RowKey};
use crate::solver::{solve_simplex_ls, SolverError, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Pre-treatment RMSPE below this flags a degenerate (effectively
/// perfect) fit whose ratio is undefined; such units rank first.
pub const DEGENERATE_PRE_RMSPE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("all gaps are missing; RMSPE undefined")]
    AllMissing,
    #[error("panel failed validation:\n{0}")]
    InvalidPanel(String),
    #[error("target outcome `{0}` is not among the matching outcomes; its pre-treatment RMSPE would be undefined")]
    UnmatchedTarget(String),
    #[error("unknown outcome `{0}` in permutation result")]
    UnknownOutcome(String),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] Box<EstimatorError>),
}

/// Alternative hypothesis direction for the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    TwoSided,
    /// H₁: τ < 0 — only negative gaps count as divergence.
    Lower,
    /// H₁: τ > 0.
    Upper,
}

impl Side {
    /// Squared contribution of a gap to the post-treatment RMSPE.
    fn contribution(self, gap: f64) -> f64 {
        match self {
            Side::TwoSided => gap * gap,
            Side::Lower if gap < 0.0 => gap * gap,
            Side::Upper if gap > 0.0 => gap * gap,
            _ => 0.0,
        }
    }
}

/// Square root of the mean of squared non-missing gaps.
pub fn rmspe(gaps: &[Option<f64>]) -> Result<f64, InferenceError> {
    let present: Vec<f64> = gaps.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(InferenceError::AllMissing);
    }
    Ok((present.iter().map(|g| g * g).sum::<f64>() / present.len() as f64).sqrt())
}

/// One unit's test statistics for one outcome.
#[derive(Debug, Clone)]
pub struct UnitOutcomeStats {
    pub unit: String,
    pub outcome: String,
    /// Pre-treatment RMSPE on the demeaned-but-unstandardized scale.
    pub pre_rmspe: f64,
    pub post_rmspe: f64,
    /// post/pre; +∞ when the pre-fit is degenerate.
    pub ratio: f64,
    pub degenerate: bool,
    /// Descending rank of `ratio` across units (largest = 1).
    pub rank: usize,
    /// Per-post-period ratios |gap_t|/pre (side-restricted), `None`
    /// where the gap is missing.
    pub per_period: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct PermutationResult {
    pub units: Vec<String>,
    pub treated_unit: String,
    /// Target outcomes, panel order.
    pub outcomes: Vec<String>,
    pub post_periods: Vec<String>,
    /// Unit-major: `stats[i * outcomes.len() + k]`.
    pub stats: Vec<UnitOutcomeStats>,
    /// Treated unit's overall p-value per outcome.
    pub p_overall: Vec<f64>,
    /// `p_per_period[p * outcomes.len() + k]`; `None` where the treated
    /// unit's gap is missing.
    pub p_per_period: Vec<Option<f64>>,
    /// Significance level 3/(J+1) unless overridden by the caller.
    pub alpha: f64,
    pub warnings: Vec<String>,
}

impl PermutationResult {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn stats_for(&self, unit: &str, outcome: &str) -> Option<&UnitOutcomeStats> {
        self.stats.iter().find(|s| s.unit == unit && s.outcome == outcome)
    }

    pub fn treated_rank(&self, outcome: &str) -> Option<usize> {
        self.stats_for(&self.treated_unit, outcome).map(|s| s.rank)
    }
}

/// Refit every unit as pseudo-treated and rank post-to-pre RMSPE ratios.
pub fn permutation_test(
    panel: &PanelDataset,
    spec: &MatchSpec,
    side: Side,
) -> Result<PermutationResult, InferenceError> {
    let report = crate::panel::validate_panel(panel);
    if report.has_errors() {
        return Err(InferenceError::InvalidPanel(report.to_string()));
    }
    for target in &spec.target_outcomes {
        if !spec.match_outcomes.contains(target) {
            return Err(InferenceError::UnmatchedTarget(target.clone()));
        }
    }

    let cutoff_idx = resolve_cutoff(panel, spec)?;
    let targets = resolve_outcomes(panel, &spec.target_outcomes)?;
    let matrix = assemble_unit_matrix(panel, spec)?;
    let n_units = panel.n_units();
    let n_targets = targets.len();
    let post_range: Vec<usize> = (cutoff_idx + 1..panel.n_periods()).collect();

    // Transformed (demeaned or raw) series per target outcome, shared by
    // every pseudo-treated refit.
    let mut series_by_target = Vec::with_capacity(n_targets);
    for &(k, _) in &targets {
        series_by_target.push(transformed_series(panel, k, cutoff_idx, spec.demean)?.0);
    }

    // Row index ranges per target outcome within the matching matrix.
    let row_indices_by_target: Vec<Vec<usize>> = targets
        .iter()
        .map(|&(_, name)| {
            matrix
                .rows
                .iter()
                .enumerate()
                .filter(|(_, key)| matches!(key, RowKey::Outcome { outcome, .. } if outcome == name))
                .map(|(r, _)| r)
                .collect()
        })
        .collect();

    // The J+1 refits are independent; run them in parallel and collect
    // in unit order so reductions stay deterministic.
    let per_unit: Result<Vec<Vec<RawUnitStats>>, InferenceError> = (0..n_units)
        .into_par_iter()
        .map(|i| {
            let m = matrix.matching_for(i);
            let weights = solve_simplex_ls(&m.donor_cols, &m.treated_col, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let w = nalgebra::DVector::from_vec(weights.weights.clone());
            let synth = &m.donor_cols * &w;
            let donor_indices: Vec<usize> = (0..n_units).filter(|&j| j != i).collect();

            let mut out = Vec::with_capacity(n_targets);
            for (target_idx, _) in targets.iter().enumerate() {
                // Pre-treatment RMSPE from matching-row residuals mapped
                // back through the row transform.
                let rows = &row_indices_by_target[target_idx];
                let mut sq = 0.0;
                for &r in rows {
                    let resid = (m.treated_col[r] - synth[r]) * m.transform.row_stats[r].cross_sd;
                    sq += resid * resid;
                }
                let pre = if rows.is_empty() { 0.0 } else { (sq / rows.len() as f64).sqrt() };

                // Post-period gaps on the same scale as the pre residuals.
                let series = &series_by_target[target_idx];
                let mut gaps = Vec::with_capacity(post_range.len());
                for &t in &post_range {
                    let gap = series[i][t].and_then(|y| {
                        let mut acc = 0.0;
                        for (j, &donor) in donor_indices.iter().enumerate() {
                            let wj = weights.weights[j];
                            if wj == 0.0 {
                                continue;
                            }
                            match series[donor][t] {
                                Some(v) => acc += wj * v,
                                None => return None,
                            }
                        }
                        Some(y - acc)
                    });
                    gaps.push(gap);
                }
                out.push(RawUnitStats { pre, gaps });
            }
            Ok(out)
        })
        .collect();
    let per_unit = per_unit?;

    let mut warnings = Vec::new();
    let n_post = post_range.len();
    let mut stats: Vec<UnitOutcomeStats> = Vec::with_capacity(n_units * n_targets);
    for (i, unit_stats) in per_unit.iter().enumerate() {
        for (target_idx, &(_, name)) in targets.iter().enumerate() {
            let raw = &unit_stats[target_idx];
            let degenerate = raw.pre < DEGENERATE_PRE_RMSPE;
            if degenerate {
                warnings.push(format!(
                    "unit `{}` has a degenerate pre-treatment fit for `{}` (pre RMSPE {:.3e}); its ratio is undefined and ranks first",
                    panel.units[i], name, raw.pre
                ));
            }
            let present: Vec<f64> = raw.gaps.iter().flatten().copied().collect();
            let post = if present.is_empty() {
                0.0
            } else {
                (present.iter().map(|g| side.contribution(*g)).sum::<f64>() / present.len() as f64).sqrt()
            };
            let ratio = if degenerate { f64::INFINITY } else { post / raw.pre };
            let per_period: Vec<Option<f64>> = raw
                .gaps
                .iter()
                .map(|g| {
                    g.map(|gap| {
                        if degenerate {
                            f64::INFINITY
                        } else {
                            side.contribution(gap).sqrt() / raw.pre
                        }
                    })
                })
                .collect();
            stats.push(UnitOutcomeStats {
                unit: panel.units[i].clone(),
                outcome: name.to_string(),
                pre_rmspe: raw.pre,
                post_rmspe: post,
                ratio,
                degenerate,
                rank: 0,
                per_period,
            });
        }
    }

    // Descending ranks per outcome: rank = 1 + count of strictly larger
    // ratios. Degenerate (+∞) units tie at rank 1.
    for target_idx in 0..n_targets {
        let ratios: Vec<f64> = (0..n_units).map(|i| stats[i * n_targets + target_idx].ratio).collect();
        for i in 0..n_units {
            let rank = 1 + ratios.iter().filter(|&&r| r > ratios[i]).count();
            stats[i * n_targets + target_idx].rank = rank;
        }
    }

    let treated_idx = panel.treated_index().expect("validated above");
    let p_overall: Vec<f64> = (0..n_targets)
        .map(|k| stats[treated_idx * n_targets + k].rank as f64 / n_units as f64)
        .collect();

    // Per-period p-values: rank the treated unit's per-period ratio
    // across units; a missing donor ratio counts as no divergence (0).
    let mut p_per_period = vec![None; n_post * n_targets];
    for k in 0..n_targets {
        for p in 0..n_post {
            let treated_ratio = match stats[treated_idx * n_targets + k].per_period[p] {
                Some(r) => r,
                None => continue,
            };
            let mut rank = 1;
            for i in 0..n_units {
                if i == treated_idx {
                    continue;
                }
                let other = stats[i * n_targets + k].per_period[p].unwrap_or(0.0);
                if other > treated_ratio {
                    rank += 1;
                }
            }
            p_per_period[p * n_targets + k] = Some(rank as f64 / n_units as f64);
        }
    }

    Ok(PermutationResult {
        units: panel.units.clone(),
        treated_unit: panel.treated_unit.clone(),
        outcomes: targets.iter().map(|&(_, n)| n.to_string()).collect(),
        post_periods: post_range.iter().map(|&t| panel.periods[t].clone()).collect(),
        stats,
        p_overall,
        p_per_period,
        alpha: 3.0 / n_units as f64,
        warnings,
    })
}

struct RawUnitStats {
    pre: f64,
    gaps: Vec<Option<f64>>,
}

/// True when the treated unit's overall ratio ranks within the top
/// ceil(alpha·(J+1)) for `outcome`, at the result's configured alpha.
pub fn reject_at_alpha(result: &PermutationResult, outcome: &str) -> Result<bool, InferenceError> {
    reject_at(result, outcome, result.alpha)
}

/// Rejection decision at an explicit significance level.
pub fn reject_at(result: &PermutationResult, outcome: &str, alpha: f64) -> Result<bool, InferenceError> {
    let rank = result
        .treated_rank(outcome)
        .ok_or_else(|| InferenceError::UnknownOutcome(outcome.to_string()))?;
    // Guard the ceiling against float noise: 0.1 * 30 is 3.0000000000000004.
    let threshold = (alpha * result.n_units() as f64 - 1e-9).ceil();
    Ok(rank as f64 <= threshold)
}
