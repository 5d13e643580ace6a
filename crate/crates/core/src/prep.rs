//! Demeaning, per-variable standardization, and assembly of the stacked
//! matching matrix.
//!
//! Matching variables are the (outcome, period) cells at or before the
//! cutoff that are observed for every unit, stacked over outcomes, plus
//! optional covariate rows. Demeaning (subtracting each unit's own
//! pre-cutoff mean, per outcome) happens before standardization (per-row
//! cross-unit z-scoring): demeaning operates per unit over time,
//! standardization per variable over units.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::panel::{label_cmp, PanelDataset};

/// Rows with cross-unit standard deviation below this are treated as
/// zero-variance and dropped when standardizing.
const ZERO_VARIANCE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("unknown matching outcome `{outcome}`; panel outcomes are: {known}")]
    UnknownOutcome { outcome: String, known: String },
    #[error("cutoff `{0}` not found among panel periods")]
    UnknownCutoff(String),
    #[error("matching cutoff `{spec}` is after the panel cutoff `{panel}`")]
    CutoffAfterPanel { spec: String, panel: String },
    #[error("no matching outcomes given")]
    NoMatchOutcomes,
    #[error("insufficient pre-treatment observations for demeaning: unit `{unit}`, outcome `{outcome}` has {found} non-missing pre-cutoff value(s), need at least 2")]
    InsufficientPreTreatment {
        unit: String,
        outcome: String,
        found: usize,
    },
    #[error("covariate matching requested but the panel has no covariates")]
    NoCovariates,
    #[error("treated unit `{0}` not found among panel units")]
    UnknownTreated(String),
    #[error("no usable matching rows after filtering (dropped {dropped})")]
    NoUsableRows { dropped: usize },
    #[error("series has {found} non-missing pre-cutoff value(s), need at least 2")]
    ShortSeries { found: usize },
}

/// Which cells form the matching variables and how they are transformed.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSpec {
    /// Outcomes whose pre-cutoff cells are matched on.
    pub match_outcomes: Vec<String>,
    /// Last matching period; at most the panel cutoff (earlier for backdating).
    pub cutoff: String,
    /// Append covariate rows to the matching variables.
    pub use_covariates: bool,
    /// Subtract each unit's own pre-cutoff mean per outcome.
    pub demean: bool,
    /// Rescale every matching row to cross-unit mean 0, sd 1.
    pub standardize: bool,
    /// Outcomes on which effects are reported; may differ from `match_outcomes`.
    pub target_outcomes: Vec<String>,
}

/// Identifies one matching row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RowKey {
    Outcome { outcome: String, period: String },
    Covariate { name: String },
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKey::Outcome { outcome, period } => write!(f, "{outcome}@{period}"),
            RowKey::Covariate { name } => write!(f, "covariate:{name}"),
        }
    }
}

/// Cross-unit statistics recorded per kept row so residuals and gaps can
/// be mapped back off the standardized scale. Identity (0, 1) when
/// standardization is off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowStats {
    pub cross_mean: f64,
    pub cross_sd: f64,
}

/// Pre-cutoff mean subtracted from one unit's series in one outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PreMean {
    pub unit: String,
    pub outcome: String,
    pub mean: f64,
}

/// Record of every affine transformation applied while assembling the
/// matrix, sufficient to recompute gaps on the original scale.
#[derive(Debug, Clone, Default)]
pub struct TransformLog {
    /// Aligned with `MatchingMatrix::rows`.
    pub row_stats: Vec<RowStats>,
    /// One entry per (unit, matched outcome) when demeaning is on.
    pub pre_means: Vec<PreMean>,
    pub demeaned: bool,
    pub standardized: bool,
}

impl TransformLog {
    pub fn pre_mean(&self, unit: &str, outcome: &str) -> Option<f64> {
        self.pre_means
            .iter()
            .find(|p| p.unit == unit && p.outcome == outcome)
            .map(|p| p.mean)
    }

    /// Long-format CSV for audit: one `row` record per kept matching row
    /// and one `pre_mean` record per (unit, outcome).
    pub fn to_csv(&self, rows: &[RowKey]) -> String {
        let mut out = String::from("record,outcome,period,covariate,unit,pre_mean,cross_mean,cross_sd\n");
        for (key, stats) in rows.iter().zip(&self.row_stats) {
            match key {
                RowKey::Outcome { outcome, period } => out.push_str(&format!(
                    "row,{outcome},{period},,,,{},{}\n",
                    stats.cross_mean, stats.cross_sd
                )),
                RowKey::Covariate { name } => out.push_str(&format!(
                    "row,,,{name},,,{},{}\n",
                    stats.cross_mean, stats.cross_sd
                )),
            }
        }
        for pm in &self.pre_means {
            out.push_str(&format!("pre_mean,{},,,{},{},,\n", pm.outcome, pm.unit, pm.mean));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    /// At least one unit is missing the cell; named unit is the first.
    Missing { unit: String },
    /// Cross-unit variance too small to standardize.
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRow {
    pub key: RowKey,
    pub reason: DropReason,
}

/// Stacked matching variables for one treated unit against its donors.
#[derive(Debug, Clone)]
pub struct MatchingMatrix {
    pub rows: Vec<RowKey>,
    /// Vector `b`: transformed treated-unit values, one per row.
    pub treated_col: DVector<f64>,
    /// Matrix `A` (#rows × J): transformed donor values, donor order
    /// equals `donors`.
    pub donor_cols: DMatrix<f64>,
    pub donors: Vec<String>,
    pub transform: TransformLog,
    pub dropped: Vec<DroppedRow>,
}

impl MatchingMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_donors(&self) -> usize {
        self.donors.len()
    }
}

/// Internal unit-symmetric form: transformed values for *all* units.
/// The permutation test peels off one pseudo-treated column at a time.
#[derive(Debug, Clone)]
pub(crate) struct UnitMatrix {
    pub rows: Vec<RowKey>,
    /// #rows × n_units, column order = panel unit order.
    pub values: DMatrix<f64>,
    pub units: Vec<String>,
    pub transform: TransformLog,
    pub dropped: Vec<DroppedRow>,
}

impl UnitMatrix {
    pub fn matching_for(&self, treated_idx: usize) -> MatchingMatrix {
        let n_rows = self.values.nrows();
        let n_units = self.values.ncols();
        let treated_col = DVector::from_fn(n_rows, |r, _| self.values[(r, treated_idx)]);
        let mut donor_cols = DMatrix::zeros(n_rows, n_units - 1);
        let mut donors = Vec::with_capacity(n_units - 1);
        let mut j = 0;
        for i in 0..n_units {
            if i == treated_idx {
                continue;
            }
            for r in 0..n_rows {
                donor_cols[(r, j)] = self.values[(r, i)];
            }
            donors.push(self.units[i].clone());
            j += 1;
        }
        MatchingMatrix {
            rows: self.rows.clone(),
            treated_col,
            donor_cols,
            donors,
            transform: self.transform.clone(),
            dropped: self.dropped.clone(),
        }
    }
}

/// Subtract the mean of the first `n_pre` non-missing entries from an
/// entire series (pre and post). Missing entries stay missing.
pub fn demean_unit_series(series: &[Option<f64>], n_pre: usize) -> Result<Vec<Option<f64>>, PrepError> {
    let pre: Vec<f64> = series.iter().take(n_pre).flatten().copied().collect();
    if pre.len() < 2 {
        return Err(PrepError::ShortSeries { found: pre.len() });
    }
    let mean = pre.iter().sum::<f64>() / pre.len() as f64;
    Ok(series.iter().map(|v| v.map(|x| x - mean)).collect())
}

/// Rescale each row to cross-unit mean 0, sd 1 (population sd over all
/// units). Returns the kept row indices with their (mean, sd); rows with
/// ~zero variance are omitted from the result.
pub fn standardize_rows(rows: &[Vec<f64>]) -> (Vec<(usize, Vec<f64>, RowStats)>, Vec<usize>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd < ZERO_VARIANCE_TOL {
            dropped.push(idx);
            continue;
        }
        let transformed = row.iter().map(|v| (v - mean) / sd).collect();
        kept.push((idx, transformed, RowStats { cross_mean: mean, cross_sd: sd }));
    }
    (kept, dropped)
}

pub(crate) fn resolve_outcomes<'a>(
    panel: &'a PanelDataset,
    requested: &[String],
) -> Result<Vec<(usize, &'a str)>, PrepError> {
    if requested.is_empty() {
        return Err(PrepError::NoMatchOutcomes);
    }
    for o in requested {
        if panel.outcome_index(o).is_none() {
            return Err(PrepError::UnknownOutcome {
                outcome: o.clone(),
                known: panel.outcomes.join(", "),
            });
        }
    }
    // Panel outcome order is canonical; the spec's list is a set.
    Ok(panel
        .outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| requested.contains(o))
        .map(|(k, o)| (k, o.as_str()))
        .collect())
}

pub(crate) fn resolve_cutoff(panel: &PanelDataset, spec: &MatchSpec) -> Result<usize, PrepError> {
    let cutoff_idx = panel
        .period_index(&spec.cutoff)
        .ok_or_else(|| PrepError::UnknownCutoff(spec.cutoff.clone()))?;
    if label_cmp(&spec.cutoff, &panel.cutoff) == std::cmp::Ordering::Greater {
        return Err(PrepError::CutoffAfterPanel {
            spec: spec.cutoff.clone(),
            panel: panel.cutoff.clone(),
        });
    }
    Ok(cutoff_idx)
}

/// Demeaned series (or raw when `demean` is false) for every unit in one
/// outcome, plus the pre-means that were subtracted.
pub(crate) fn transformed_series(
    panel: &PanelDataset,
    outcome_idx: usize,
    cutoff_idx: usize,
    demean: bool,
) -> Result<(Vec<Vec<Option<f64>>>, Vec<f64>), PrepError> {
    let n_pre = cutoff_idx + 1;
    let mut all = Vec::with_capacity(panel.n_units());
    let mut means = Vec::with_capacity(panel.n_units());
    for i in 0..panel.n_units() {
        let series: Vec<Option<f64>> = (0..panel.n_periods()).map(|t| panel.value(i, t, outcome_idx)).collect();
        if demean {
            let pre: Vec<f64> = series.iter().take(n_pre).flatten().copied().collect();
            if pre.len() < 2 {
                return Err(PrepError::InsufficientPreTreatment {
                    unit: panel.units[i].clone(),
                    outcome: panel.outcomes[outcome_idx].clone(),
                    found: pre.len(),
                });
            }
            let mean = pre.iter().sum::<f64>() / pre.len() as f64;
            all.push(series.iter().map(|v| v.map(|x| x - mean)).collect());
            means.push(mean);
        } else {
            all.push(series);
            means.push(0.0);
        }
    }
    Ok((all, means))
}

pub(crate) fn assemble_unit_matrix(panel: &PanelDataset, spec: &MatchSpec) -> Result<UnitMatrix, PrepError> {
    let cutoff_idx = resolve_cutoff(panel, spec)?;
    let outcomes = resolve_outcomes(panel, &spec.match_outcomes)?;
    let n_units = panel.n_units();

    let mut keys: Vec<RowKey> = Vec::new();
    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped: Vec<DroppedRow> = Vec::new();
    let mut pre_means: Vec<PreMean> = Vec::new();

    for &(k, outcome) in &outcomes {
        let (series, means) = transformed_series(panel, k, cutoff_idx, spec.demean)?;
        if spec.demean {
            for (i, mean) in means.iter().enumerate() {
                pre_means.push(PreMean {
                    unit: panel.units[i].clone(),
                    outcome: outcome.to_string(),
                    mean: *mean,
                });
            }
        }
        for t in 0..=cutoff_idx {
            let key = RowKey::Outcome {
                outcome: outcome.to_string(),
                period: panel.periods[t].clone(),
            };
            let cell: Vec<Option<f64>> = (0..n_units).map(|i| series[i][t]).collect();
            match cell.iter().position(|v| v.is_none()) {
                Some(i) => dropped.push(DroppedRow {
                    key,
                    reason: DropReason::Missing { unit: panel.units[i].clone() },
                }),
                None => {
                    keys.push(key);
                    raw_rows.push(cell.into_iter().map(|v| v.unwrap()).collect());
                }
            }
        }
    }

    if spec.use_covariates {
        let cov = panel.covariates.as_ref().ok_or(PrepError::NoCovariates)?;
        for (r, name) in cov.names.iter().enumerate() {
            let key = RowKey::Covariate { name: name.clone() };
            let cell: Vec<Option<f64>> = (0..n_units).map(|i| cov.get(i, r)).collect();
            match cell.iter().position(|v| v.is_none()) {
                Some(i) => dropped.push(DroppedRow {
                    key,
                    reason: DropReason::Missing { unit: panel.units[i].clone() },
                }),
                None => {
                    keys.push(key);
                    raw_rows.push(cell.into_iter().map(|v| v.unwrap()).collect());
                }
            }
        }
    }

    let (final_keys, final_rows, row_stats) = if spec.standardize {
        let (kept, zero_var) = standardize_rows(&raw_rows);
        for idx in zero_var {
            dropped.push(DroppedRow {
                key: keys[idx].clone(),
                reason: DropReason::ZeroVariance,
            });
        }
        let mut fk = Vec::with_capacity(kept.len());
        let mut fr = Vec::with_capacity(kept.len());
        let mut st = Vec::with_capacity(kept.len());
        for (idx, row, stats) in kept {
            fk.push(keys[idx].clone());
            fr.push(row);
            st.push(stats);
        }
        (fk, fr, st)
    } else {
        let stats = vec![RowStats { cross_mean: 0.0, cross_sd: 1.0 }; raw_rows.len()];
        (keys, raw_rows, stats)
    };

    if final_rows.is_empty() {
        return Err(PrepError::NoUsableRows { dropped: dropped.len() });
    }

    let n_rows = final_rows.len();
    let values = DMatrix::from_fn(n_rows, n_units, |r, c| final_rows[r][c]);

    Ok(UnitMatrix {
        rows: final_keys,
        values,
        units: panel.units.clone(),
        transform: TransformLog {
            row_stats,
            pre_means,
            demeaned: spec.demean,
            standardized: spec.standardize,
        },
        dropped,
    })
}

/// Build the stacked matching matrix for the panel's treated unit.
///
/// Row order is deterministic: outcomes in panel order, periods in
/// ascending order within each outcome, covariates last. Rows missing
/// for any unit are dropped and logged, matching the requirement that
/// the fit condition hold for every unit.
pub fn assemble_matching_matrix(panel: &PanelDataset, spec: &MatchSpec) -> Result<MatchingMatrix, PrepError> {
    let unit_matrix = assemble_unit_matrix(panel, spec)?;
    let treated_idx = panel
        .treated_index()
        .ok_or_else(|| PrepError::UnknownTreated(panel.treated_unit.clone()))?;
    Ok(unit_matrix.matching_for(treated_idx))
}

/// Conditioning diagnostic: smallest eigenvalue of (1/#rows)·GᵀG where G
/// is the donor block. Near-zero values mean near-collinear donors.
pub fn check_factor_condition(matrix: &MatchingMatrix) -> f64 {
    let g = &matrix.donor_cols;
    let gram = g.transpose() * g / g.nrows() as f64;
    let eigen = SymmetricEigen::new(gram);
    eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn panel_3x4x3(values: impl Fn(usize, usize, usize) -> Option<f64>) -> PanelDataset {
        let units: Vec<String> = (0..3).map(|i| format!("u{i}")).collect();
        let periods: Vec<String> = (1..=4).map(|t| t.to_string()).collect();
        let outcomes: Vec<String> = (0..3).map(|k| format!("y{k}")).collect();
        let mut table = Vec::new();
        for i in 0..3 {
            for t in 0..4 {
                for k in 0..3 {
                    table.push(values(i, t, k));
                }
            }
        }
        PanelDataset::from_parts(units, periods, outcomes, table, None, "u0".into(), "4".into()).unwrap()
    }

    fn spec_all(cutoff: &str) -> MatchSpec {
        MatchSpec {
            match_outcomes: vec!["y0".into(), "y1".into(), "y2".into()],
            cutoff: cutoff.into(),
            use_covariates: false,
            demean: false,
            standardize: false,
            target_outcomes: vec!["y0".into()],
        }
    }

    #[test]
    fn demean_basic() {
        let out = demean_unit_series(&[Some(1.0), Some(2.0), Some(3.0)], 2).unwrap();
        assert_eq!(out, vec![Some(-0.5), Some(0.5), Some(1.5)]);
    }

    #[test]
    fn demean_constant_series() {
        let out = demean_unit_series(&[Some(5.0), Some(5.0), Some(5.0)], 3).unwrap();
        assert_eq!(out, vec![Some(0.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn demean_skips_missing() {
        let out = demean_unit_series(&[Some(1.0), None, Some(3.0), Some(4.0)], 3).unwrap();
        assert_eq!(out, vec![Some(-1.0), None, Some(1.0), Some(2.0)]);
    }

    #[test]
    fn demean_too_few_pre_entries() {
        let err = demean_unit_series(&[Some(1.0), None, Some(3.0)], 2).unwrap_err();
        assert!(matches!(err, PrepError::ShortSeries { found: 1 }));
    }

    #[test]
    fn standardize_basic() {
        let (kept, dropped) = standardize_rows(&[vec![0.0, 1.0, 2.0]]);
        assert!(dropped.is_empty());
        let (_, row, stats) = &kept[0];
        assert_abs_diff_eq!(row[0], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(row[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(row[2], 1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.cross_mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.cross_sd, 0.816496580927726, epsilon = 1e-12);
    }

    #[test]
    fn standardize_is_idempotent_on_normalized_input() {
        let (kept, _) = standardize_rows(&[vec![0.0, 1.0, 2.0]]);
        let row = kept[0].1.clone();
        let (kept2, _) = standardize_rows(&[row.clone()]);
        for (a, b) in row.iter().zip(&kept2[0].1) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_drops_constant_row() {
        let (kept, dropped) = standardize_rows(&[vec![7.0, 7.0, 7.0]]);
        assert!(kept.is_empty());
        assert_eq!(dropped, vec![0]);
    }

    #[test]
    fn assemble_full_panel_has_all_rows() {
        let panel = panel_3x4x3(|i, t, k| Some((i + 2 * t + 3 * k) as f64 + (i * t) as f64 * 0.1));
        let matrix = assemble_matching_matrix(&panel, &spec_all("4")).unwrap();
        assert_eq!(matrix.n_rows(), 12);
        assert_eq!(matrix.n_donors(), 2);
        assert_eq!(matrix.donors, vec!["u1", "u2"]);
        assert!(matrix.dropped.is_empty());
    }

    #[test]
    fn assemble_drops_missing_row_and_logs() {
        let panel = panel_3x4x3(|i, t, k| {
            if i == 1 && t == 2 && k == 1 {
                None
            } else {
                Some((i + 2 * t + 3 * k) as f64 + (i * t) as f64 * 0.1)
            }
        });
        let matrix = assemble_matching_matrix(&panel, &spec_all("4")).unwrap();
        assert_eq!(matrix.n_rows(), 11);
        assert_eq!(matrix.dropped.len(), 1);
        assert_eq!(
            matrix.dropped[0].key,
            RowKey::Outcome { outcome: "y1".into(), period: "3".into() }
        );
        assert_eq!(matrix.dropped[0].reason, DropReason::Missing { unit: "u1".into() });
    }

    #[test]
    fn treated_duplicate_of_donor_gives_equal_columns() {
        // Treated (u0) identical to donor u1; demean+standardize on.
        let panel = panel_3x4x3(|i, t, k| {
            let base = (t as f64 + 1.0) * (k as f64 + 1.0);
            match i {
                0 | 1 => Some(base + 10.0),
                _ => Some(base * 1.7 - 3.0 + (t as f64) * (k as f64) * 0.25),
            }
        });
        let mut spec = spec_all("4");
        spec.demean = true;
        spec.standardize = true;
        let matrix = assemble_matching_matrix(&panel, &spec).unwrap();
        for r in 0..matrix.n_rows() {
            assert_abs_diff_eq!(matrix.treated_col[r], matrix.donor_cols[(r, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn standardized_rows_have_mean_zero_sd_one() {
        let panel = panel_3x4x3(|i, t, k| Some((i * i + t * 2 + k) as f64 * 1.3 + i as f64 * 0.7));
        let mut spec = spec_all("4");
        spec.standardize = true;
        let matrix = assemble_matching_matrix(&panel, &spec).unwrap();
        for r in 0..matrix.n_rows() {
            let mut vals = vec![matrix.treated_col[r]];
            for j in 0..matrix.n_donors() {
                vals.push(matrix.donor_cols[(r, j)]);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn demeaning_removes_unit_levels() {
        let base = |i: usize, t: usize, k: usize| (t as f64).sin() * (k + 1) as f64 + (i * t) as f64 * 0.21;
        let shifted = |i: usize, t: usize, k: usize| {
            base(i, t, k) + if k == 1 { [3.0, -11.0, 40.0][i] } else { 0.0 }
        };
        let p1 = panel_3x4x3(|i, t, k| Some(base(i, t, k)));
        let p2 = panel_3x4x3(|i, t, k| Some(shifted(i, t, k)));
        let mut spec = spec_all("4");
        spec.demean = true;
        let m1 = assemble_matching_matrix(&p1, &spec).unwrap();
        let m2 = assemble_matching_matrix(&p2, &spec).unwrap();
        for r in 0..m1.n_rows() {
            assert_abs_diff_eq!(m1.treated_col[r], m2.treated_col[r], epsilon = 1e-12);
            for j in 0..m1.n_donors() {
                assert_abs_diff_eq!(m1.donor_cols[(r, j)], m2.donor_cols[(r, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let panel = panel_3x4x3(|i, t, k| Some((i + t + k) as f64 * 1.1 + (i * k) as f64));
        let mut spec = spec_all("4");
        spec.demean = true;
        spec.standardize = true;
        let m1 = assemble_matching_matrix(&panel, &spec).unwrap();
        let m2 = assemble_matching_matrix(&panel, &spec).unwrap();
        assert_eq!(m1.rows, m2.rows);
        assert_eq!(m1.treated_col, m2.treated_col);
        assert_eq!(m1.donor_cols, m2.donor_cols);
    }

    #[test]
    fn unknown_outcome_is_rejected() {
        let panel = panel_3x4x3(|_, t, k| Some((t + k) as f64));
        let mut spec = spec_all("4");
        spec.match_outcomes = vec!["nope".into()];
        let err = assemble_matching_matrix(&panel, &spec).unwrap_err();
        assert!(err.to_string().contains("nope"));
        assert!(err.to_string().contains("y0"));
    }

    #[test]
    fn factor_condition_zero_for_duplicated_donor() {
        // Donors u1 and u2 identical: Gram is singular.
        let panel = panel_3x4x3(|i, t, k| {
            let v = (2 * t + 3 * k) as f64 + (t * t) as f64 * 0.3;
            match i {
                0 => Some(v * 2.0 + 1.0),
                _ => Some(v),
            }
        });
        let matrix = assemble_matching_matrix(&panel, &spec_all("4")).unwrap();
        let lambda_min = check_factor_condition(&matrix);
        assert!(lambda_min.abs() < 1e-10, "{lambda_min}");
    }

    #[test]
    fn factor_condition_positive_for_generic_donors() {
        let panel = panel_3x4x3(|i, t, k| Some(((i + 1) * (t + 1)) as f64 + ((k + i) as f64).sqrt() * 3.0));
        let matrix = assemble_matching_matrix(&panel, &spec_all("4")).unwrap();
        assert!(check_factor_condition(&matrix) > 1e-8);
    }

    #[test]
    fn cutoff_after_panel_cutoff_rejected() {
        let mut panel = panel_3x4x3(|i, t, k| Some((i + t + k) as f64));
        panel.cutoff = "2".into();
        let err = assemble_matching_matrix(&panel, &spec_all("3")).unwrap_err();
        assert!(matches!(err, PrepError::CutoffAfterPanel { .. }));
    }
}
