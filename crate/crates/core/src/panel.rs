//! Data model, CSV ingestion, and structural validation for
//! multi-outcome panels.
//!
//! Panels are long-format: one observation row per (unit, period,
//! outcome). Missing cells are first-class and never imputed; mixed
//! observation frequencies show up as missingness at non-observed
//! periods. Period labels are opaque sortable strings (ISO dates or
//! integer indices); the library only ever orders them and compares
//! against the treatment cutoff.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed CSV row: {message}")]
    Malformed {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: missing required column `{column}` (header has: {header})")]
    MissingColumn {
        path: String,
        column: String,
        header: String,
    },
    #[error("{path}:{line}: non-numeric value `{value}` for ({unit}, {period}, {outcome})")]
    NonNumericValue {
        path: String,
        line: u64,
        value: String,
        unit: String,
        period: String,
        outcome: String,
    },
    #[error("{path}:{line}: duplicate observation for ({unit}, {period}, {outcome})")]
    DuplicateObservation {
        path: String,
        line: u64,
        unit: String,
        period: String,
        outcome: String,
    },
    #[error("{path}:{line}: duplicate covariate value for ({unit}, {covariate})")]
    DuplicateCovariate {
        path: String,
        line: u64,
        unit: String,
        covariate: String,
    },
    #[error("{path}:{line}: covariate row references unknown unit `{unit}`")]
    UnknownCovariateUnit {
        path: String,
        line: u64,
        unit: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
    #[error("invalid panel: {0}")]
    Invalid(String),
}

/// Column-name mapping for long-format panel CSVs.
#[derive(Debug, Clone)]
pub struct PanelSchema {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub value: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            value: "value".into(),
        }
    }
}

/// Per-unit observed predictors, aligned with `PanelDataset::units`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    /// Unit-major: `values[i * names.len() + r]`.
    pub values: Vec<Option<f64>>,
}

impl CovariateTable {
    pub fn get(&self, unit_idx: usize, cov_idx: usize) -> Option<f64> {
        self.values[unit_idx * self.names.len() + cov_idx]
    }
}

/// Units × periods × outcomes observation table with treatment
/// assignment. Immutable after construction; safe to share across
/// threads by reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub units: Vec<String>,
    pub periods: Vec<String>,
    pub outcomes: Vec<String>,
    /// `values[(i * periods.len() + t) * outcomes.len() + k]`; `None` = missing.
    pub values: Vec<Option<f64>>,
    pub covariates: Option<CovariateTable>,
    pub treated_unit: String,
    /// Last pre-treatment period.
    pub cutoff: String,
}

impl PanelDataset {
    /// Trusted constructor used by generators and tests. Checks
    /// identifier uniqueness and period ordering but preserves the
    /// given unit/outcome order.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        units: Vec<String>,
        periods: Vec<String>,
        outcomes: Vec<String>,
        values: Vec<Option<f64>>,
        covariates: Option<CovariateTable>,
        treated_unit: String,
        cutoff: String,
    ) -> Result<Self, PanelError> {
        if values.len() != units.len() * periods.len() * outcomes.len() {
            return Err(PanelError::Invalid(format!(
                "value table has {} cells, expected {}",
                values.len(),
                units.len() * periods.len() * outcomes.len()
            )));
        }
        check_unique(&units, "unit")?;
        check_unique(&periods, "period")?;
        check_unique(&outcomes, "outcome")?;
        if periods.windows(2).any(|w| label_cmp(&w[0], &w[1]) != Ordering::Less) {
            return Err(PanelError::Invalid("periods are not strictly increasing".into()));
        }
        if let Some(cov) = &covariates {
            if cov.values.len() != units.len() * cov.names.len() {
                return Err(PanelError::Invalid("covariate table shape mismatch".into()));
            }
        }
        Ok(Self { units, periods, outcomes, values, covariates, treated_unit, cutoff })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn value(&self, unit_idx: usize, period_idx: usize, outcome_idx: usize) -> Option<f64> {
        self.values[(unit_idx * self.periods.len() + period_idx) * self.outcomes.len() + outcome_idx]
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn period_index(&self, period: &str) -> Option<usize> {
        self.periods.iter().position(|p| p == period)
    }

    pub fn outcome_index(&self, outcome: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == outcome)
    }

    pub fn treated_index(&self) -> Option<usize> {
        self.unit_index(&self.treated_unit)
    }

    pub fn cutoff_index(&self) -> Option<usize> {
        self.period_index(&self.cutoff)
    }

    /// Donor units (everything except the treated unit), in unit order.
    pub fn donors(&self) -> Vec<String> {
        self.units.iter().filter(|u| **u != self.treated_unit).cloned().collect()
    }

    /// Count of non-missing cells.
    pub fn n_observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<(), PanelError> {
    let mut seen = HashMap::new();
    for l in labels {
        if seen.insert(l, ()).is_some() {
            return Err(PanelError::Invalid(format!("duplicate {what} identifier `{l}`")));
        }
    }
    Ok(())
}

/// Total order on period/unit labels: integer labels compare
/// numerically (so "2" < "10"), everything else lexicographically,
/// numeric labels before non-numeric ones.
pub fn label_cmp(a: &str, b: &str) -> Ordering {
    fn key(s: &str) -> (u8, i64) {
        match s.trim().parse::<i64>() {
            Ok(n) => (0, n),
            Err(_) => (1, 0),
        }
    }
    key(a).cmp(&key(b)).then_with(|| a.cmp(b))
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Load a long-format panel CSV with columns mapped by `schema`.
///
/// Empty value fields are missing cells. Units, periods, and outcomes
/// are all sorted by [`label_cmp`], so the result is independent of row
/// order in the file.
pub fn load_panel(
    path: &Path,
    schema: &PanelSchema,
    treated_unit: &str,
    cutoff: &str,
) -> Result<PanelDataset, PanelError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| csv_error(&path_str, e))?
        .clone();
    let col = |name: &str| -> Result<usize, PanelError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn {
                path: path_str.clone(),
                column: name.to_string(),
                header: headers.iter().collect::<Vec<_>>().join(","),
            })
    };
    let (ui, pi, oi, vi) = (col(&schema.unit)?, col(&schema.period)?, col(&schema.outcome)?, col(&schema.value)?);

    // (unit, period, outcome) -> (value, line) with duplicate detection
    let mut cells: HashMap<(String, String, String), (Option<f64>, u64)> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&path_str, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| -> Result<&str, PanelError> {
            record.get(idx).ok_or_else(|| PanelError::Malformed {
                path: path_str.clone(),
                line,
                message: format!("expected at least {} fields, found {}", idx + 1, record.len()),
            })
        };
        let unit = field(ui)?.trim().to_string();
        let period = field(pi)?.trim().to_string();
        let outcome = field(oi)?.trim().to_string();
        let raw = field(vi)?.trim();
        let value = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| PanelError::NonNumericValue {
                path: path_str.clone(),
                line,
                value: raw.to_string(),
                unit: unit.clone(),
                period: period.clone(),
                outcome: outcome.clone(),
            })?)
        };
        let key = (unit, period, outcome);
        if cells.contains_key(&key) {
            return Err(PanelError::DuplicateObservation {
                path: path_str,
                line,
                unit: key.0,
                period: key.1,
                outcome: key.2,
            });
        }
        cells.insert(key, (value, line));
    }
    if cells.is_empty() {
        return Err(PanelError::Empty { path: path_str });
    }

    let mut units: Vec<String> = Vec::new();
    let mut periods: Vec<String> = Vec::new();
    let mut outcomes: Vec<String> = Vec::new();
    for (u, p, o) in cells.keys() {
        if !units.contains(u) {
            units.push(u.clone());
        }
        if !periods.contains(p) {
            periods.push(p.clone());
        }
        if !outcomes.contains(o) {
            outcomes.push(o.clone());
        }
    }
    units.sort_by(|a, b| label_cmp(a, b));
    periods.sort_by(|a, b| label_cmp(a, b));
    outcomes.sort_by(|a, b| label_cmp(a, b));

    let mut values = vec![None; units.len() * periods.len() * outcomes.len()];
    for ((u, p, o), (v, _)) in &cells {
        let i = units.iter().position(|x| x == u).unwrap();
        let t = periods.iter().position(|x| x == p).unwrap();
        let k = outcomes.iter().position(|x| x == o).unwrap();
        values[(i * periods.len() + t) * outcomes.len() + k] = *v;
    }

    PanelDataset::from_parts(
        units,
        periods,
        outcomes,
        values,
        None,
        treated_unit.to_string(),
        cutoff.to_string(),
    )
}

fn csv_error(path: &str, e: csv::Error) -> PanelError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    PanelError::Malformed {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Load a (unit, covariate, value) CSV and attach it to `panel`,
/// returning a new dataset. Units must already exist in the panel;
/// unmentioned (unit, covariate) pairs are missing.
pub fn load_covariates(
    panel: &PanelDataset,
    path: &Path,
    unit_col: &str,
    covariate_col: &str,
    value_col: &str,
) -> Result<PanelDataset, PanelError> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(&path_str, e))?.clone();
    let col = |name: &str| -> Result<usize, PanelError> {
        headers.iter().position(|h| h == name).ok_or_else(|| PanelError::MissingColumn {
            path: path_str.clone(),
            column: name.to_string(),
            header: headers.iter().collect::<Vec<_>>().join(","),
        })
    };
    let (ui, ci, vi) = (col(unit_col)?, col(covariate_col)?, col(value_col)?);

    let mut names: Vec<String> = Vec::new();
    let mut entries: HashMap<(usize, String), f64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&path_str, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let unit = record.get(ui).unwrap_or("").trim().to_string();
        let name = record.get(ci).unwrap_or("").trim().to_string();
        let raw = record.get(vi).unwrap_or("").trim();
        let unit_idx = panel.unit_index(&unit).ok_or_else(|| PanelError::UnknownCovariateUnit {
            path: path_str.clone(),
            line,
            unit: unit.clone(),
        })?;
        if raw.is_empty() {
            continue;
        }
        let value = raw.parse::<f64>().map_err(|_| PanelError::NonNumericValue {
            path: path_str.clone(),
            line,
            value: raw.to_string(),
            unit: unit.clone(),
            period: String::new(),
            outcome: name.clone(),
        })?;
        if !names.contains(&name) {
            names.push(name.clone());
        }
        if entries.insert((unit_idx, name.clone()), value).is_some() {
            return Err(PanelError::DuplicateCovariate {
                path: path_str,
                line,
                unit,
                covariate: name,
            });
        }
    }
    names.sort_by(|a, b| label_cmp(a, b));

    let mut values = vec![None; panel.n_units() * names.len()];
    for ((unit_idx, name), v) in entries {
        let r = names.iter().position(|n| *n == name).unwrap();
        values[unit_idx * names.len() + r] = Some(v);
    }
    let mut out = panel.clone();
    out.covariates = Some(CovariateTable { names, values });
    Ok(out)
}

/// Write a panel back out as long-format CSV (canonical row order:
/// unit, period, outcome). Values round-trip bit-exactly through
/// [`load_panel`]. Missing cells are written as empty value fields.
pub fn write_panel<W: io::Write>(panel: &PanelDataset, writer: W) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| PanelError::Malformed {
        path: "<writer>".into(),
        line: 0,
        message: e.to_string(),
    };
    w.write_record(["unit", "period", "outcome", "value"]).map_err(err)?;
    for (i, unit) in panel.units.iter().enumerate() {
        for (t, period) in panel.periods.iter().enumerate() {
            for (k, outcome) in panel.outcomes.iter().enumerate() {
                let value = match panel.value(i, t, k) {
                    Some(v) => format!("{v}"),
                    None => String::new(),
                };
                w.write_record([unit, period, outcome, &value]).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| PanelError::Io {
        path: "<writer>".into(),
        source: e,
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Structural validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub location: String,
}

/// Outcome of [`validate_panel`]; an empty issue list means the panel
/// passes every structural check.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, severity: Severity, code: &'static str, message: String, location: String) {
        self.issues.push(Issue { severity, code, message, location });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok: no issues");
        }
        for issue in &self.issues {
            writeln!(f, "{}[{}] {} ({})", issue.severity, issue.code, issue.message, issue.location)?;
        }
        Ok(())
    }
}

/// Structural checks on a panel. Errors make estimation impossible;
/// warnings flag conditions that degrade it (missing pre-treatment
/// cells, zero-variance matching cells, too few matching variables
/// relative to the donor count).
pub fn validate_panel(panel: &PanelDataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let treated_idx = panel.treated_index();
    if treated_idx.is_none() {
        report.push(
            Severity::Error,
            "treated_missing",
            format!("treated unit `{}` not found among panel units", panel.treated_unit),
            format!("unit={}", panel.treated_unit),
        );
    }
    let cutoff_idx = panel.cutoff_index();
    match cutoff_idx {
        None => report.push(
            Severity::Error,
            "cutoff_missing",
            format!("cutoff period `{}` not found among panel periods", panel.cutoff),
            format!("period={}", panel.cutoff),
        ),
        Some(c) if c + 1 >= panel.n_periods() => report.push(
            Severity::Error,
            "no_post_periods",
            format!("no period after cutoff `{}`", panel.cutoff),
            format!("period={}", panel.cutoff),
        ),
        _ => {}
    }
    let n_donors = panel.n_units().saturating_sub(1);
    if n_donors < 2 {
        report.push(
            Severity::Error,
            "insufficient_donors",
            format!("need at least 2 donors, found {n_donors}"),
            "units".into(),
        );
    }

    let Some(cutoff_idx) = cutoff_idx else {
        return report;
    };

    // Pre-treatment missingness, zero-variance cells, and the count of
    // matching cells complete for every unit.
    let mut missing_pre = 0usize;
    let mut complete_cells = 0usize;
    for (k, outcome) in panel.outcomes.iter().enumerate() {
        for (t, period) in panel.periods.iter().enumerate().take(cutoff_idx + 1) {
            let cell: Vec<Option<f64>> = (0..panel.n_units()).map(|i| panel.value(i, t, k)).collect();
            let present: Vec<f64> = cell.iter().flatten().copied().collect();
            if present.len() < cell.len() {
                missing_pre += cell.len() - present.len();
            } else {
                complete_cells += 1;
            }
            if present.len() >= 2 {
                let first = present[0];
                if present.iter().all(|v| *v == first) {
                    report.push(
                        Severity::Warning,
                        "zero_variance_cell",
                        format!("all units share value {first} at ({outcome}, {period})"),
                        format!("outcome={outcome},period={period}"),
                    );
                }
            }
        }
    }
    if missing_pre > 0 {
        report.push(
            Severity::Warning,
            "missing_pre_cells",
            format!("{missing_pre} missing cell(s) in the pre-treatment window"),
            "values".into(),
        );
    }
    if n_donors >= 2 && complete_cells < n_donors {
        report.push(
            Severity::Warning,
            "overfit_risk",
            format!(
                "only {complete_cells} complete matching cell(s) for {n_donors} donors; \
                 weights may overfit transitory shocks"
            ),
            "values".into(),
        );
    }

    report
}
