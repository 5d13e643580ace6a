//! Interactive-fixed-effects Monte Carlo harness.
//!
//! Each draw builds a zero-treatment-effect panel
//! `Y = trend + Z'θ + μ'λ + ε` where the unit predictors Z (observed)
//! and μ (unobserved) are drawn once per draw and shared by all
//! outcomes, while the trend, loadings, and shocks are independent
//! across (period, outcome). Coefficients center on a per-outcome level
//! ω_k with a large spread, producing the stable cross-unit level
//! differences seen in real panels.
//!
//! Replicate seeds are split deterministically from the base seed, so
//! results are bit-identical at any parallelism.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimator::{estimate_effects, fit_synthetic_control, EstimatorError};
use crate::inference::{permutation_test, reject_at, InferenceError, Side};
use crate::panel::{CovariateTable, PanelDataset, PanelError};
use crate::prep::MatchSpec;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("k_match {k_match} exceeds generated outcomes {k_outcomes}")]
    KMatchTooLarge { k_match: usize, k_outcomes: usize },
    #[error("replicate {rep}: {source}")]
    Replicate {
        rep: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Parameters of the data generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n_units: usize,
    /// Pre-treatment periods.
    pub t0: usize,
    /// Post-treatment periods.
    pub t_post: usize,
    /// Outcomes generated (estimators consume a prefix).
    pub k_outcomes: usize,
    /// Observed predictors per unit (Z).
    pub n_observed: usize,
    /// Unobserved predictors per unit (μ).
    pub n_unobserved: usize,
    /// Treated-unit predictor support half-width in [0, 1]; donors use 1.
    pub d: f64,
    /// Spread of the per-outcome coefficient level ω_k.
    pub omega_sd: f64,
    /// Spread of trend/loading draws around ω_k.
    pub coef_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_units: 30,
            t0: 10,
            t_post: 1,
            k_outcomes: 10,
            n_observed: 2,
            n_unobserved: 4,
            d: 1.0,
            omega_sd: 10.0,
            coef_sd: 1.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn donors(&self) -> usize {
        self.n_units - 1
    }

    pub fn n_periods(&self) -> usize {
        self.t0 + self.t_post
    }
}

/// Latent draws retained for diagnostics and reconstruction checks.
#[derive(Debug, Clone)]
pub struct DgpLatents {
    /// Z: `observed[i * n_observed + r]`.
    pub observed: Vec<f64>,
    /// μ: `unobserved[i * n_unobserved + q]`.
    pub unobserved: Vec<f64>,
    /// ω_k per outcome.
    pub outcome_level: Vec<f64>,
    /// δ: `trend[t * k_outcomes + k]`.
    pub trend: Vec<f64>,
    /// θ: `observed_loadings[(t * k_outcomes + k) * n_observed + r]`.
    pub observed_loadings: Vec<f64>,
    /// λ: `unobserved_loadings[(t * k_outcomes + k) * n_unobserved + q]`.
    pub unobserved_loadings: Vec<f64>,
    /// ε: `shocks[(i * periods + t) * k_outcomes + k]`.
    pub shocks: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DgpDraw {
    pub config: DgpConfig,
    pub panel: PanelDataset,
    pub latents: DgpLatents,
}

impl DgpDraw {
    /// Recompute one cell from the latents with the exact operation
    /// order used during generation, so reconstruction is bit-exact.
    pub fn reconstruct(&self, unit: usize, period: usize, outcome: usize) -> f64 {
        ife_cell(&self.config, &self.latents, unit, period, outcome)
    }
}

fn ife_cell(config: &DgpConfig, latents: &DgpLatents, i: usize, t: usize, k: usize) -> f64 {
    let r = config.n_observed;
    let f = config.n_unobserved;
    let kk = config.k_outcomes;
    let mut value = latents.trend[t * kk + k];
    for a in 0..r {
        value += latents.observed[i * r + a] * latents.observed_loadings[(t * kk + k) * r + a];
    }
    for q in 0..f {
        value += latents.unobserved[i * f + q] * latents.unobserved_loadings[(t * kk + k) * f + q];
    }
    value + latents.shocks[(i * config.n_periods() + t) * kk + k]
}

/// Generate one panel draw. Deterministic in `config.seed`; the draw
/// order is fixed: Z (unit-major), μ (unit-major), ω per outcome, then
/// per-(outcome, period) coefficients (trend, θ, λ), then shocks in
/// unit-period-outcome order.
pub fn generate_draw(config: &DgpConfig) -> Result<DgpDraw, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit_box = Uniform::new_inclusive(-1.0, 1.0);
    let n = config.n_units;
    let r = config.n_observed;
    let f = config.n_unobserved;
    let kk = config.k_outcomes;
    let periods = config.n_periods();

    // Unit 0 is treated; scaling a U[-1,1] draw by d gives U[-d,d] and
    // keeps the stream identical across d (exactly zero when d = 0).
    let scale = |i: usize, u: f64| if i == 0 { config.d * u } else { u };
    let mut observed = vec![0.0; n * r];
    for i in 0..n {
        for a in 0..r {
            observed[i * r + a] = scale(i, unit_box.sample(&mut rng));
        }
    }
    let mut unobserved = vec![0.0; n * f];
    for i in 0..n {
        for q in 0..f {
            unobserved[i * f + q] = scale(i, unit_box.sample(&mut rng));
        }
    }

    let omega_dist = Normal::new(0.0, config.omega_sd).expect("valid sd");
    let outcome_level: Vec<f64> = (0..kk).map(|_| omega_dist.sample(&mut rng)).collect();

    let mut trend = vec![0.0; periods * kk];
    let mut observed_loadings = vec![0.0; periods * kk * r];
    let mut unobserved_loadings = vec![0.0; periods * kk * f];
    for k in 0..kk {
        let coef = Normal::new(outcome_level[k], config.coef_sd).expect("valid sd");
        for t in 0..periods {
            trend[t * kk + k] = coef.sample(&mut rng);
            for a in 0..r {
                observed_loadings[(t * kk + k) * r + a] = coef.sample(&mut rng);
            }
            for q in 0..f {
                unobserved_loadings[(t * kk + k) * f + q] = coef.sample(&mut rng);
            }
        }
    }

    let noise = Normal::new(0.0, config.noise_sd).expect("valid sd");
    let mut shocks = vec![0.0; n * periods * kk];
    for s in shocks.iter_mut() {
        *s = noise.sample(&mut rng);
    }

    let latents = DgpLatents {
        observed,
        unobserved,
        outcome_level,
        trend,
        observed_loadings,
        unobserved_loadings,
        shocks,
    };

    let width = n.to_string().len();
    let units: Vec<String> = (1..=n).map(|i| format!("u{i:0width$}")).collect();
    let period_labels: Vec<String> = (1..=periods).map(|t| t.to_string()).collect();
    let outcomes: Vec<String> = (1..=kk).map(|k| format!("y{k}")).collect();
    let mut values = Vec::with_capacity(n * periods * kk);
    for i in 0..n {
        for t in 0..periods {
            for k in 0..kk {
                values.push(Some(ife_cell(config, &latents, i, t, k)));
            }
        }
    }
    let covariates = CovariateTable {
        names: (1..=r).map(|a| format!("z{a}")).collect(),
        values: latents.observed.iter().map(|v| Some(*v)).collect(),
    };
    let panel = PanelDataset::from_parts(
        units.clone(),
        period_labels,
        outcomes,
        values,
        Some(covariates),
        units[0].clone(),
        config.t0.to_string(),
    )?;

    Ok(DgpDraw { config: config.clone(), panel, latents })
}

/// Estimator arm run against each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Single outcome 1, raw levels, standardized matching.
    ConventionalRaw,
    /// Outcomes 1..k_match, demeaned then standardized.
    MultiDemeaned { k_match: usize },
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::ConventionalRaw => "conventional".to_string(),
            EstimatorKind::MultiDemeaned { k_match } => format!("k{k_match}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "conventional" => Some(EstimatorKind::ConventionalRaw),
            other => other
                .strip_prefix('k')
                .and_then(|n| n.parse::<usize>().ok())
                .map(|k_match| EstimatorKind::MultiDemeaned { k_match }),
        }
    }

    /// Matching spec for a generated panel. Both arms match the observed
    /// predictors Z alongside the outcome rows, mirroring the fit
    /// condition that includes them.
    pub fn match_spec(&self, config: &DgpConfig) -> MatchSpec {
        let (match_outcomes, demean) = match self {
            EstimatorKind::ConventionalRaw => (vec!["y1".to_string()], false),
            EstimatorKind::MultiDemeaned { k_match } => {
                ((1..=*k_match).map(|k| format!("y{k}")).collect(), true)
            }
        };
        MatchSpec {
            match_outcomes,
            cutoff: config.t0.to_string(),
            use_covariates: true,
            demean,
            standardize: true,
            target_outcomes: vec!["y1".to_string()],
        }
    }

    fn k_match(&self) -> usize {
        match self {
            EstimatorKind::ConventionalRaw => 1,
            EstimatorKind::MultiDemeaned { k_match } => *k_match,
        }
    }
}

/// Aggregates for one (d, T0, estimator) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub d: f64,
    pub t0: usize,
    pub estimator: String,
    pub n_reps: usize,
    pub seed: u64,
    /// Mean pre-treatment RMSPE on outcome 1.
    pub pre_fit: f64,
    /// Mean |τ̂| for outcome 1 at t = T0+1.
    pub bias: f64,
    /// Sample standard deviation of τ̂.
    pub sd: f64,
    /// Rejection rate of the 10% RMSPE-ratio test (top 3 of 30).
    pub rej: f64,
    pub mcse_bias: f64,
    pub mcse_sd: f64,
}

struct RepRecord {
    pre_fit: f64,
    tau: f64,
    reject: bool,
}

/// SplitMix64 step: replicate seeds independent of the base stream.
fn replicate_seed(base: u64, rep: u64) -> u64 {
    let mut z = base.wrapping_add(rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summation with pairwise splitting; keeps accumulation error tiny and
/// independent of how replicates were scheduled.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn run_replicate(config: &DgpConfig, kind: EstimatorKind) -> Result<RepRecord, Box<dyn std::error::Error + Send + Sync>> {
    let draw = generate_draw(config)?;
    let spec = kind.match_spec(config);
    let fit = fit_synthetic_control(&draw.panel, &spec)?;
    let effects = estimate_effects(&draw.panel, &fit)?;
    let tau = effects
        .gap(0, 0)
        .ok_or_else(|| Box::new(EstimatorError::NoEffects(draw.panel.treated_unit.clone())) as Box<dyn std::error::Error + Send + Sync>)?;
    let perm = permutation_test(&draw.panel, &spec, Side::TwoSided).map_err(boxed_inference)?;
    let reject = reject_at(&perm, "y1", 0.10).map_err(boxed_inference)?;
    let pre_fit = fit
        .pre_fit
        .outcome("y1")
        .map(|o| o.rmspe)
        .unwrap_or(fit.pre_fit.pooled);
    Ok(RepRecord { pre_fit, tau, reject })
}

fn boxed_inference(e: InferenceError) -> Box<dyn std::error::Error + Send + Sync> {
    Box::new(e)
}

/// Run one simulation cell: `n_reps` fresh draws through one estimator,
/// with the 10% RMSPE-ratio permutation test on outcome 1. All
/// estimators given the same config and seed see identical draws.
pub fn run_cell(config: &DgpConfig, kind: EstimatorKind, n_reps: usize) -> Result<SimSummary, SimError> {
    if kind.k_match() > config.k_outcomes {
        return Err(SimError::KMatchTooLarge {
            k_match: kind.k_match(),
            k_outcomes: config.k_outcomes,
        });
    }
    let records: Result<Vec<RepRecord>, SimError> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rep_config = config.clone();
            rep_config.seed = replicate_seed(config.seed, rep as u64);
            run_replicate(&rep_config, kind).map_err(|source| SimError::Replicate { rep, source })
        })
        .collect();
    let records = records?;

    let n = records.len();
    let taus: Vec<f64> = records.iter().map(|r| r.tau).collect();
    let abs_taus: Vec<f64> = taus.iter().map(|t| t.abs()).collect();
    let pre_fits: Vec<f64> = records.iter().map(|r| r.pre_fit).collect();
    let rejects: Vec<f64> = records.iter().map(|r| if r.reject { 1.0 } else { 0.0 }).collect();

    let nf = n as f64;
    let bias = pairwise_sum(&abs_taus) / nf;
    let mean_tau = pairwise_sum(&taus) / nf;
    let centered_sq: Vec<f64> = taus.iter().map(|t| (t - mean_tau) * (t - mean_tau)).collect();
    let m2 = pairwise_sum(&centered_sq) / nf;
    let sd = if n > 1 { (pairwise_sum(&centered_sq) / (nf - 1.0)).sqrt() } else { 0.0 };
    let centered_4th: Vec<f64> = taus.iter().map(|t| (t - mean_tau).powi(4)).collect();
    let m4 = pairwise_sum(&centered_4th) / nf;

    let abs_mean = bias;
    let abs_var = pairwise_sum(&abs_taus.iter().map(|a| (a - abs_mean) * (a - abs_mean)).collect::<Vec<_>>()) / (nf - 1.0);
    let mcse_bias = (abs_var / nf).sqrt();
    // Delta-method MCSE of the sample sd; the kurtosis term matters for
    // the heavy-tailed raw-scale cells.
    let mcse_sd = if m2 > 0.0 { ((m4 - m2 * m2).max(0.0) / (4.0 * m2 * nf)).sqrt() } else { 0.0 };

    Ok(SimSummary {
        d: config.d,
        t0: config.t0,
        estimator: kind.label(),
        n_reps: n,
        seed: config.seed,
        pre_fit: pairwise_sum(&pre_fits) / nf,
        bias,
        sd,
        rej: pairwise_sum(&rejects) / nf,
        mcse_bias,
        mcse_sd,
    })
}

/// One grid entry: (d, T0) crossed with an estimator arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub d: f64,
    pub t0: usize,
    pub kind: EstimatorKind,
}

/// The 9-row × 4-estimator benchmark grid.
pub fn default_grid() -> Vec<GridCell> {
    let mut cells = Vec::new();
    for &d in &[1.0, 0.5, 0.0] {
        for &t0 in &[5usize, 10, 20] {
            for kind in [
                EstimatorKind::ConventionalRaw,
                EstimatorKind::MultiDemeaned { k_match: 1 },
                EstimatorKind::MultiDemeaned { k_match: 3 },
                EstimatorKind::MultiDemeaned { k_match: 10 },
            ] {
                cells.push(GridCell { d, t0, kind });
            }
        }
    }
    cells
}

/// Run every cell with shared base config and seed. `parallelism` sizes
/// the worker pool (0 = library default); results are bit-identical for
/// any value because replicate seeding and reduction order are fixed.
pub fn run_grid(
    base: &DgpConfig,
    cells: &[GridCell],
    n_reps: usize,
    parallelism: usize,
) -> Result<Vec<SimSummary>, SimError> {
    let run = || -> Result<Vec<SimSummary>, SimError> {
        cells
            .iter()
            .map(|cell| {
                let mut config = base.clone();
                config.d = cell.d;
                config.t0 = cell.t0;
                run_cell(&config, cell.kind, n_reps)
            })
            .collect()
    };
    if parallelism == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("failed to build thread pool");
        pool.install(run)
    }
}

/// Tidy CSV of grid summaries.
pub fn summaries_to_csv(summaries: &[SimSummary]) -> String {
    let mut out = String::from("d,t0,estimator,n_reps,seed,pre_fit,bias,sd,rej,mcse_bias,mcse_sd\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.d, s.t0, s.estimator, s.n_reps, s.seed, s.pre_fit, s.bias, s.sd, s.rej, s.mcse_bias, s.mcse_sd
        ));
    }
    out
}

/// Aligned text table: one row per (d, T0), one four-column block per
/// estimator, mirroring the benchmark layout.
pub fn format_table(summaries: &[SimSummary]) -> String {
    let mut estimators: Vec<String> = Vec::new();
    for s in summaries {
        if !estimators.contains(&s.estimator) {
            estimators.push(s.estimator.clone());
        }
    }
    let mut rows: Vec<(f64, usize)> = Vec::new();
    for s in summaries {
        if !rows.contains(&(s.d, s.t0)) {
            rows.push((s.d, s.t0));
        }
    }

    let mut out = String::new();
    out.push_str(&format!("{:>5} {:>4}", "d", "T0"));
    for est in &estimators {
        out.push_str(&format!("  | {:^27}", est));
    }
    out.push('\n');
    out.push_str(&format!("{:>5} {:>4}", "", ""));
    for _ in &estimators {
        out.push_str(&format!("  | {:>6} {:>6} {:>6} {:>6}", "Prefit", "Bias", "SD", "Rej"));
    }
    out.push('\n');
    for (d, t0) in rows {
        out.push_str(&format!("{:>5} {:>4}", d, t0));
        for est in &estimators {
            match summaries.iter().find(|s| s.d == d && s.t0 == t0 && s.estimator == *est) {
                Some(s) => out.push_str(&format!(
                    "  | {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
                    s.pre_fit, s.bias, s.sd, s.rej
                )),
                None => out.push_str(&format!("  | {:>6} {:>6} {:>6} {:>6}", "-", "-", "-", "-")),
            }
        }
        out.push('\n');
    }
    out
}
