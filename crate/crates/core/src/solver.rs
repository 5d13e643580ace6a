//! Simplex-constrained least squares: min ‖b − Aw‖² s.t. w ≥ 0, Σw = 1.
//!
//! Projected gradient descent with a fixed step 1/L, where L bounds the
//! largest eigenvalue of 2AᵀA via power iteration. Deterministic: fixed
//! uniform start, no randomness, so identical inputs give identical
//! weights. A grid-enumeration oracle and the unconstrained least-squares
//! solution are provided for testing and diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Weights below this are clipped to exactly zero before renormalizing.
const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix must have at least 1 row and 2 columns, got {rows}×{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("b has length {b_len}, expected {rows}")]
    LengthMismatch { b_len: usize, rows: usize },
    #[error("non-finite entries in A or b")]
    NonFinite,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("cannot project an empty vector")]
    EmptyVector,
    #[error("grid oracle restricted to small instances (J ≤ 4), got J = {0}")]
    OracleTooLarge(usize),
    #[error("grid step {0} does not divide 1")]
    BadGridStep(f64),
    #[error("AᵀA is singular (smallest eigenvalue {0:.3e})")]
    Singular(f64),
}

/// Donor weights on the probability simplex.
///
/// Every weight is ≥ 0 exactly (after clipping magnitudes below 1e-12)
/// and the weights sum to 1 within 1e-10.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    /// Final sum of squared residuals ‖b − Aw‖².
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>, SolverError> {
    if v.is_empty() {
        return Err(SolverError::EmptyVector);
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            rho = i + 1;
            theta = candidate;
        }
    }
    debug_assert!(rho > 0, "projection threshold not found");
    Ok(v.iter().map(|&x| (x - theta).max(0.0)).collect())
}

fn check_inputs(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<(), SolverError> {
    if a.nrows() < 1 || a.ncols() < 2 {
        return Err(SolverError::TooSmall { rows: a.nrows(), cols: a.ncols() });
    }
    if b.len() != a.nrows() {
        return Err(SolverError::LengthMismatch { b_len: b.len(), rows: a.nrows() });
    }
    if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    if tol <= 0.0 {
        return Err(SolverError::BadTolerance(tol));
    }
    Ok(())
}

/// Largest-eigenvalue estimate of a symmetric PSD matrix by power
/// iteration (Rayleigh quotient after `iters` steps).
fn power_iteration_lambda_max(g: &DMatrix<f64>, iters: usize) -> f64 {
    let n = g.nrows();
    // Deterministic start with uneven coordinates so it is not orthogonal
    // to the leading eigenvector for structured matrices.
    let mut v = DVector::from_fn(n, |i, _| 1.0 / (i + 1) as f64);
    v /= v.norm();
    for _ in 0..iters {
        let gv = g * &v;
        let norm = gv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = gv / norm;
    }
    (v.transpose() * g * &v)[(0, 0)]
}

/// Solve min ‖b − Aw‖² over the simplex by projected gradient descent.
///
/// Iterates from the uniform start with fixed step 1/L, stopping when
/// successive objective values differ by less than `tol` or `max_iter`
/// is reached (the latter returns the best iterate with
/// `converged = false`, never an error).
pub fn solve_simplex_ls(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<WeightVector, SolverError> {
    check_inputs(a, b, tol)?;
    let j = a.ncols();

    // Work in Gram form: ‖b − Aw‖² = bᵀb − 2cᵀw + wᵀGw with G = AᵀA,
    // c = Aᵀb. Per-iteration cost then depends on J, not on row count.
    let gram = a.transpose() * a;
    let c = a.transpose() * b;
    let btb = (b.transpose() * b)[(0, 0)];

    let lambda_max = power_iteration_lambda_max(&gram, 50);
    // Inflate slightly: the Rayleigh quotient approaches the true
    // eigenvalue from below, and descent needs step ≤ 1/L.
    let lipschitz = 2.0 * lambda_max * (1.0 + 1e-9);

    let mut w = DVector::from_element(j, 1.0 / j as f64);
    let objective_of = |w: &DVector<f64>| -> f64 {
        btb - 2.0 * c.dot(w) + (w.transpose() * &gram * w)[(0, 0)]
    };

    let mut converged = false;
    let mut iterations = 0;
    if lipschitz > 0.0 {
        let step = 1.0 / lipschitz;
        let mut obj_prev = objective_of(&w);
        let mut obj_checkpoint = obj_prev;
        for iter in 1..=max_iter {
            iterations = iter;
            let grad = 2.0 * (&gram * &w - &c);
            let moved: Vec<f64> = w.iter().zip(grad.iter()).map(|(wi, gi)| wi - step * gi).collect();
            w = DVector::from_vec(project_simplex(&moved)?);
            let obj = objective_of(&w);
            if iter % 100 == 0 {
                debug_assert!(
                    obj <= obj_checkpoint + 1e-9 * (1.0 + obj_checkpoint.abs()),
                    "objective increased: {obj_checkpoint} -> {obj}"
                );
                obj_checkpoint = obj;
            }
            if (obj_prev - obj).abs() < tol {
                converged = true;
                break;
            }
            obj_prev = obj;
        }
    } else {
        // A is the zero matrix: every feasible point has the same
        // objective; the uniform start is already optimal.
        converged = true;
    }

    // Clip near-zero magnitudes, renormalize, then report the exact
    // residual objective (the Gram form above can lose precision to
    // cancellation near perfect fits).
    let mut weights: Vec<f64> = w.iter().map(|&x| if x.abs() < CLIP_TOL { 0.0 } else { x }).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for x in &mut weights {
            *x /= total;
        }
    } else {
        weights = vec![1.0 / j as f64; j];
    }
    let wv = DVector::from_vec(weights.clone());
    let residual = b - a * &wv;
    let objective = residual.norm_squared();

    Ok(WeightVector { weights, objective, iterations, converged })
}

/// Exhaustive grid oracle: evaluate the objective at every simplex grid
/// point with coordinates in multiples of `grid_step` and return the
/// minimizer. Ties break toward the lexicographically smallest weight
/// vector. Restricted to J ≤ 4.
pub fn brute_force_weights(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    grid_step: f64,
) -> Result<WeightVector, SolverError> {
    check_inputs(a, b, 1.0)?;
    let j = a.ncols();
    if j > 4 {
        return Err(SolverError::OracleTooLarge(j));
    }
    let n = (1.0 / grid_step).round();
    if n < 1.0 || (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(SolverError::BadGridStep(grid_step));
    }
    let n = n as usize;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluated = 0usize;
    let mut counts = vec![0usize; j];
    // Lexicographic enumeration over compositions of n into j parts; the
    // first minimum found is therefore the lexicographically smallest.
    fn recurse(
        counts: &mut Vec<usize>,
        pos: usize,
        remaining: usize,
        n: usize,
        grid_step: f64,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        best: &mut Option<(f64, Vec<f64>)>,
        evaluated: &mut usize,
    ) {
        if pos == counts.len() - 1 {
            counts[pos] = remaining;
            let w: Vec<f64> = counts.iter().map(|&k| k as f64 * grid_step).collect();
            let wv = DVector::from_vec(w.clone());
            let obj = (b - a * &wv).norm_squared();
            *evaluated += 1;
            if best.as_ref().map_or(true, |(bo, _)| obj < *bo) {
                *best = Some((obj, w));
            }
            return;
        }
        for k in 0..=remaining {
            counts[pos] = k;
            recurse(counts, pos + 1, remaining - k, n, grid_step, a, b, best, evaluated);
        }
    }
    recurse(&mut counts, 0, n, n, grid_step, a, b, &mut best, &mut evaluated);

    let (objective, weights) = best.expect("grid enumeration produced no points");
    Ok(WeightVector { weights, objective, iterations: evaluated, converged: true })
}

/// Unconstrained least squares (AᵀA)⁻¹Aᵀb.
///
/// Reference solution for comparing stacked multi-outcome weights with
/// per-outcome weights; not used in estimation (the estimator is simplex
/// constrained).
pub fn unconstrained_ls_weights(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<f64>, SolverError> {
    check_inputs(a, b, 1.0)?;
    let gram = a.transpose() * a;
    let eigen = SymmetricEigen::new(gram);
    let lambda_min = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda_min <= 1e-10 {
        return Err(SolverError::Singular(lambda_min));
    }
    let c = a.transpose() * b;
    // G⁻¹c via the eigendecomposition already at hand.
    let ut_c = eigen.eigenvectors.transpose() * c;
    let scaled = DVector::from_fn(ut_c.len(), |i, _| ut_c[i] / eigen.eigenvalues[i]);
    let solution = eigen.eigenvectors * scaled;
    Ok(solution.iter().copied().collect())
}
