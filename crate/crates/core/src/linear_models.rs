//! Count regressions against time: Poisson GLM, OLS, ridge and lasso.
//!
//! All four fit `y ≈ f(θ'x)` on a [`DesignMatrix`]. When the first column is
//! all ones it is treated as an intercept and left unpenalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LAMBDA: f64 = 0.1;

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 50;
const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;
const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LinearModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("need at least as many rows as columns ({rows} < {cols})")]
    Underdetermined { rows: usize, cols: usize },
    #[error("design matrix or response contains non-finite values")]
    NonFinite,
    #[error("XᵀX is singular or ill-conditioned (rcond {rcond:.3e}); use ridge regression instead")]
    Singular { rcond: f64 },
    #[error("lambda must be positive, got {0} (use OLS for lambda = 0)")]
    InvalidLambda(f64),
    #[error("Poisson response must be non-negative integers")]
    NonCountResponse,
    #[error("all counts are zero, so the intercept diverges to -inf; retry with a pseudo-count")]
    AllZeroCounts,
    #[error("Newton step failed to improve the likelihood after {MAX_HALVINGS} halvings; rescale the features")]
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Poisson,
    Ols,
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub model_kind: LinearKind,
    pub lambda: Option<f64>,
    pub theta: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    y: DVector<f64>,
    intercept: bool,
}

impl DesignMatrix {
    /// Builds a design from row vectors. Column 0 counts as the intercept
    /// when every entry in it is exactly 1.
    pub fn new(rows: &[Vec<f64>], y: &[f64]) -> Result<DesignMatrix, LinearModelError> {
        if rows.len() != y.len() {
            return Err(LinearModelError::Dimension { expected: rows.len(), got: y.len() });
        }
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(LinearModelError::Dimension { expected: p, got: bad.len() });
        }
        let n = rows.len();
        if n < p || p == 0 {
            return Err(LinearModelError::Underdetermined { rows: n, cols: p });
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let y = DVector::from_column_slice(y);
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(LinearModelError::NonFinite);
        }
        let intercept = x.column(0).iter().all(|&v| v == 1.0);
        Ok(DesignMatrix { x, y, intercept })
    }

    /// Rows `(1, k / scale)` for `k = 0..y.len()`.
    pub fn time_trend(y: &[f64], scale: f64) -> Result<DesignMatrix, LinearModelError> {
        let rows: Vec<Vec<f64>> = (0..y.len()).map(|k| trend_row(k, scale)).collect();
        DesignMatrix::new(&rows, y)
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    fn penalized(&self, j: usize) -> bool {
        !(self.intercept && j == 0)
    }
}

pub fn trend_row(k: usize, scale: f64) -> Vec<f64> {
    vec![1.0, k as f64 / scale]
}

fn rss(d: &DesignMatrix, theta: &DVector<f64>) -> f64 {
    (&d.y - &d.x * theta).norm_squared()
}

fn theta_vec(theta: &DVector<f64>) -> Vec<f64> {
    theta.iter().copied().collect()
}

/// Ordinary least squares through the normal equations.
pub fn fit_ols(d: &DesignMatrix) -> Result<ModelCoefficients, LinearModelError> {
    let xtx = d.x.transpose() * &d.x;
    let xty = d.x.transpose() * &d.y;
    let eig = xtx.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond > MIN_RCOND) {
        return Err(LinearModelError::Singular { rcond });
    }
    let chol = xtx.clone().cholesky().ok_or(LinearModelError::Singular { rcond })?;
    let mut theta = chol.solve(&xty);
    // one round of iterative refinement on the normal equations
    let residual = &xty - &xtx * &theta;
    theta += chol.solve(&residual);
    Ok(ModelCoefficients {
        model_kind: LinearKind::Ols,
        lambda: None,
        diagnostics: FitDiagnostics { iterations: 1, final_objective: rss(d, &theta), converged: true },
        theta: theta_vec(&theta),
    })
}

/// Ridge regression: solves `(XᵀX + λI')θ = Xᵀy`, where `I'` skips the intercept.
pub fn fit_ridge(d: &DesignMatrix, lambda: f64) -> Result<ModelCoefficients, LinearModelError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(LinearModelError::InvalidLambda(lambda));
    }
    let mut a = d.x.transpose() * &d.x;
    for j in 0..d.cols() {
        if d.penalized(j) {
            a[(j, j)] += lambda;
        }
    }
    let xty = d.x.transpose() * &d.y;
    let chol = a.clone().cholesky().ok_or(LinearModelError::Singular { rcond: 0.0 })?;
    let mut theta = chol.solve(&xty);
    let residual = &xty - &a * &theta;
    theta += chol.solve(&residual);
    let penalty: f64 = (0..d.cols()).filter(|&j| d.penalized(j)).map(|j| theta[j] * theta[j]).sum();
    Ok(ModelCoefficients {
        model_kind: LinearKind::Ridge,
        lambda: Some(lambda),
        diagnostics: FitDiagnostics {
            iterations: 1,
            final_objective: rss(d, &theta) + lambda * penalty,
            converged: true,
        },
        theta: theta_vec(&theta),
    })
}

/// `sign(z) · max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn lasso_objective(d: &DesignMatrix, theta: &DVector<f64>, lambda: f64) -> f64 {
    let l1: f64 = (0..d.cols()).filter(|&j| d.penalized(j)).map(|j| theta[j].abs()).sum();
    rss(d, theta) + lambda * l1
}

/// Lasso by cyclic coordinate descent on `Σ(y − Xβ)² + λ‖β‖₁`.
///
/// Each penalized coordinate moves to `S(X_jᵀr_j, λ/2) / ‖X_j‖²`, with `r_j`
/// the partial residual; the intercept takes its exact least-squares update.
/// Dividing by the column's squared norm puts every coordinate on the unit
/// scale without changing the objective.
pub fn fit_lasso(d: &DesignMatrix, lambda: f64) -> Result<ModelCoefficients, LinearModelError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(LinearModelError::InvalidLambda(lambda));
    }
    let (n, p) = (d.rows(), d.cols());
    let col_sq: Vec<f64> = (0..p).map(|j| d.x.column(j).norm_squared()).collect();
    let mut theta = DVector::zeros(p);
    if d.intercept {
        theta[0] = d.y.iter().sum::<f64>() / n as f64;
    }
    let mut residual: Vec<f64> = (0..n).map(|i| d.y[i] - (d.x.row(i) * &theta)[0]).collect();

    // penalized coordinates first, intercept last
    let order: Vec<usize> = (0..p).filter(|&j| d.penalized(j)).chain((0..p).filter(|&j| !d.penalized(j))).collect();
    let mut objective = lasso_objective(d, &theta, lambda);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for &j in &order {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = d.x.column(j);
            let z = col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>() + col_sq[j] * theta[j];
            let updated = if d.penalized(j) {
                soft_threshold(z, lambda / 2.0) / col_sq[j]
            } else {
                z / col_sq[j]
            };
            let delta = updated - theta[j];
            if delta != 0.0 {
                for (r, x) in residual.iter_mut().zip(col.iter()) {
                    *r -= x * delta;
                }
                theta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        let next = lasso_objective(d, &theta, lambda);
        debug_assert!(next <= objective + 1e-9 * (1.0 + objective.abs()), "lasso objective increased");
        objective = next;
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    Ok(ModelCoefficients {
        model_kind: LinearKind::Lasso,
        lambda: Some(lambda),
        diagnostics: FitDiagnostics { iterations: sweeps, final_objective: objective, converged },
        theta: theta_vec(&theta),
    })
}

/// Poisson log-likelihood without the constant `log(y!)` term.
pub fn poisson_log_likelihood(d: &DesignMatrix, theta: &[f64]) -> f64 {
    let eta = &d.x * DVector::from_column_slice(theta);
    eta.iter().zip(d.y.iter()).map(|(e, y)| y * e - e.exp()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoissonOptions {
    /// Added to every count before fitting; lets all-zero series fit.
    pub pseudo_count: f64,
}

pub fn fit_poisson(d: &DesignMatrix) -> Result<ModelCoefficients, LinearModelError> {
    fit_poisson_with(d, PoissonOptions::default())
}

/// Maximises the Poisson log-likelihood by Newton–Raphson with step halving.
pub fn fit_poisson_with(d: &DesignMatrix, opts: PoissonOptions) -> Result<ModelCoefficients, LinearModelError> {
    if d.y.iter().any(|&y| y < 0.0 || y.fract() != 0.0) {
        return Err(LinearModelError::NonCountResponse);
    }
    let mut d = d.clone();
    if opts.pseudo_count > 0.0 {
        d.y.add_scalar_mut(opts.pseudo_count);
    }
    let total: f64 = d.y.iter().sum();
    if total == 0.0 {
        return Err(LinearModelError::AllZeroCounts);
    }
    let (n, p) = (d.rows(), d.cols());
    let mut theta = DVector::zeros(p);
    if d.intercept {
        theta[0] = (total / n as f64).ln();
    }

    let loglik = |t: &DVector<f64>| poisson_log_likelihood(&d, t.as_slice());
    let mut ll = loglik(&theta);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mu = (&d.x * &theta).map(f64::exp);
        let grad = d.x.transpose() * (&d.y - &mu);
        if grad.norm() < NEWTON_TOL {
            converged = true;
            break;
        }
        if iterations == NEWTON_MAX_ITER {
            break;
        }
        iterations += 1;
        let weighted = DMatrix::from_fn(n, p, |i, j| d.x[(i, j)] * mu[i]);
        let hessian = d.x.transpose() * weighted;
        let step = hessian.cholesky().ok_or(LinearModelError::Diverged)?.solve(&grad);
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &theta + &step * scale;
            let cand_ll = loglik(&candidate);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                theta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(LinearModelError::Diverged);
        }
    }
    Ok(ModelCoefficients {
        model_kind: LinearKind::Poisson,
        lambda: None,
        diagnostics: FitDiagnostics { iterations, final_objective: ll, converged },
        theta: theta_vec(&theta),
    })
}

/// `exp(θ'x)` for Poisson models, `θ'x` otherwise.
pub fn predict(m: &ModelCoefficients, x_row: &[f64]) -> Result<f64, LinearModelError> {
    if x_row.len() != m.theta.len() {
        return Err(LinearModelError::Dimension { expected: m.theta.len(), got: x_row.len() });
    }
    let eta: f64 = m.theta.iter().zip(x_row).map(|(t, x)| t * x).sum();
    Ok(match m.model_kind {
        LinearKind::Poisson => eta.exp(),
        _ => eta,
    })
}

/// A linear model fitted on `(1, k / index_scale)` time features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub coefficients: ModelCoefficients,
    /// Bucket index that maps to feature value 1 (last training index).
    pub index_scale: f64,
}

impl TrendModel {
    pub fn fit(kind: LinearKind, lambda: f64, train: &[f64]) -> Result<TrendModel, LinearModelError> {
        let index_scale = (train.len().max(2) - 1) as f64;
        let d = DesignMatrix::time_trend(train, index_scale)?;
        let coefficients = match kind {
            LinearKind::Poisson => fit_poisson(&d)?,
            LinearKind::Ols => fit_ols(&d)?,
            LinearKind::Ridge => fit_ridge(&d, lambda)?,
            LinearKind::Lasso => fit_lasso(&d, lambda)?,
        };
        Ok(TrendModel { coefficients, index_scale })
    }

    /// Predictions for bucket indices `start..start + horizon`.
    pub fn forecast(&self, start: usize, horizon: usize) -> Vec<f64> {
        (start..start + horizon)
            .map(|k| predict(&self.coefficients, &trend_row(k, self.index_scale)).expect("two features"))
            .collect()
    }
}
