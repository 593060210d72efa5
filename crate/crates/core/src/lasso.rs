//! L1-penalised least squares by cyclic coordinate descent.
//!
//! The objective is `(1/(2n)) ||y - b0 - X b||^2 + lambda ||b||_1` on
//! internally standardised columns (mean 0, variance 1 with the `1/n`
//! convention) and a centred response. Coefficients are reported on the
//! original scale.
//!
//! The solver works in "covariance mode": it keeps the gradient
//! `g_j = x_j^T r / n` up to date and computes a Gram column `X^T x_k / n`
//! the first time variable `k` becomes nonzero. A coordinate visit that does
//! not move costs O(1), an update costs O(p).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, dot, DenseMatrix};
use crate::rng::Stream;

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_N_LAMBDA: usize = 100;
pub const DEFAULT_LAMBDA_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 10;
// Sweeps between attempts to solve the support's KKT system directly.
const EXACT_STEP_EVERY: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub lambda: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Zero-variance columns; their slopes are fixed at zero.
    pub degenerate_columns: Vec<usize>,
}

impl LassoFit {
    /// Indices with a nonzero slope.
    pub fn support(&self) -> Vec<usize> {
        self.slopes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_mean_error: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
}

/// Standardised copy of a regression problem plus the lazily filled Gram
/// cache.
struct Problem {
    n: usize,
    p: usize,
    // column-major standardised design, degenerate columns are zero
    xs: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    degenerate: Vec<bool>,
    y_mean: f64,
    // x_j^T y_c / n
    xty: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
}

impl Problem {
    fn new(x: &DenseMatrix, rows: Option<&[usize]>, y: &[f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {}",
                x.rows(),
                y.len()
            )));
        }
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..x.rows()).collect();
                &all
            }
        };
        let n = rows.len();
        let p = x.cols();
        if n == 0 {
            return Err(Error::InvalidSize {
                requested: 0,
                available: x.rows(),
            });
        }
        let nf = n as f64;
        let mut xs = vec![0.0; n * p];
        for (ii, &i) in rows.iter().enumerate() {
            for (j, v) in x.row(i).iter().enumerate() {
                xs[j * n + ii] = *v;
            }
        }
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut degenerate = vec![false; p];
        for j in 0..p {
            let col = &mut xs[j * n..(j + 1) * n];
            let mean = col.iter().sum::<f64>() / nf;
            col.iter_mut().for_each(|v| *v -= mean);
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
            means[j] = mean;
            if sd == 0.0 || sd <= 1e-10 * mean.abs() {
                degenerate[j] = true;
                col.iter_mut().for_each(|v| *v = 0.0);
            } else {
                scales[j] = sd;
                col.iter_mut().for_each(|v| *v /= sd);
            }
        }
        let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / nf;
        let yc: Vec<f64> = rows.iter().map(|&i| y[i] - y_mean).collect();
        let xty = (0..p)
            .map(|j| dot(&xs[j * n..(j + 1) * n], &yc) / nf)
            .collect();
        Ok(Self {
            n,
            p,
            xs,
            means,
            scales,
            degenerate,
            y_mean,
            xty,
            gram: vec![None; p],
        })
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.xs[j * self.n..(j + 1) * self.n]
    }

    fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn ensure_gram(&mut self, k: usize) {
        if self.gram[k].is_some() {
            return;
        }
        let nf = self.n as f64;
        let xk = self.column(k);
        let col: Vec<f64> = (0..self.p)
            .map(|j| {
                if self.degenerate[j] {
                    0.0
                } else {
                    dot(self.column(j), xk) / nf
                }
            })
            .collect();
        self.gram[k] = Some(col);
    }

    fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.degenerate[j]).collect()
    }

    fn standardize_slopes(&self, slopes: &[f64]) -> Vec<f64> {
        slopes
            .iter()
            .zip(&self.scales)
            .zip(&self.degenerate)
            .map(|((b, s), d)| if *d { 0.0 } else { b * s })
            .collect()
    }

    fn to_original(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *b == 0.0 { 0.0 } else { b / s })
            .collect();
        let intercept = self.y_mean - dot(&self.means, &slopes);
        (intercept, slopes)
    }
}

/// Coordinate-descent state along a path: standardised coefficients and the
/// matching gradient.
struct PathState {
    beta: Vec<f64>,
    grad: Vec<f64>,
}

impl PathState {
    fn cold(problem: &Problem) -> Self {
        Self {
            beta: vec![0.0; problem.p],
            grad: problem.xty.clone(),
        }
    }

    fn warm(problem: &mut Problem, beta: Vec<f64>) -> Self {
        let mut grad = problem.xty.clone();
        for k in 0..problem.p {
            if beta[k] != 0.0 {
                problem.ensure_gram(k);
                let g = problem.gram[k].as_ref().expect("gram column");
                for (gi, gk) in grad.iter_mut().zip(g) {
                    *gi -= gk * beta[k];
                }
            }
        }
        Self { beta, grad }
    }
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Run coordinate descent to convergence at `lambda`. Returns
/// `(sweeps, converged)`.
fn descend(problem: &mut Problem, state: &mut PathState, lambda: f64) -> (usize, bool) {
    let p = problem.p;
    for sweep in 1..=MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if problem.degenerate[j] {
                continue;
            }
            let old = state.beta[j];
            let new = soft_threshold(state.grad[j] + old, lambda);
            let delta = new - old;
            if delta == 0.0 {
                continue;
            }
            state.beta[j] = new;
            problem.ensure_gram(j);
            let g = problem.gram[j].as_ref().expect("gram column");
            for (gi, gk) in state.grad.iter_mut().zip(g) {
                *gi -= gk * delta;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < TOLERANCE {
            return (sweep, true);
        }
        if sweep % EXACT_STEP_EVERY == 0 && exact_step(problem, state, lambda) {
            return (sweep, true);
        }
    }
    (MAX_SWEEPS, false)
}

/// Solves `G_AA b = c_A - lambda s_A` on the current support `A` with the
/// current signs `s`. The solution is kept only when it keeps every sign
/// and satisfies the optimality conditions for all coordinates, in which
/// case it is the minimiser and descent can stop.
fn exact_step(problem: &mut Problem, state: &mut PathState, lambda: f64) -> bool {
    let p = problem.p;
    let active: Vec<usize> = (0..p).filter(|&j| state.beta[j] != 0.0).collect();
    let m = active.len();
    if m == 0 {
        return false;
    }
    let mut g = DenseMatrix::zeros(m, m);
    for (a, &j) in active.iter().enumerate() {
        problem.ensure_gram(j);
        let col = problem.gram[j].as_ref().expect("gram column");
        for (b, &k) in active.iter().enumerate() {
            g.set(b, a, col[k]);
        }
    }
    let Ok(l) = cholesky_factor(&g) else {
        return false;
    };
    let mut x: Vec<f64> = active
        .iter()
        .map(|&j| problem.xty[j] - lambda * state.beta[j].signum())
        .collect();
    for i in 0..m {
        let v = x[i] - (0..i).map(|k| l.get(i, k) * x[k]).sum::<f64>();
        x[i] = v / l.get(i, i);
    }
    for i in (0..m).rev() {
        let v = x[i] - ((i + 1)..m).map(|k| l.get(k, i) * x[k]).sum::<f64>();
        x[i] = v / l.get(i, i);
    }
    if active
        .iter()
        .zip(&x)
        .any(|(&j, &b)| !b.is_finite() || b == 0.0 || b.signum() != state.beta[j].signum())
    {
        return false;
    }
    let mut grad = problem.xty.clone();
    for (&j, &b) in active.iter().zip(&x) {
        let col = problem.gram[j].as_ref().expect("gram column");
        for (gi, gk) in grad.iter_mut().zip(col) {
            *gi -= gk * b;
        }
    }
    let scale = 1.0 + problem.xty.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * scale;
    let mut is_active = vec![false; p];
    active.iter().for_each(|&j| is_active[j] = true);
    let optimal = (0..p).all(|j| {
        if problem.degenerate[j] {
            true
        } else if is_active[j] {
            (grad[j] - lambda * state.beta[j].signum()).abs() <= tol
        } else {
            grad[j].abs() <= lambda + tol
        }
    });
    if !optimal {
        return false;
    }
    for (&j, &b) in active.iter().zip(&x) {
        state.beta[j] = b;
    }
    state.grad = grad;
    true
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParam(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

fn finish(problem: &Problem, state: &PathState, lambda: f64, sweeps: usize, converged: bool) -> LassoFit {
    let (intercept, slopes) = problem.to_original(&state.beta);
    LassoFit {
        intercept,
        slopes,
        lambda,
        n_iterations: sweeps,
        converged,
        degenerate_columns: problem.degenerate_columns(),
    }
}

/// Fit the LASSO at a single `lambda`. `warm_start` holds original-scale
/// slopes.
pub fn lasso_fit(
    x: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit> {
    check_lambda(lambda)?;
    let mut problem = Problem::new(x, None, y)?;
    let mut state = match warm_start {
        Some(w) => {
            if w.len() != problem.p {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} slopes for {} columns",
                    w.len(),
                    problem.p
                )));
            }
            let beta = problem.standardize_slopes(w);
            PathState::warm(&mut problem, beta)
        }
        None => PathState::cold(&problem),
    };
    let (sweeps, converged) = descend(&mut problem, &mut state, lambda);
    Ok(finish(&problem, &state, lambda, sweeps, converged))
}

/// Fits along a descending `grid` with warm starts.
pub fn lasso_path(x: &DenseMatrix, y: &[f64], grid: &[f64]) -> Result<Vec<LassoFit>> {
    grid.iter().try_for_each(|&l| check_lambda(l))?;
    let mut problem = Problem::new(x, None, y)?;
    let mut state = PathState::cold(&problem);
    Ok(grid
        .iter()
        .map(|&lambda| {
            let (sweeps, converged) = descend(&mut problem, &mut state, lambda);
            finish(&problem, &state, lambda, sweeps, converged)
        })
        .collect())
}

/// `max_j |x_j^T y_c| / n` on standardised columns.
pub fn lambda_max(x: &DenseMatrix, y: &[f64]) -> Result<f64> {
    Ok(Problem::new(x, None, y)?.lambda_max())
}

fn log_grid(lmax: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if lmax == 0.0 {
        return vec![0.0];
    }
    let last = (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|l| lmax * ratio.powf(l as f64 / last))
        .collect()
}

/// Log-spaced grid from `lambda_max` down to `ratio * lambda_max`. A constant
/// response gives the single value 0.
pub fn lambda_grid(x: &DenseMatrix, y: &[f64], n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::InvalidParam(format!(
            "lambda grid needs at least 2 values, got {n_lambda}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParam(format!(
            "lambda ratio must lie in (0, 1), got {ratio}"
        )));
    }
    Ok(log_grid(lambda_max(x, y)?, n_lambda, ratio))
}

/// Random fold labels with sizes differing by at most one.
pub fn fold_assignment(n: usize, n_folds: usize, rng: &mut Stream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        perm.swap(i, j);
    }
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % n_folds;
    }
    folds
}

/// Held-out squared error of every grid point for one fold.
fn fold_errors(x: &DenseMatrix, y: &[f64], folds: &[usize], fold: usize, grid: &[f64]) -> Result<Vec<f64>> {
    let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != fold);
    let mut problem = Problem::new(x, Some(&train), y)?;
    let mut state = PathState::cold(&problem);
    let mut errors = Vec::with_capacity(grid.len());
    for &lambda in grid {
        descend(&mut problem, &mut state, lambda);
        let (intercept, slopes) = problem.to_original(&state.beta);
        let support: Vec<usize> = (0..slopes.len()).filter(|&j| slopes[j] != 0.0).collect();
        let sse: f64 = test
            .iter()
            .map(|&i| {
                let row = x.row(i);
                let pred = intercept + support.iter().map(|&j| row[j] * slopes[j]).sum::<f64>();
                (y[i] - pred).powi(2)
            })
            .sum();
        errors.push(sse / test.len() as f64);
    }
    Ok(errors)
}

/// K-fold cross-validation over the default grid, choosing the largest
/// lambda within one standard error of the minimum, then refitting on all
/// rows at that lambda.
pub fn cv_lasso(x: &DenseMatrix, y: &[f64], n_folds: usize, rng: &mut Stream) -> Result<(CvResult, LassoFit)> {
    let n = y.len();
    if x.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {}",
            x.rows(),
            n
        )));
    }
    if n_folds < 2 || n_folds > n {
        return Err(Error::InvalidParam(format!(
            "need 2 <= folds <= rows, got {n_folds} folds for {n} rows"
        )));
    }
    let folds = fold_assignment(n, n_folds, rng);
    let mut full = Problem::new(x, None, y)?;
    let grid = log_grid(full.lambda_max(), DEFAULT_N_LAMBDA, DEFAULT_LAMBDA_RATIO);

    let per_fold: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|f| fold_errors(x, y, &folds, f, &grid))
        .collect::<Result<_>>()?;

    let k = n_folds as f64;
    let mut cv_mean_error = Vec::with_capacity(grid.len());
    let mut cv_se = Vec::with_capacity(grid.len());
    for l in 0..grid.len() {
        let mean = per_fold.iter().map(|e| e[l]).sum::<f64>() / k;
        let var = per_fold.iter().map(|e| (e[l] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        cv_mean_error.push(mean);
        cv_se.push((var / k).sqrt());
    }
    let mut best = 0;
    for l in 1..grid.len() {
        if cv_mean_error[l] < cv_mean_error[best] {
            best = l;
        }
    }
    let threshold = cv_mean_error[best] + cv_se[best];
    let chosen = (0..=best)
        .find(|&l| cv_mean_error[l] <= threshold)
        .unwrap_or(best);

    let mut state = PathState::cold(&full);
    let mut fit = None;
    for &lambda in &grid[..=chosen] {
        let (sweeps, converged) = descend(&mut full, &mut state, lambda);
        fit = Some(finish(&full, &state, lambda, sweeps, converged));
    }
    let fit = fit.expect("grid is never empty");

    Ok((
        CvResult {
            lambda_min: grid[best],
            lambda_1se: grid[chosen],
            lambda_grid: grid,
            cv_mean_error,
            cv_se,
        },
        fit,
    ))
}

#[cfg(test)]
pub(crate) mod kkt {
    //! Subgradient optimality check, computed from scratch on the
    //! standardised data.
    use crate::linalg::DenseMatrix;

    /// Largest KKT violation of `slopes` (original scale) at `lambda`.
    pub fn max_violation(x: &DenseMatrix, y: &[f64], slopes: &[f64], lambda: f64) -> f64 {
        let (n, p) = (x.rows(), x.cols());
        let nf = n as f64;
        let mut cols = Vec::with_capacity(p);
        let mut beta = Vec::with_capacity(p);
        for j in 0..p {
            let c = x.column(j);
            let m = c.iter().sum::<f64>() / nf;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
            cols.push(c.iter().map(|v| (v - m) / sd).collect::<Vec<_>>());
            beta.push(slopes[j] * sd);
        }
        let ym = y.iter().sum::<f64>() / nf;
        let mut r: Vec<f64> = y.iter().map(|v| v - ym).collect();
        for j in 0..p {
            for i in 0..n {
                r[i] -= cols[j][i] * beta[j];
            }
        }
        let mut worst = 0.0f64;
        for j in 0..p {
            let g: f64 = cols[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf;
            let v = if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}
