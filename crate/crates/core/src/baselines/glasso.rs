//! Sparse dictionary selection: `min_A |X - XA|_F^2 + (lambda/2) |A|_{2,1}` solved by
//! proximal gradient from `A = 0` with step `1/L`, `L = 2 sigma_max(X^T X)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 5000;
pub const TOLERANCE: f64 = 1e-8;
/// Relative change above which hitting the iteration cap counts as non-convergence.
pub const STALL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    /// `n x n`; row `i` says how frame `i` is used to reconstruct the others.
    pub a: Array2<f64>,
    pub lambda: f64,
    /// Objective after every iteration, starting with the value at `A = 0`.
    pub objective_trace: Vec<f64>,
    /// `s_i = |A_{i,:}|_2`
    pub row_scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative objective change of the last iteration.
    pub last_change: f64,
}

impl SparseCoefficients {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }

    pub fn group_norm(&self) -> f64 {
        self.row_scores.iter().sum()
    }

    pub fn require_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                change: self.last_change,
            })
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
pub fn largest_eigenvalue(g: &Array2<f64>) -> f64 {
    let n = g.nrows();
    // a fixed, non-symmetric start avoids being orthogonal to the top eigenvector by
    // construction
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-13 * next.abs() {
            return next.max(norm);
        }
        estimate = next;
    }
    estimate
}

/// `|X - XA|_F^2 = tr(P^T G P)` with `P = I - A`, given `GA = G A`. Summing
/// `P o (G P)` keeps precision near the optimum, where `G P` is small.
fn loss(g: &Array2<f64>, ga: &Array2<f64>, a: &Array2<f64>) -> f64 {
    let n = g.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = if i == j { 1.0 } else { 0.0 } - a[[i, j]];
            total += p * (g[[i, j]] - ga[[i, j]]);
        }
    }
    total.max(0.0)
}

pub fn row_norms(a: &Array2<f64>) -> Vec<f64> {
    a.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect()
}

/// Solves the problem for `X` given as `d x n` (one column per frame).
pub fn group_lasso(x: ArrayView2<f64>, lambda: f64) -> Result<SparseCoefficients> {
    group_lasso_with(x, lambda, MAX_ITERATIONS, TOLERANCE)
}

pub fn group_lasso_with(x: ArrayView2<f64>, lambda: f64, max_iterations: usize, tolerance: f64) -> Result<SparseCoefficients> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = x.ncols();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in the frame matrix".into()));
    }
    let g = x.t().dot(&x);
    let lipschitz = 2.0 * largest_eigenvalue(&g);
    let mut a = Array2::<f64>::zeros((n, n));
    let mut ga = Array2::<f64>::zeros((n, n));
    let penalty = |a: &Array2<f64>| 0.5 * lambda * row_norms(a).iter().sum::<f64>();
    let mut objective = loss(&g, &ga, &a);
    let mut trace = vec![objective];
    if lipschitz == 0.0 {
        // X = 0: every A has zero loss and A = 0 minimizes the penalty
        return Ok(finish(a, lambda, trace, 0, true, 0.0));
    }
    let step = 1.0 / lipschitz;
    let shrink = 0.5 * lambda * step;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        // grad = 2 (GA - G)
        let mut next = &a - &((&ga - &g) * (2.0 * step));
        for mut row in next.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            let scale = if norm > shrink { 1.0 - shrink / norm } else { 0.0 };
            row *= scale;
        }
        let next_ga = g.dot(&next);
        let next_objective = loss(&g, &next_ga, &next) + penalty(&next);
        change = (objective - next_objective).abs() / objective.abs().max(f64::MIN_POSITIVE);
        a = next;
        ga = next_ga;
        objective = next_objective;
        trace.push(objective);
        if objective == 0.0 {
            change = 0.0;
        }
        if change < tolerance {
            break;
        }
    }
    let converged = change < tolerance || change <= STALL_TOLERANCE;
    if change >= tolerance {
        log::warn!("group lasso stopped after {iterations} iterations with relative change {change:.3e}");
    }
    Ok(finish(a, lambda, trace, iterations, converged, change))
}

fn finish(a: Array2<f64>, lambda: f64, objective_trace: Vec<f64>, iterations: usize, converged: bool, last_change: f64) -> SparseCoefficients {
    SparseCoefficients {
        row_scores: row_norms(&a),
        a,
        lambda,
        objective_trace,
        iterations,
        converged,
        last_change,
    }
}

/// Smallest lambda for which `A = 0` is optimal: `4 max_i |(X^T X)_{i,:}|_2`.
pub fn zero_solution_lambda(x: ArrayView2<f64>) -> f64 {
    let g = x.t().dot(&x);
    4.0 * row_norms(&g).into_iter().fold(0.0, f64::max)
}

pub fn objective(x: ArrayView2<f64>, a: &Array2<f64>, lambda: f64) -> f64 {
    let r = &x - &x.dot(a);
    (&r * &r).sum() + 0.5 * lambda * row_norms(a).iter().sum::<f64>()
}
