//! The pseudo-true parameter `β* = argmax 𝔼ℓ(β)` and the KL gap around it.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::family::{CurvatureShape, GlmFamily};

pub const MAX_NEWTON_ITERATIONS: usize = 200;
const ARMIJO_C: f64 = 1e-4;
/// Line-search guard on `max |xᵢ'β|` for families with exponential tails.
const MAX_LINEAR_PREDICTOR: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct ExpectedLoglik {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `𝔼ℓ(β) = Σ {𝔼yᵢ·xᵢ'β − a(xᵢ'β)}` with its gradient and Hessian.
pub fn expected_loglik(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    true_mean: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<ExpectedLoglik> {
    check_dim("expected_loglik: rows of X vs true mean", x.nrows(), true_mean.len())?;
    check_dim("expected_loglik: columns of X vs beta", x.ncols(), beta.len())?;
    let eta = x * beta;
    let d = x.ncols();
    let mut value = 0.0;
    let mut resid = DVector::zeros(x.nrows());
    let mut weighted = x.clone();
    for i in 0..x.nrows() {
        let t = eta[i];
        value += true_mean[i] * t - family.a(t);
        resid[i] = true_mean[i] - family.a1(t);
        let w = family.a2(t).sqrt();
        for j in 0..d {
            weighted[(i, j)] *= w;
        }
    }
    let gradient = x.transpose() * resid;
    let hessian = -(weighted.transpose() * &weighted);
    Ok(ExpectedLoglik {
        value,
        gradient,
        hessian,
    })
}

fn expected_value(family: &GlmFamily, x: &DMatrix<f64>, true_mean: &DVector<f64>, beta: &DVector<f64>) -> (f64, f64) {
    let eta = x * beta;
    let max_abs = eta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let value = eta
        .iter()
        .zip(true_mean.iter())
        .map(|(&t, &m)| m * t - family.a(t))
        .sum();
    (value, max_abs)
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoTrueFit {
    pub beta_star: Vec<f64>,
    /// `𝔼ℓ(β*)`.
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient tolerance used, `1e-8·n`.
    pub tol_grad: f64,
    /// `𝔼ℓ` at every accepted iterate, starting from `β = 0`.
    pub objective_trace: Vec<f64>,
}

impl PseudoTrueFit {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_star)
    }
}

/// Damped Newton ascent with Armijo backtracking from `β = 0`.
pub fn solve_pseudo_true(family: &GlmFamily, x: &DMatrix<f64>, true_mean: &DVector<f64>) -> Result<PseudoTrueFit> {
    check_dim("solve_pseudo_true: rows of X vs true mean", x.nrows(), true_mean.len())?;
    let (lo, hi) = family.mean_range();
    if let Some((i, &m)) = true_mean
        .iter()
        .enumerate()
        .find(|(_, &m)| !(m > lo && m < hi) || !m.is_finite())
    {
        return Err(Error::Divergence(format!(
            "true mean {m} at observation {i} is outside the open mean range ({lo}, {hi}) of family `{}`",
            family.name()
        )));
    }
    let gram = x.transpose() * x;
    if Cholesky::new(gram).is_none() {
        return Err(Error::Singular("design X is rank deficient".into()));
    }

    let n = x.nrows();
    let tol_grad = 1e-8 * n as f64;
    let guard = family.shape() != CurvatureShape::Constant;
    let mut beta = DVector::zeros(x.ncols());
    let mut trace = Vec::new();

    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let cur = expected_loglik(family, x, true_mean, &beta)?;
        trace.push(cur.value);
        let grad_norm = cur.gradient.norm();
        if grad_norm <= tol_grad {
            return Ok(PseudoTrueFit {
                beta_star: beta.iter().copied().collect(),
                objective: cur.value,
                grad_norm,
                iterations: iteration,
                converged: true,
                tol_grad,
                objective_trace: trace,
            });
        }
        if iteration == MAX_NEWTON_ITERATIONS {
            return Err(Error::NotConverged {
                iterations: iteration,
                grad_norm,
            });
        }
        let neg_h = -cur.hessian;
        let chol = Cholesky::new(neg_h).ok_or_else(|| {
            Error::Singular(format!("expected-loglik Hessian singular at iteration {iteration}"))
        })?;
        let step_dir = chol.solve(&cur.gradient);
        let slope = cur.gradient.dot(&step_dir);

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let cand = &beta + &step_dir * step;
            let (val, max_abs) = expected_value(family, x, true_mean, &cand);
            let in_guard = !guard || max_abs <= MAX_LINEAR_PREDICTOR;
            if in_guard && val.is_finite() && val >= cur.value + ARMIJO_C * step * slope {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(b) => beta = b,
            None => {
                return Err(Error::Divergence(format!(
                    "line search failed at iteration {iteration} (gradient norm {grad_norm:e})"
                )))
            }
        }
    }
    unreachable!("loop returns on convergence or at the iteration cap")
}

/// `D(β*, β) = Σ {a(xᵢ'β) − a(xᵢ'β*) − a'(xᵢ'β*)·xᵢ'(β−β*)}`.
///
/// At a converged `β*` this equals `−𝔼ℓ(β, β*)`.
pub fn kl_gap(family: &GlmFamily, x: &DMatrix<f64>, beta_star: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
    check_dim("kl_gap: columns of X vs beta*", x.ncols(), beta_star.len())?;
    check_dim("kl_gap: columns of X vs beta", x.ncols(), beta.len())?;
    let eta_star = x * beta_star;
    let diff = x * (beta - beta_star);
    Ok(eta_star
        .iter()
        .zip(diff.iter())
        .map(|(&t, &h)| family.bregman(t, h))
        .sum())
}

/// Lower bound on the KL gap from the rate function,
/// `(β−β*)'X'WX(β−β*) / (2·(r1 + r2·‖X‖∞·√d·‖β−β*‖))`, `W = diag a''(xᵢ'β*)`.
pub fn kl_rate_lower_bound(family: &GlmFamily, x: &DMatrix<f64>, beta_star: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let rate = family.rate_function();
    let eta_star = x * beta_star;
    let delta = beta - beta_star;
    let xd = x * &delta;
    let quad: f64 = eta_star
        .iter()
        .zip(xd.iter())
        .map(|(&t, &h)| family.a2(t) * h * h)
        .sum();
    let x_inf = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let d = x.ncols() as f64;
    quad / (2.0 * (rate.r1 + rate.r2 * x_inf * d.sqrt() * delta.norm()))
}
