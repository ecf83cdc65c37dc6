//! The centered log-likelihood process over the localization ellipsoid.
//!
//! For a GLM, `ℓ(β) − 𝔼ℓ(β) = ⟨y − 𝔼y, Xβ⟩` is linear in `β`, so the supremum
//! of its increments over an ellipsoid is available in closed form.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::Ellipsoid;
use crate::data::Mechanism;
use crate::error::{check_dim, Error, Result};
use crate::quadform::operator_norm;
use crate::rng::{stream, Purpose};

pub const DEFAULT_K0: f64 = 8.0;
pub const MIN_CALIBRATION_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    SubgaussianTheory,
    SubexponentialTheory,
    EmpiricalQuantile,
}

impl ConstantSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstantSource::SubgaussianTheory => "subgaussian-theory",
            ConstantSource::SubexponentialTheory => "subexponential-theory",
            ConstantSource::EmpiricalQuantile => "empirical-quantile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessConstants {
    /// The supremum over the ellipsoid is at most `c·d` with probability `1 − δ̃`.
    #[serde(rename = "C")]
    pub c: f64,
    pub delta_tilde: f64,
    pub source: ConstantSource,
}

impl ProcessConstants {
    pub fn delta_tilde_in_range(&self) -> bool {
        self.delta_tilde > 0.0 && self.delta_tilde < 0.25
    }
}

/// Tail model of `y − 𝔼y` used by the theoretical constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    SubGaussian { tau: f64 },
    /// `ν` multiplies `‖X‖₂`; `ḡ` is the scale of the linear term.
    SubExponential { nu: f64, gbar: f64 },
}

/// `sup_{‖β−β*‖≤ρ} |⟨r, X(β−β*)⟩| = ρ·‖X'r‖`.
pub fn exact_sup(x: &DMatrix<f64>, residual: &DVector<f64>, rho: f64) -> Result<f64> {
    check_dim("exact_sup: rows of X vs residual", x.nrows(), residual.len())?;
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {rho}")));
    }
    Ok(rho * (x.transpose() * residual).norm())
}

/// Supremum of the same linear process over a general ellipsoid, `√(R·d·s'W⁻¹s)` with `s = X'r`.
pub fn exact_sup_ellipsoid(x: &DMatrix<f64>, residual: &DVector<f64>, ell: &Ellipsoid) -> Result<f64> {
    check_dim("exact_sup: rows of X vs residual", x.nrows(), residual.len())?;
    check_dim("exact_sup: columns of X vs ellipsoid", ell.dim(), x.ncols())?;
    Ok(ell.linear_halfwidth(&(x.transpose() * residual)))
}

/// `‖X‖₂·√(1+x) + ḡ·x`.
pub fn baraud_threshold(norm: f64, gbar: f64, x: f64) -> f64 {
    norm * (1.0 + x).sqrt() + gbar * x
}

/// Constants implied by a tail model; `k0` is the universal constant of the
/// sub-Gaussian supremum bound.
pub fn theoretical_c(tail: TailModel, x: &DMatrix<f64>, ell: &Ellipsoid, k0: f64) -> Result<ProcessConstants> {
    check_dim("theoretical_c: columns of X vs ellipsoid", ell.dim(), x.ncols())?;
    let d = x.ncols() as f64;
    let rho = ell.outer_radius();
    let norm = operator_norm(x);
    match tail {
        TailModel::SubGaussian { tau } => {
            if !(tau >= 0.0) || !(k0 > 0.0) {
                return Err(Error::Config(format!("sub-Gaussian constants need tau >= 0 and K0 > 0, got {tau}, {k0}")));
            }
            Ok(ProcessConstants {
                c: k0 * tau * norm * rho * d.sqrt() / d,
                delta_tilde: (-d).exp(),
                source: ConstantSource::SubgaussianTheory,
            })
        }
        TailModel::SubExponential { nu, gbar } => {
            if !(nu >= 0.0) || !(gbar >= 0.0) {
                return Err(Error::Config(format!("sub-exponential constants need nu, gbar >= 0, got {nu}, {gbar}")));
            }
            Ok(ProcessConstants {
                c: rho * baraud_threshold(nu * norm, gbar, d) / d,
                delta_tilde: 2.0 * (-d).exp(),
                source: ConstantSource::SubexponentialTheory,
            })
        }
    }
}

/// Sorted simulated suprema, one per replicate response drawn from `mechanism`
/// on `truth_x`; the process is that of the model with design `model_x`.
pub fn simulate_sups(
    mechanism: &Mechanism,
    truth_x: &DMatrix<f64>,
    true_mean: &DVector<f64>,
    model_x: &DMatrix<f64>,
    ell: &Ellipsoid,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut sups = (0..n_rep)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Purpose::Calibration, k as u64);
            let y = mechanism.draw_response(truth_x, true_mean, &mut rng)?;
            exact_sup_ellipsoid(model_x, &(y - true_mean), ell)
        })
        .collect::<Result<Vec<f64>>>()?;
    sups.sort_by(f64::total_cmp);
    Ok(sups)
}

/// Conservative empirical `q`-quantile: the `⌈q·n⌉`-th order statistic.
pub fn upper_quantile(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// `C` from the empirical `(1−δ̃)`-quantile of simulated suprema, divided by `d`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_c(
    mechanism: &Mechanism,
    truth_x: &DMatrix<f64>,
    true_mean: &DVector<f64>,
    model_x: &DMatrix<f64>,
    ell: &Ellipsoid,
    n_rep: usize,
    delta_tilde: f64,
    seed: u64,
) -> Result<ProcessConstants> {
    if n_rep < MIN_CALIBRATION_REPLICATES {
        return Err(Error::InsufficientReplicates {
            required: MIN_CALIBRATION_REPLICATES,
            got: n_rep,
        });
    }
    if !(delta_tilde > 0.0 && delta_tilde < 0.25) {
        return Err(Error::Config(format!("delta_tilde must lie in (0, 1/4), got {delta_tilde}")));
    }
    let sups = simulate_sups(mechanism, truth_x, true_mean, model_x, ell, n_rep, seed)?;
    Ok(ProcessConstants {
        c: upper_quantile(&sups, 1.0 - delta_tilde) / model_x.ncols() as f64,
        delta_tilde,
        source: ConstantSource::EmpiricalQuantile,
    })
}
