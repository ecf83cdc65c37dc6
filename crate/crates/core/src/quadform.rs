//! Gaussian quadratic forms and dense spectral helpers.
//!
//! `prob_ball(M, t)` is `P(‖ξ‖² ≤ t)` for `ξ ~ N(0, M)`. With `M = QΛQ'`,
//! `‖ξ‖²` has the law of `Σ λᵢ zᵢ²` for iid standard normal `zᵢ`, a weighted
//! chi-square. Its CDF is recovered by fixed-Talbot inversion of the Laplace
//! transform `Π (1 + 2λᵢ s)^{-1/2} / s`. Probabilities too small for the
//! inversion's absolute accuracy fall back to Ruben's mixture series.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbMethodKind {
    EigenSeries,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbMethod {
    EigenSeries,
    MonteCarlo { draws: usize, seed: u64 },
    /// Eigen-series up to dimension 500, Monte Carlo (10⁶ draws) above.
    Auto { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbResult {
    pub p: f64,
    /// `ln p`, accurate even when `p` is far below the inversion's absolute error.
    pub log_p: f64,
    pub standard_error: f64,
    pub method: ProbMethodKind,
}

const PSD_TOL: f64 = 1e-10;
const TALBOT_NODES: usize = 32;
const SMALL_P: f64 = 1e-6;
pub const MC_DEFAULT_DRAWS: usize = 1_000_000;

/// Eigenvalues of a symmetric PSD matrix; tiny negative rounding is clamped to 0.
pub fn psd_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "psd matrix must be square",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &v| a.max(v.abs()));
    let mut out = Vec::with_capacity(m.nrows());
    for &v in eig.eigenvalues.iter() {
        if v < -PSD_TOL * scale {
            return Err(Error::NotPsd { eigenvalue: v });
        }
        out.push(v.max(0.0));
    }
    Ok(out)
}

pub fn prob_ball(m: &DMatrix<f64>, t: f64, method: ProbMethod) -> Result<ProbResult> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("prob_ball threshold must be >= 0, got {t}")));
    }
    let lambdas = psd_eigenvalues(m)?;
    let method = match method {
        ProbMethod::Auto { seed } if lambdas.len() > 500 => ProbMethod::MonteCarlo {
            draws: MC_DEFAULT_DRAWS,
            seed,
        },
        ProbMethod::Auto { .. } => ProbMethod::EigenSeries,
        other => other,
    };
    match method {
        ProbMethod::MonteCarlo { draws, seed } => Ok(weighted_chisq_cdf_mc(&lambdas, t, draws, seed)),
        _ => Ok(weighted_chisq_cdf(&lambdas, t)),
    }
}

/// `P(Σ λᵢ zᵢ² ≤ t)` by numerical inversion; weights must be nonnegative.
pub fn weighted_chisq_cdf(lambdas: &[f64], t: f64) -> ProbResult {
    let positive: Vec<f64> = lambdas.iter().copied().filter(|&l| l > 0.0).collect();
    let exact = |p: f64| ProbResult {
        p,
        log_p: p.ln(),
        standard_error: 0.0,
        method: ProbMethodKind::EigenSeries,
    };
    if positive.is_empty() {
        return exact(1.0);
    }
    if t == 0.0 {
        return exact(0.0);
    }
    if t.is_infinite() {
        return exact(1.0);
    }
    let p = talbot_cdf(&positive, t).clamp(0.0, 1.0);
    if p < SMALL_P {
        if let Some(log_p) = ruben_log_cdf(&positive, t) {
            return ProbResult {
                p: log_p.exp(),
                log_p,
                standard_error: 0.0,
                method: ProbMethodKind::EigenSeries,
            };
        }
    }
    exact(p)
}

fn talbot_cdf(lambdas: &[f64], t: f64) -> f64 {
    let m = TALBOT_NODES;
    let r = 2.0 * m as f64 / (5.0 * t);
    let transform = |s: Complex64| -> Complex64 {
        let mut log_phi = Complex64::new(0.0, 0.0);
        for &l in lambdas {
            log_phi += (Complex64::new(1.0, 0.0) + s * (2.0 * l)).ln();
        }
        (log_phi * -0.5).exp() / s
    };
    let mut acc = 0.5 * (transform(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        acc += ((s * t).exp() * transform(s) * Complex64::new(1.0, sigma)).re;
    }
    r / m as f64 * acc
}

/// Ruben's expansion `Σ cₖ P(χ²_{d+2k} ≤ t/β)` with `β = min λ`, in log space.
/// Returns `None` when the series does not settle within its term budget.
fn ruben_log_cdf(lambdas: &[f64], t: f64) -> Option<f64> {
    const MAX_TERMS: usize = 20_000;
    let d = lambdas.len() as f64;
    let beta = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let log_c0: f64 = lambdas.iter().map(|&l| 0.5 * (beta / l).ln()).sum();
    let gammas: Vec<f64> = lambdas.iter().map(|&l| 1.0 - beta / l).collect();
    let x = t / beta / 2.0;

    // normalized coefficients ĉₖ = cₖ / c₀; terms accumulated as logs
    let mut chat = vec![1.0_f64];
    let mut g = Vec::new();
    let mut powers = vec![1.0_f64; gammas.len()];
    let mut log_total = f64::NEG_INFINITY;
    for k in 0..MAX_TERMS {
        if k > 0 {
            for (p, &gm) in powers.iter_mut().zip(&gammas) {
                *p *= gm;
            }
            g.push(0.5 * powers.iter().sum::<f64>());
            let ck = (0..k).map(|r| g[k - 1 - r] * chat[r]).sum::<f64>() / k as f64;
            if !ck.is_finite() {
                return None;
            }
            chat.push(ck);
        }
        let a = d / 2.0 + k as f64;
        if chat[k] <= 0.0 {
            continue;
        }
        let log_term = chat[k].ln() + log_regularized_lower_gamma_small(a, x);
        log_total = log_add(log_total, log_term);
        if k > 4 && a > x && log_term < log_total - 39.0 {
            return Some(log_c0 + log_total);
        }
    }
    None
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln P(a, x)` by its power series; adequate for the Ruben fallback where `x` is small.
fn log_regularized_lower_gamma_small(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut n = 1.0;
    while n < 10_000.0 {
        term *= x / (a + n);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        n += 1.0;
    }
    a * x.ln() - x - libm::lgamma(a + 1.0) + sum.ln()
}

pub fn weighted_chisq_cdf_mc(lambdas: &[f64], t: f64, draws: usize, seed: u64) -> ProbResult {
    let mut rng = stream(seed, Purpose::MonteCarlo, 0);
    let mut hits = 0usize;
    for _ in 0..draws {
        let mut q = 0.0;
        for &l in lambdas {
            let z: f64 = StandardNormal.sample(&mut rng);
            q += l * z * z;
        }
        if q <= t {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    ProbResult {
        p,
        log_p: p.ln(),
        standard_error: (p * (1.0 - p) / draws as f64).sqrt(),
        method: ProbMethodKind::MonteCarlo,
    }
}

/// `log |H|` from a Cholesky factorization.
pub fn log_det_pd(h: &DMatrix<f64>) -> Result<f64> {
    if h.nrows() != h.ncols() {
        return Err(Error::Singular("log-determinant needs a square matrix".into()));
    }
    let chol = Cholesky::new(h.clone())
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut s = 0.0;
    for i in 0..h.nrows() {
        let v = l[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Singular(format!("non-positive Cholesky pivot {v:e}")));
        }
        s += v.ln();
    }
    Ok(2.0 * s)
}

/// Largest singular value of `x` by power iteration on `X'X`.
pub fn operator_norm(x: &DMatrix<f64>) -> f64 {
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let gram = x.transpose() * x;
    let mut v = DVector::from_fn(d, |j, _| 1.0 + 1.0 / (j as f64 + std::f64::consts::E));
    v /= v.norm();
    let mut theta = 0.0;
    for _ in 0..100_000 {
        let w = &gram * &v;
        theta = v.dot(&w);
        let residual = (&w - &v * theta).norm();
        if residual <= 1e-11 * theta.abs() {
            break;
        }
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
    }
    theta.max(0.0).sqrt()
}

/// Symmetric square root of an SPD matrix.
pub fn spd_sqrt(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new((w + w.transpose()) * 0.5);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Singular("matrix square root needs a positive definite matrix".into()));
    }
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose())
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(h.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_one_and_two_dof() {
        let p = prob_ball(&DMatrix::identity(1, 1), 1.0, ProbMethod::EigenSeries).unwrap();
        // P(|Z| <= 1)
        assert!((p.p - 0.682_689_492_137_085_9).abs() < 1e-8, "{}", p.p);
        let p = prob_ball(&DMatrix::identity(2, 2), 2.0 * 20f64.ln(), ProbMethod::EigenSeries).unwrap();
        assert!((p.p - 0.95).abs() < 1e-8, "{}", p.p);
        let p = prob_ball(&(DMatrix::identity(1, 1) * 4.0), 1.0, ProbMethod::EigenSeries).unwrap();
        // P(|Z| <= 0.5)
        assert!((p.p - 0.382_924_922_548_026).abs() < 1e-8, "{}", p.p);
    }

    #[test]
    fn degenerate_inputs() {
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(prob_ball(&zero, 0.0, ProbMethod::EigenSeries).unwrap().p, 1.0);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(prob_ball(&id, 0.0, ProbMethod::EigenSeries).unwrap().p, 0.0);
        assert!(matches!(
            prob_ball(&id, -1.0, ProbMethod::EigenSeries),
            Err(Error::Domain(_))
        ));
        let mut bad = DMatrix::<f64>::identity(2, 2);
        bad[(1, 1)] = -1e-3;
        assert!(matches!(
            prob_ball(&bad, 1.0, ProbMethod::EigenSeries),
            Err(Error::NotPsd { .. })
        ));
        // rank-deficient: the zero direction contributes nothing
        let mut rank1 = DMatrix::<f64>::zeros(2, 2);
        rank1[(0, 0)] = 1.0;
        let p = prob_ball(&rank1, 1.0, ProbMethod::EigenSeries).unwrap();
        assert!((p.p - 0.682_689_492_137_085_9).abs() < 1e-8);
    }

    #[test]
    fn small_probabilities_stay_accurate_in_log() {
        // P(χ²₄ ≤ t) = 1 − e^{−t/2}(1 + t/2)
        let t = 1e-4;
        let exact = -(-t / 2.0_f64).exp_m1() - (-t / 2.0_f64).exp() * t / 2.0;
        let p = weighted_chisq_cdf(&[1.0; 4], t);
        assert!(((p.log_p - exact.ln()) / exact.ln()).abs() < 1e-8, "{} vs {}", p.log_p, exact.ln());
    }

    #[test]
    fn log_det_values() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((log_det_pd(&d).unwrap() - 6f64.ln()).abs() < 1e-15);
        assert_eq!(log_det_pd(&DMatrix::identity(4, 4)).unwrap(), 0.0);
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(log_det_pd(&neg), Err(Error::Singular(_))));
    }

    #[test]
    fn operator_norm_values() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        assert!((operator_norm(&d) - 4.0).abs() < 1e-9);
        assert_eq!(operator_norm(&DMatrix::zeros(5, 3)), 0.0);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = spd_sqrt(&a).unwrap();
        assert!((&s * &s - &a).abs().max() < 1e-12);
    }
}
