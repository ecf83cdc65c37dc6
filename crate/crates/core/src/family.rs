//! Canonical GLM families.
//!
//! A family is described by its cumulant function `a` (with first and second
//! derivatives) and a rate function `r(h) = h² / (r1 + r2·h)` bounding the
//! Bregman remainder of `a` from below:
//!
//! `a(t + h) ≥ a(t) + h·a'(t) + r(|h|)·a''(t)/2` for all `t, h`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};

use crate::error::{check_dim, Error, Result};
use crate::report::{Violation, ViolationKind, ViolationReport};

/// Shape of `a''` on the real line. Curvature extremes over an interval are
/// read off analytically from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureShape {
    Constant,
    Increasing,
    Decreasing,
    /// Increasing up to `mode`, decreasing afterwards.
    Unimodal { mode: f64 },
}

/// Cumulant function of a canonical exponential family.
pub trait Cumulant: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> f64;
    fn first(&self, t: f64) -> f64;
    fn second(&self, t: f64) -> f64;
    fn curvature_shape(&self) -> CurvatureShape;

    /// Open interval of attainable means `a'(t)`.
    fn mean_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `a(t + h) − a(t) − h·a'(t)`. Override when a cancellation-free form exists.
    fn bregman(&self, t: f64, h: f64) -> f64 {
        self.value(t + h) - self.value(t) - h * self.first(t)
    }

    /// `log h(y)` of the base measure, so that `log p(y) = y·t − a(t) + log h(y)`.
    fn log_base_measure(&self, _y: f64) -> f64 {
        0.0
    }

    /// Draw a response at natural parameter `t`, if the family can simulate itself.
    fn sample(&self, _t: f64, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }
}

/// `a(t) = t²/2`: unit-variance Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct GaussianCumulant;

impl Cumulant for GaussianCumulant {
    fn value(&self, t: f64) -> f64 {
        0.5 * t * t
    }
    fn first(&self, t: f64) -> f64 {
        t
    }
    fn second(&self, _t: f64) -> f64 {
        1.0
    }
    fn curvature_shape(&self) -> CurvatureShape {
        CurvatureShape::Constant
    }
    fn bregman(&self, _t: f64, h: f64) -> f64 {
        0.5 * h * h
    }
    fn log_base_measure(&self, y: f64) -> f64 {
        -0.5 * y * y - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
    fn sample(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        Normal::new(t, 1.0).ok().map(|n| n.sample(rng))
    }
}

/// `a(t) = log(1 + eᵗ)`: Bernoulli with logit link.
#[derive(Debug, Clone, Copy)]
pub struct LogisticCumulant;

pub(crate) fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Cumulant for LogisticCumulant {
    fn value(&self, t: f64) -> f64 {
        log1pexp(t)
    }
    fn first(&self, t: f64) -> f64 {
        sigmoid(t)
    }
    fn second(&self, t: f64) -> f64 {
        let e = (-t.abs()).exp();
        e / ((1.0 + e) * (1.0 + e))
    }
    fn curvature_shape(&self) -> CurvatureShape {
        CurvatureShape::Unimodal { mode: 0.0 }
    }
    fn mean_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn sample(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        let p = sigmoid(t);
        Bernoulli::new(p).ok().map(|b| if b.sample(rng) { 1.0 } else { 0.0 })
    }
}

/// `a(t) = eᵗ`: Poisson with log link.
#[derive(Debug, Clone, Copy)]
pub struct PoissonCumulant;

impl Cumulant for PoissonCumulant {
    fn value(&self, t: f64) -> f64 {
        t.exp()
    }
    fn first(&self, t: f64) -> f64 {
        t.exp()
    }
    fn second(&self, t: f64) -> f64 {
        t.exp()
    }
    fn curvature_shape(&self) -> CurvatureShape {
        CurvatureShape::Increasing
    }
    fn mean_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn bregman(&self, t: f64, h: f64) -> f64 {
        t.exp() * (h.exp_m1() - h)
    }
    fn log_base_measure(&self, y: f64) -> f64 {
        -libm::lgamma(y + 1.0)
    }
    fn sample(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        let mu = t.exp();
        if mu <= 0.0 || !mu.is_finite() {
            return None;
        }
        Poisson::new(mu).ok().map(|p| p.sample(rng))
    }
}

/// Rational rate function `r(h) = h² / (r1 + r2·h)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateFunction {
    pub r1: f64,
    pub r2: f64,
}

impl RateFunction {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 >= 0.0 && r2 >= 0.0) || (r1 == 0.0 && r2 == 0.0) || !r1.is_finite() || !r2.is_finite() {
            return Err(Error::Domain(format!(
                "rate coefficients must be finite, nonnegative and not both zero (r1={r1}, r2={r2})"
            )));
        }
        Ok(Self { r1, r2 })
    }

    pub fn eval(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("rate function needs finite h >= 0, got {h}")));
        }
        Ok(self.eval_unchecked(h))
    }

    pub(crate) fn eval_unchecked(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            h * h / (self.r1 + self.r2 * h)
        }
    }
}

/// `(a(t), a'(t), a''(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantEval {
    pub a: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Clone)]
pub struct GlmFamily {
    name: String,
    cumulant: Arc<dyn Cumulant>,
    rate: RateFunction,
}

impl fmt::Debug for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GlmFamily")
            .field("name", &self.name)
            .field("rate", &self.rate)
            .finish()
    }
}

impl GlmFamily {
    pub fn gaussian() -> Self {
        Self {
            name: "gaussian".into(),
            cumulant: Arc::new(GaussianCumulant),
            rate: RateFunction { r1: 1.0, r2: 0.0 },
        }
    }

    pub fn logistic() -> Self {
        Self {
            name: "logistic".into(),
            cumulant: Arc::new(LogisticCumulant),
            rate: RateFunction { r1: 2.0, r2: 1.0 },
        }
    }

    /// Poisson with `r(h) = h²/(1 + h)`. The quadratic rate `r(h) = h²` fails
    /// for negative increments (see [`GlmFamily::with_rate`] to reproduce that).
    pub fn poisson() -> Self {
        Self {
            name: "poisson".into(),
            cumulant: Arc::new(PoissonCumulant),
            rate: RateFunction { r1: 1.0, r2: 1.0 },
        }
    }

    pub fn custom(name: impl Into<String>, cumulant: Arc<dyn Cumulant>, rate: RateFunction) -> Self {
        Self {
            name: name.into(),
            cumulant,
            rate,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::gaussian()),
            "logistic" | "binomial" | "bernoulli" => Ok(Self::logistic()),
            "poisson" => Ok(Self::poisson()),
            _ => Err(Error::Unknown {
                kind: "family",
                name: name.to_string(),
            }),
        }
    }

    pub fn with_rate(mut self, rate: RateFunction) -> Self {
        self.rate = rate;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rate_function(&self) -> RateFunction {
        self.rate
    }

    pub fn cumulant(&self) -> &dyn Cumulant {
        self.cumulant.as_ref()
    }

    pub fn shape(&self) -> CurvatureShape {
        self.cumulant.curvature_shape()
    }

    pub fn mean_range(&self) -> (f64, f64) {
        self.cumulant.mean_range()
    }

    #[inline]
    pub fn a(&self, t: f64) -> f64 {
        self.cumulant.value(t)
    }
    #[inline]
    pub fn a1(&self, t: f64) -> f64 {
        self.cumulant.first(t)
    }
    #[inline]
    pub fn a2(&self, t: f64) -> f64 {
        self.cumulant.second(t)
    }
    #[inline]
    pub fn bregman(&self, t: f64, h: f64) -> f64 {
        self.cumulant.bregman(t, h)
    }

    pub fn eval_cumulant(&self, t: f64) -> Result<CumulantEval> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("cumulant argument must be finite, got {t}")));
        }
        Ok(CumulantEval {
            a: self.a(t),
            a1: self.a1(t),
            a2: self.a2(t),
        })
    }

    pub fn rate(&self, h: f64) -> Result<f64> {
        self.rate.eval(h)
    }

    /// Every grid pair `(t, h)` where the rate inequality fails by more than `1e-12`.
    pub fn validate_rate(&self, t_grid: &[f64], h_grid: &[f64]) -> ViolationReport {
        const TOL: f64 = 1e-12;
        let mut report = ViolationReport::default();
        for &t in t_grid {
            let a2 = self.a2(t);
            for &h in h_grid {
                report.checked += 1;
                let lhs = self.bregman(t, h);
                let rhs = self.rate.eval_unchecked(h.abs()) * a2 / 2.0;
                if !(lhs >= rhs - TOL) {
                    report.violations.push(Violation {
                        kind: ViolationKind::RateInequality,
                        point: vec![t, h],
                        lhs,
                        rhs,
                    });
                }
            }
        }
        report
    }

    /// Canonical log-likelihood `Σ {yᵢ·xᵢ'β − a(xᵢ'β)}`, without the base measure.
    pub fn log_likelihood(&self, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
        check_dim("log_likelihood: rows of X vs y", x.nrows(), y.len())?;
        check_dim("log_likelihood: columns of X vs beta", x.ncols(), beta.len())?;
        let eta = x * beta;
        Ok(eta
            .iter()
            .zip(y.iter())
            .map(|(&t, &yi)| yi * t - self.a(t))
            .sum())
    }

    /// `Σ log h(yᵢ)`; add to [`GlmFamily::log_likelihood`] for the full log density.
    pub fn log_base_measure(&self, y: &DVector<f64>) -> f64 {
        y.iter().map(|&yi| self.cumulant.log_base_measure(yi)).sum()
    }

    pub fn sample(&self, t: f64, rng: &mut dyn RngCore) -> Option<f64> {
        self.cumulant.sample(t, rng)
    }
}

/// Uniform grid `lo, lo + step, …` up to `hi` inclusive (within rounding).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| lo + k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cumulant_trivial_values() {
        let p = GlmFamily::poisson().eval_cumulant(0.0).unwrap();
        assert_eq!((p.a, p.a1, p.a2), (1.0, 1.0, 1.0));

        let l = GlmFamily::logistic().eval_cumulant(0.0).unwrap();
        assert!(close(l.a, 2f64.ln(), 1e-15));
        assert_eq!(l.a1, 0.5);
        assert_eq!(l.a2, 0.25);

        let g = GlmFamily::gaussian().eval_cumulant(2.0).unwrap();
        assert_eq!((g.a, g.a1, g.a2), (2.0, 2.0, 1.0));
    }

    #[test]
    fn non_finite_argument_is_domain_error() {
        assert!(matches!(
            GlmFamily::logistic().eval_cumulant(f64::NAN),
            Err(Error::Domain(_))
        ));
        assert!(GlmFamily::poisson().eval_cumulant(f64::INFINITY).is_err());
    }

    #[test]
    fn logistic_is_stable_far_out() {
        let f = GlmFamily::logistic();
        assert!(close(f.a(800.0), 800.0, 1e-12));
        assert!(f.a(-800.0) >= 0.0 && f.a(-800.0) < 1e-300);
        assert!(f.a2(800.0).is_finite() && f.a2(800.0) >= 0.0);
        assert!(close(f.a1(-40.0), (-40f64).exp(), 1e-30));
    }

    #[test]
    fn rate_values() {
        assert_eq!(GlmFamily::logistic().rate(2.0).unwrap(), 1.0);
        assert_eq!(GlmFamily::poisson().rate(1.0).unwrap(), 0.5);
        for f in [GlmFamily::gaussian(), GlmFamily::logistic(), GlmFamily::poisson()] {
            assert_eq!(f.rate(0.0).unwrap(), 0.0);
        }
        assert!(GlmFamily::gaussian().rate(-0.1).is_err());
        // r1 = 0 still gives r(0) = 0 rather than 0/0
        assert_eq!(RateFunction::new(0.0, 1.0).unwrap().eval(0.0).unwrap(), 0.0);
        assert!(RateFunction::new(0.0, 0.0).is_err());
    }

    #[test]
    fn rate_is_nondecreasing() {
        let hs = grid(0.0, 20.0, 0.01);
        for f in [GlmFamily::gaussian(), GlmFamily::logistic(), GlmFamily::poisson()] {
            let r: Vec<f64> = hs.iter().map(|&h| f.rate(h).unwrap()).collect();
            assert!(r.windows(2).all(|w| w[1] >= w[0]), "{}", f.name());
        }
    }

    #[test]
    fn validate_rate_shipped_families() {
        let g = grid(-10.0, 10.0, 0.1);
        for f in [GlmFamily::gaussian(), GlmFamily::logistic(), GlmFamily::poisson()] {
            let report = f.validate_rate(&g, &g);
            assert!(report.is_empty(), "{}: {:?}", f.name(), report.violations.first());
            assert_eq!(report.checked, g.len() * g.len());
        }
    }

    #[test]
    fn quadratic_poisson_rate_fails_at_negative_increment() {
        let f = GlmFamily::poisson().with_rate(RateFunction::new(1.0, 0.0).unwrap());
        let report = f.validate_rate(&[0.0], &[-1.0, 0.5]);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.point, vec![0.0, -1.0]);
        // e^{-1} - 1 - (-1) = 0.3679 against r(1)/2 = 0.5
        assert!(close(v.lhs, (-1f64).exp(), 1e-15));
        assert!(close(v.rhs, 0.5, 1e-15));
    }

    #[test]
    fn log_likelihood_trivial_values() {
        let x = DMatrix::from_row_slice(1, 1, &[1.0]);
        let ll = GlmFamily::poisson()
            .log_likelihood(&x, &DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![0.0]))
            .unwrap();
        assert_eq!(ll, -1.0);

        let ll = GlmFamily::gaussian()
            .log_likelihood(
                &DMatrix::identity(2, 2),
                &DVector::from_vec(vec![1.0, 1.0]),
                &DVector::from_vec(vec![1.0, 1.0]),
            )
            .unwrap();
        assert_eq!(ll, 1.0);

        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let ll = GlmFamily::logistic()
            .log_likelihood(&x, &DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0]))
            .unwrap();
        assert!(close(ll, -2.0 * 2f64.ln(), 1e-15));
    }

    #[test]
    fn log_likelihood_dimension_mismatch() {
        let x = DMatrix::<f64>::zeros(3, 2);
        let f = GlmFamily::gaussian();
        assert!(matches!(
            f.log_likelihood(&x, &DVector::zeros(2), &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(f.log_likelihood(&x, &DVector::zeros(3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn by_name_and_unknown() {
        assert_eq!(GlmFamily::by_name("Poisson").unwrap().name(), "poisson");
        assert!(matches!(GlmFamily::by_name("gamma"), Err(Error::Unknown { .. })));
    }
}
