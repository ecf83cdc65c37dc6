//! Two-sided bounds on the log evidence around `ℓ(β*) − ½ log|H|`.
//!
//! ```text
//! upper = ℓ* − ½log|H| + (C + ½log 2π)·d + log sup π − log(1−η) + log P(‖ξ‖² ≤ R·d)
//! lower = ℓ* − ½log|H| + (−C + ½log 2π + κ(c))·d + log inf π + log P(‖ξ‖² ≤ R·d/c)
//! ```
//!
//! with `ξ ~ N(0, W^{1/2} H⁻¹ W^{1/2})` and `κ(c) = c/2` (or `log(c)/2`, see
//! [`LowerCurvatureTerm`]). The sup/inf of the prior are over the ellipsoid.

use std::str::FromStr;

use serde::Serialize;

use crate::curvature::{CurvatureCertificate, Ellipsoid};
use crate::error::{Error, Result};
use crate::prior::PriorExtremes;
use crate::process::{ConstantSource, ProcessConstants};
use crate::quadform::{log_det_pd, prob_ball, spd_inverse, spd_sqrt, ProbMethod};

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-dimension curvature contribution to the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerCurvatureTerm {
    /// `c/2`.
    #[default]
    Stated,
    /// `log(c)/2`, what integrating the Gaussian with precision `H/c` produces.
    LogC,
}

impl LowerCurvatureTerm {
    pub fn eval(self, c: f64) -> f64 {
        match self {
            LowerCurvatureTerm::Stated => 0.5 * c,
            LowerCurvatureTerm::LogC => 0.5 * c.ln(),
        }
    }
}

impl FromStr for LowerCurvatureTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stated" => Ok(Self::Stated),
            "log" | "log-c" => Ok(Self::LogC),
            _ => Err(Error::Unknown {
                kind: "lower curvature term",
                name: s.into(),
            }),
        }
    }
}

/// Everything the bound arithmetic needs, with the probability terms already in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundComponents {
    pub ell_star: f64,
    pub log_det_h: f64,
    pub c_process: f64,
    pub c_curvature: f64,
    pub d: usize,
    pub log_sup_prior: f64,
    pub log_inf_prior: f64,
    pub eta: f64,
    pub log_prob_rd: f64,
    pub log_prob_rd_over_c: f64,
    pub lower_term: LowerCurvatureTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperTerms {
    #[serde(rename = "C1_d")]
    pub c1_d: f64,
    pub log_sup_prior: f64,
    pub minus_log_1_minus_eta: f64,
    #[serde(rename = "log_prob_Rd")]
    pub log_prob_rd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerTerms {
    #[serde(rename = "C2_d")]
    pub c2_d: f64,
    pub log_inf_prior: f64,
    #[serde(rename = "log_prob_Rd_over_c")]
    pub log_prob_rd_over_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assembled {
    /// `ℓ* − ½ log|H|`.
    pub laplace: f64,
    pub upper: f64,
    pub lower: f64,
    pub terms_upper: UpperTerms,
    pub terms_lower: LowerTerms,
}

/// The bound arithmetic, with no numerical work.
pub fn assemble(b: &BoundComponents) -> Assembled {
    let d = b.d as f64;
    let laplace = b.ell_star - 0.5 * b.log_det_h;
    let terms_upper = UpperTerms {
        c1_d: (b.c_process + HALF_LN_2PI) * d,
        log_sup_prior: b.log_sup_prior,
        minus_log_1_minus_eta: -(-b.eta).ln_1p(),
        log_prob_rd: b.log_prob_rd,
    };
    let terms_lower = LowerTerms {
        c2_d: (-b.c_process + HALF_LN_2PI + b.lower_term.eval(b.c_curvature)) * d,
        log_inf_prior: b.log_inf_prior,
        log_prob_rd_over_c: b.log_prob_rd_over_c,
    };
    Assembled {
        laplace,
        upper: laplace + terms_upper.c1_d + terms_upper.log_sup_prior + terms_upper.minus_log_1_minus_eta + terms_upper.log_prob_rd,
        lower: laplace + terms_lower.c2_d + terms_lower.log_inf_prior + terms_lower.log_prob_rd_over_c,
        terms_upper,
        terms_lower,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    #[serde(rename = "C")]
    pub c_process: f64,
    #[serde(rename = "c")]
    pub c_curvature: f64,
    pub eta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    pub d: usize,
    pub lower_term: LowerCurvatureTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    pub c_in_range: bool,
    pub eta_in_range: bool,
    pub delta_in_range: bool,
    pub delta_tilde_in_range: bool,
    /// `None` until the sampled quadratic check has been run.
    pub assumption1_checked: Option<bool>,
    pub assumption2_source: ConstantSource,
    pub prior_everywhere_positive: bool,
    /// `log P(‖ξ‖² ≤ R·d) ≤ log P(‖ξ‖² ≤ R·d/c)`.
    pub prob_terms_ordered: bool,
}

impl Validity {
    pub fn all_hold(&self) -> bool {
        self.c_in_range
            && self.eta_in_range
            && self.delta_in_range
            && self.delta_tilde_in_range
            && self.assumption1_checked != Some(false)
            && self.prior_everywhere_positive
            && self.prob_terms_ordered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleAnchor {
    /// `ℓ(β̂)`.
    pub ell_hat: f64,
    /// `ℓ(β̂) − ℓ(β*) ≥ 0`.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub ell_star: f64,
    #[serde(rename = "log_det_H")]
    pub log_det_h: f64,
    pub laplace: f64,
    pub upper: f64,
    pub lower: f64,
    pub terms_upper: UpperTerms,
    pub terms_lower: LowerTerms,
    pub constants: BoundConstants,
    pub validity: Validity,
    /// `1 − δ − δ̃`.
    pub coverage_guarantee: f64,
    pub theorem_certified: bool,
    pub mle_anchor: Option<MleAnchor>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub lower_term: LowerCurvatureTerm,
    pub prob_method: ProbMethod,
    pub prior_everywhere_positive: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            lower_term: LowerCurvatureTerm::Stated,
            prob_method: ProbMethod::Auto { seed: 0 },
            prior_everywhere_positive: true,
        }
    }
}

fn in_open_quarter(p: f64) -> bool {
    p > 0.0 && p < 0.25
}

/// Compute both bounds and their decomposition.
///
/// `loglik_at_star` is the realized `ℓ(β*)` (with base measure if the evidence
/// it is compared against includes it).
#[allow(clippy::too_many_arguments)]
pub fn compute_bounds(
    loglik_at_star: f64,
    cert: &CurvatureCertificate,
    process: &ProcessConstants,
    prior: &PriorExtremes,
    ell: &Ellipsoid,
    eta: f64,
    delta: f64,
    options: &BoundOptions,
) -> Result<BoundsReport> {
    if !(0.0..1.0).contains(&eta) || !(0.0..1.0).contains(&delta) {
        return Err(Error::Config(format!("eta and delta must lie in [0, 1), got {eta}, {delta}")));
    }
    let d = ell.dim();
    let log_det_h = log_det_pd(&cert.h)?;
    let w_half = spd_sqrt(ell.w())?;
    let m = &w_half * spd_inverse(&cert.h)? * &w_half;
    let p_rd = prob_ball(&m, ell.rd(), options.prob_method)?;
    let p_rd_c = prob_ball(&m, ell.rd() / cert.c, options.prob_method)?;
    for (p, label) in [(&p_rd, "R·d"), (&p_rd_c, "R·d/c")] {
        if !(p.log_p > f64::NEG_INFINITY) {
            return Err(Error::LogOfZero(format!(
                "P(‖ξ‖² ≤ {label}) is zero to working precision; the ellipsoid (R = {}) is too small",
                ell.r()
            )));
        }
    }
    let components = BoundComponents {
        ell_star: loglik_at_star,
        log_det_h,
        c_process: process.c,
        c_curvature: cert.c,
        d,
        log_sup_prior: prior.log_sup,
        log_inf_prior: prior.log_inf,
        eta,
        log_prob_rd: p_rd.log_p,
        log_prob_rd_over_c: p_rd_c.log_p,
        lower_term: options.lower_term,
    };
    let a = assemble(&components);
    let validity = Validity {
        c_in_range: cert.c_in_range(),
        eta_in_range: in_open_quarter(eta),
        delta_in_range: in_open_quarter(delta),
        delta_tilde_in_range: process.delta_tilde_in_range(),
        assumption1_checked: None,
        assumption2_source: process.source,
        prior_everywhere_positive: options.prior_everywhere_positive,
        prob_terms_ordered: p_rd.log_p <= p_rd_c.log_p + 1e-12,
    };
    Ok(BoundsReport {
        ell_star: loglik_at_star,
        log_det_h,
        laplace: a.laplace,
        upper: a.upper,
        lower: a.lower,
        terms_upper: a.terms_upper,
        terms_lower: a.terms_lower,
        constants: BoundConstants {
            c_process: process.c,
            c_curvature: cert.c,
            eta,
            r: ell.r(),
            delta,
            delta_tilde: process.delta_tilde,
            d,
            lower_term: options.lower_term,
        },
        theorem_certified: validity.all_hold(),
        validity,
        coverage_guarantee: 1.0 - delta - process.delta_tilde,
        mle_anchor: None,
    })
}

pub const CSV_HEADER: [&str; 18] = [
    "ell_star",
    "log_det_H",
    "laplace",
    "lower",
    "upper",
    "C1_d",
    "log_sup_prior",
    "minus_log_1_minus_eta",
    "log_prob_Rd",
    "C2_d",
    "log_inf_prior",
    "log_prob_Rd_over_c",
    "C",
    "c",
    "R",
    "d",
    "coverage_guarantee",
    "theorem_certified",
];

impl BoundsReport {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }

    pub fn contains(&self, log_z: f64) -> bool {
        self.lower <= log_z && log_z <= self.upper
    }

    /// Record the outcome of the sampled quadratic check and recertify.
    pub fn set_assumption1(&mut self, held: bool) {
        self.validity.assumption1_checked = Some(held);
        self.theorem_certified = self.validity.all_hold();
    }

    /// Also report the bounds relative to the maximized likelihood `ℓ(β̂)`.
    pub fn anchor_at_mle(&mut self, ell_hat: f64) {
        self.mle_anchor = Some(MleAnchor {
            ell_hat,
            gap: ell_hat - self.ell_star,
        });
    }

    /// Sum of the recorded upper terms; equals `upper` up to rounding.
    pub fn upper_from_terms(&self) -> f64 {
        let t = &self.terms_upper;
        self.laplace + t.c1_d + t.log_sup_prior + t.minus_log_1_minus_eta + t.log_prob_rd
    }

    pub fn lower_from_terms(&self) -> f64 {
        let t = &self.terms_lower;
        self.laplace + t.c2_d + t.log_inf_prior + t.log_prob_rd_over_c
    }

    pub fn csv_record(&self) -> Vec<String> {
        let t = &self.terms_upper;
        let l = &self.terms_lower;
        let k = &self.constants;
        [
            self.ell_star,
            self.log_det_h,
            self.laplace,
            self.lower,
            self.upper,
            t.c1_d,
            t.log_sup_prior,
            t.minus_log_1_minus_eta,
            t.log_prob_rd,
            l.c2_d,
            l.log_inf_prior,
            l.log_prob_rd_over_c,
            k.c_process,
            k.c_curvature,
            k.r,
        ]
        .iter()
        .map(|v| v.to_string())
        .chain([k.d.to_string(), self.coverage_guarantee.to_string(), self.theorem_certified.to_string()])
        .collect()
    }
}
