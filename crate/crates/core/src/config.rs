//! Flat JSON experiment configuration and its resolution into typed components.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::LowerCurvatureTerm;
use crate::data::{DesignKind, Mechanism};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::prior::{ExtremeMethod, Prior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model family: `gaussian`, `logistic` or `poisson`.
    pub family: String,
    /// Data-generating mechanism: `glm-well-specified` (uses `family`),
    /// `probit-truth`, `negbin-truth` or `hetero-gaussian`.
    pub mechanism: String,
    /// True coefficients; padded with zeros (or truncated) to the dimension.
    pub beta0: Vec<f64>,
    pub negbin_size: f64,
    pub sigmas: Vec<f64>,
    /// `rademacher`, `uniform`, `fixed-grid` or `first-column-intercept`.
    pub design: String,
    pub n: usize,
    pub d: usize,
    /// When set, `d = ⌈n^d_exponent⌉` overrides `d`.
    pub d_exponent: Option<f64>,
    /// `laplace-product`, `gaussian-product`, `student-product` or `uniform-box`.
    pub prior: String,
    /// `κ` for the Laplace prior, coordinate scale for the others.
    pub prior_scale: f64,
    pub prior_df: f64,
    pub prior_lo: f64,
    pub prior_hi: f64,
    /// `conservative`, `analytic` or `numeric`.
    pub prior_method: String,
    /// `spherical` (`W = n·I`) or `fisher` (`W = X'diag(a''(xᵢ'β*))X`).
    pub ellipsoid: String,
    /// `R = radius_c1²`; with `W = n·I` the ball radius is `radius_c1·√(d/n)`.
    pub radius_c1: f64,
    /// `empirical`, `subgaussian` or `subexponential`.
    pub c_source: String,
    pub k0: f64,
    pub calib_replicates: usize,
    pub delta_tilde: f64,
    pub eta: f64,
    pub delta: f64,
    /// `stated` (`c/2`) or `log` (`log(c)/2`).
    pub lower_term: String,
    /// `auto`, `conjugate`, `quadrature`, `importance` or `none`.
    pub oracle: String,
    pub quad_nodes: usize,
    pub quad_halfwidth: f64,
    pub is_draws: usize,
    /// Uniform points for the sampled quadratic check; 0 skips it.
    pub assumption1_samples: usize,
    pub n_replicates: usize,
    /// Sample sizes for `bic-scan` and `concentration`.
    pub n_grid: Vec<usize>,
    pub master_seed: u64,
    pub output_path: Option<String>,
    pub label: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: "gaussian".into(),
            mechanism: "glm-well-specified".into(),
            beta0: Vec::new(),
            negbin_size: 5.0,
            sigmas: vec![1.0],
            design: "rademacher".into(),
            n: 100,
            d: 2,
            d_exponent: None,
            prior: "laplace-product".into(),
            prior_scale: 1.0,
            prior_df: 3.0,
            prior_lo: -10.0,
            prior_hi: 10.0,
            prior_method: "conservative".into(),
            ellipsoid: "spherical".into(),
            radius_c1: 4.0,
            c_source: "empirical".into(),
            k0: crate::process::DEFAULT_K0,
            calib_replicates: 1000,
            delta_tilde: 0.05,
            eta: 0.05,
            delta: 0.05,
            lower_term: "stated".into(),
            oracle: "auto".into(),
            quad_nodes: 24,
            quad_halfwidth: 12.0,
            is_draws: 20_000,
            assumption1_samples: 0,
            n_replicates: 100,
            n_grid: Vec::new(),
            master_seed: 0,
            output_path: None,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EllipsoidKind {
    Spherical,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CSource {
    Empirical,
    Subgaussian,
    Subexponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    Conjugate,
    Quadrature,
    Importance,
    None,
}

/// Typed view of a configuration; building one validates every name.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub family: GlmFamily,
    pub prior: Prior,
    pub design: DesignKind,
    pub prior_method: ExtremeMethod,
    pub ellipsoid: EllipsoidKind,
    pub c_source: CSource,
    pub lower_term: LowerCurvatureTerm,
    pub oracle: OracleChoice,
}

fn unknown(kind: &'static str, name: &str) -> Error {
    Error::Unknown {
        kind,
        name: name.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Model dimension at sample size `n`.
    pub fn dimension(&self, n: usize) -> usize {
        match self.d_exponent {
            Some(e) => (n as f64).powf(e).ceil() as usize,
            None => self.d,
        }
    }

    /// `beta0` padded with zeros or truncated to `d`.
    pub fn beta0_for(&self, d: usize) -> Vec<f64> {
        (0..d).map(|j| self.beta0.get(j).copied().unwrap_or(0.0)).collect()
    }

    pub fn mechanism_for(&self, d: usize) -> Result<Mechanism> {
        let beta0 = self.beta0_for(d);
        Ok(match self.mechanism.as_str() {
            "glm-well-specified" => Mechanism::GlmWellSpecified {
                family: GlmFamily::by_name(&self.family)?,
                beta0,
            },
            "probit-truth" => Mechanism::ProbitTruth { beta0 },
            "negbin-truth" => Mechanism::NegBinTruth {
                size: self.negbin_size,
                beta0,
            },
            "hetero-gaussian" => Mechanism::HeteroGaussian {
                beta0,
                sigmas: self.sigmas.clone(),
            },
            other => return Err(unknown("mechanism", other)),
        })
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| format!("{}-d{}", self.family, self.d))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let family = GlmFamily::by_name(&self.family)?;
        let prior = Prior::by_name(&self.prior, self.prior_scale, self.prior_df, self.prior_lo, self.prior_hi)?;
        let design: DesignKind = self.design.parse()?;
        let prior_method: ExtremeMethod = self.prior_method.parse()?;
        let ellipsoid = match self.ellipsoid.as_str() {
            "spherical" => EllipsoidKind::Spherical,
            "fisher" => EllipsoidKind::Fisher,
            other => return Err(unknown("ellipsoid", other)),
        };
        let c_source = match self.c_source.as_str() {
            "empirical" => CSource::Empirical,
            "subgaussian" => CSource::Subgaussian,
            "subexponential" => CSource::Subexponential,
            other => return Err(unknown("C source", other)),
        };
        let lower_term: LowerCurvatureTerm = self.lower_term.parse()?;
        let conjugate_ok = family.name() == "gaussian" && matches!(prior, Prior::GaussianProduct { .. });
        let oracle = match self.oracle.as_str() {
            "auto" if conjugate_ok => OracleChoice::Conjugate,
            "auto" if self.d_exponent.is_none() && self.d <= 3 => OracleChoice::Quadrature,
            "auto" => OracleChoice::Importance,
            "conjugate" if conjugate_ok => OracleChoice::Conjugate,
            "conjugate" => {
                return Err(Error::Config(
                    "the conjugate oracle needs the gaussian family with a gaussian-product prior".into(),
                ))
            }
            "quadrature" => OracleChoice::Quadrature,
            "importance" => OracleChoice::Importance,
            "none" => OracleChoice::None,
            other => return Err(unknown("oracle", other)),
        };
        self.validate_numbers()?;
        self.mechanism_for(self.d.max(1))?;
        Ok(Resolved {
            family,
            prior,
            design,
            prior_method,
            ellipsoid,
            c_source,
            lower_term,
            oracle,
        })
    }

    fn validate_numbers(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_replicates < 1 {
            return fail("n_replicates must be at least 1".into());
        }
        if self.d_exponent.is_none() && self.d < 1 {
            return fail("d must be at least 1".into());
        }
        if let Some(e) = self.d_exponent {
            if !(e > 0.0 && e < 1.0) {
                return fail(format!("d_exponent must lie in (0, 1), got {e}"));
            }
        }
        if !(self.radius_c1 > 0.0) {
            return fail(format!("radius_c1 must be positive, got {}", self.radius_c1));
        }
        for (name, v) in [("eta", self.eta), ("delta", self.delta)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("n_grid must be strictly increasing".into());
        }
        Ok(())
    }
}
