//! Designs and data-generating mechanisms, well specified or not.
//!
//! Each mechanism exposes its exact mean `𝔼y` and a certified tail parameter:
//! a sub-Gaussian `τ` for bounded or Gaussian responses, sub-exponential
//! `(ν, ḡ)` for count responses.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Bernoulli, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Rademacher,
    Uniform,
    /// Cosine (DCT-II) columns: orthogonal, first column all ones.
    FixedGrid,
    /// Ones in the first column, uniform[−1, 1] elsewhere.
    FirstColumnIntercept,
}

impl FromStr for DesignKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(Self::Rademacher),
            "uniform" | "uniform[-1,1]" => Ok(Self::Uniform),
            "fixed-grid" => Ok(Self::FixedGrid),
            "first-column-intercept" | "intercept" => Ok(Self::FirstColumnIntercept),
            _ => Err(Error::Unknown {
                kind: "design",
                name: s.to_string(),
            }),
        }
    }
}

/// `n × d` design with entries in `[−1, 1]`, deterministic given `seed`.
pub fn make_design(n: usize, d: usize, kind: DesignKind, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || n < d {
        return Err(Error::Config(format!("design needs n >= d >= 1, got n={n}, d={d}")));
    }
    let mut rng = stream(seed, Purpose::Design, 0);
    let x = match kind {
        DesignKind::Rademacher => DMatrix::from_fn(n, d, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
        DesignKind::Uniform => DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..=1.0)),
        DesignKind::FixedGrid => DMatrix::from_fn(n, d, |i, j| {
            (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / n as f64).cos()
        }),
        DesignKind::FirstColumnIntercept => {
            // column-major fill keeps the random stream independent of the intercept
            let mut x = DMatrix::from_element(n, d, 1.0);
            for j in 1..d {
                for i in 0..n {
                    x[(i, j)] = rng.random_range(-1.0..=1.0);
                }
            }
            x
        }
    };
    Ok(x)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Sub-exponential tail parameters: `𝔼e^{λ(yᵢ−𝔼yᵢ)} ≤ e^{λ²ν²/2}` for `|λ| ≤ 1/ḡ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubExponential {
    pub nu: f64,
    pub gbar: f64,
}

#[derive(Debug, Clone)]
pub enum Mechanism {
    GlmWellSpecified { family: GlmFamily, beta0: Vec<f64> },
    /// Bernoulli responses with `P(y=1) = Φ(x'β₀)`.
    ProbitTruth { beta0: Vec<f64> },
    /// Negative binomial with mean `exp(x'β₀)` and the given size (dispersion).
    NegBinTruth { size: f64, beta0: Vec<f64> },
    /// `y = x'β₀ + σᵢε`, with `σᵢ` cycling through `sigmas`.
    HeteroGaussian { beta0: Vec<f64>, sigmas: Vec<f64> },
}

impl Mechanism {
    pub fn name(&self) -> String {
        match self {
            Mechanism::GlmWellSpecified { family, .. } => format!("glm-well-specified({})", family.name()),
            Mechanism::ProbitTruth { .. } => "probit-truth".into(),
            Mechanism::NegBinTruth { .. } => "negbin-truth".into(),
            Mechanism::HeteroGaussian { .. } => "hetero-gaussian".into(),
        }
    }

    fn beta0(&self) -> &[f64] {
        match self {
            Mechanism::GlmWellSpecified { beta0, .. }
            | Mechanism::ProbitTruth { beta0 }
            | Mechanism::NegBinTruth { beta0, .. }
            | Mechanism::HeteroGaussian { beta0, .. } => beta0,
        }
    }

    fn linear_predictor(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let beta0 = self.beta0();
        if beta0.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "mechanism coefficients vs design columns",
                expected: x.ncols(),
                found: beta0.len(),
            });
        }
        Ok(x * DVector::from_column_slice(beta0))
    }

    fn validate(&self) -> Result<()> {
        if self.beta0().iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("mechanism coefficients must be finite".into()));
        }
        match self {
            Mechanism::NegBinTruth { size, .. } if !(*size > 0.0) => {
                Err(Error::Config(format!("negative binomial size must be positive, got {size}")))
            }
            Mechanism::HeteroGaussian { sigmas, .. } if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0)) => {
                Err(Error::Config("hetero-gaussian needs a nonempty list of positive sigmas".into()))
            }
            _ => Ok(()),
        }
    }

    /// Analytic `𝔼y` under the mechanism.
    pub fn true_mean(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.validate()?;
        let eta = self.linear_predictor(x)?;
        Ok(match self {
            Mechanism::GlmWellSpecified { family, .. } => eta.map(|t| family.a1(t)),
            Mechanism::ProbitTruth { .. } => eta.map(normal_cdf),
            Mechanism::NegBinTruth { .. } => eta.map(f64::exp),
            Mechanism::HeteroGaussian { .. } => eta,
        })
    }

    fn sigma(&self, i: usize) -> f64 {
        match self {
            Mechanism::HeteroGaussian { sigmas, .. } => sigmas[i % sigmas.len()],
            _ => 1.0,
        }
    }

    /// Certified sub-Gaussian parameter of `y − 𝔼y`, if one exists.
    pub fn tau(&self, n: usize) -> Option<f64> {
        match self {
            Mechanism::GlmWellSpecified { family, .. } => match family.name() {
                "gaussian" => Some(1.0),
                "logistic" => Some(0.5),
                _ => None,
            },
            Mechanism::ProbitTruth { .. } => Some(0.5),
            Mechanism::NegBinTruth { .. } => None,
            Mechanism::HeteroGaussian { sigmas, .. } => {
                let used = n.min(sigmas.len());
                Some(sigmas[..used].iter().copied().fold(0.0, f64::max))
            }
        }
    }

    /// Sub-exponential parameters for count mechanisms, from the centered
    /// cumulant generating function at the edge `gᵢ` of its domain.
    pub fn sub_exponential(&self, true_mean: &DVector<f64>) -> Option<SubExponential> {
        let per_obs: Vec<(f64, f64)> = match self {
            Mechanism::GlmWellSpecified { family, .. } if family.name() == "poisson" => true_mean
                .iter()
                .map(|&mu| {
                    let g: f64 = 1.0;
                    let psi = mu * (g.exp() - 1.0 - g);
                    (g, (2.0 * psi).sqrt() / g)
                })
                .collect(),
            Mechanism::NegBinTruth { size, .. } => true_mean
                .iter()
                .map(|&mu| {
                    let g = 0.5 * (1.0 + size / mu).ln();
                    let psi = -size * (1.0 - mu / size * g.exp_m1()).ln() - g * mu;
                    (g, (2.0 * psi).sqrt() / g)
                })
                .collect(),
            _ => return None,
        };
        let g_min = per_obs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let nu = per_obs.iter().map(|p| p.1).fold(0.0, f64::max);
        Some(SubExponential { nu, gbar: 1.0 / g_min })
    }

    /// One response vector drawn from `rng`.
    pub fn draw_response(&self, x: &DMatrix<f64>, true_mean: &DVector<f64>, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        let n = x.nrows();
        let mut y = DVector::zeros(n);
        match self {
            Mechanism::GlmWellSpecified { family, .. } => {
                let eta = self.linear_predictor(x)?;
                for i in 0..n {
                    y[i] = family.sample(eta[i], rng).ok_or_else(|| {
                        Error::Config(format!("family `{}` cannot simulate responses", family.name()))
                    })?;
                }
            }
            Mechanism::ProbitTruth { .. } => {
                for i in 0..n {
                    let b = Bernoulli::new(true_mean[i].clamp(0.0, 1.0))
                        .map_err(|e| Error::Domain(e.to_string()))?;
                    y[i] = if b.sample(rng) { 1.0 } else { 0.0 };
                }
            }
            Mechanism::NegBinTruth { size, .. } => {
                for i in 0..n {
                    let mu = true_mean[i];
                    let rate = Gamma::new(*size, mu / size)
                        .map_err(|e| Error::Domain(e.to_string()))?
                        .sample(rng);
                    y[i] = if rate > 0.0 {
                        Poisson::new(rate).map_err(|e| Error::Domain(e.to_string()))?.sample(rng)
                    } else {
                        0.0
                    };
                }
            }
            Mechanism::HeteroGaussian { .. } => {
                for i in 0..n {
                    let nrm = Normal::new(true_mean[i], self.sigma(i)).map_err(|e| Error::Domain(e.to_string()))?;
                    y[i] = nrm.sample(rng);
                }
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub true_mean: DVector<f64>,
    /// `None` when the responses are not sub-Gaussian (use `sub_exponential`).
    pub tau: Option<f64>,
    pub sub_exponential: Option<SubExponential>,
    pub mechanism: String,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn d(&self) -> usize {
        self.x.ncols()
    }
    pub fn residual(&self) -> DVector<f64> {
        &self.y - &self.true_mean
    }

    /// CSV with columns `y, true_mean, x1..xd`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y".to_string(), "true_mean".to_string()];
        header.extend((1..=self.d()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut row = vec![self.y[i].to_string(), self.true_mean[i].to_string()];
            row.extend((0..self.d()).map(|j| self.x[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draw a dataset from `mechanism` on the fixed design `x`.
pub fn simulate_truth(mechanism: &Mechanism, x: &DMatrix<f64>, seed: u64) -> Result<Dataset> {
    if x.ncols() == 0 || x.nrows() < x.ncols() {
        return Err(Error::Config(format!(
            "simulation needs n >= d >= 1, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let true_mean = mechanism.true_mean(x)?;
    let mut rng = stream(seed, Purpose::Response, 0);
    let y = mechanism.draw_response(x, &true_mean, &mut rng)?;
    let tau = mechanism.tau(x.nrows());
    let sub_exponential = if tau.is_none() {
        mechanism.sub_exponential(&true_mean)
    } else {
        None
    };
    Ok(Dataset {
        x: x.clone(),
        y,
        true_mean,
        tau,
        sub_exponential,
        mechanism: mechanism.name(),
        seed,
    })
}
