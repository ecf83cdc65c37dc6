//! Product priors and their extremes over the localization ellipsoid.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::curvature::Ellipsoid;
use crate::error::{Error, Result};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Independent, identically distributed coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// Density `κ/2·e^{−κ|x|}` per coordinate.
    LaplaceProduct { kappa: f64 },
    /// `N(0, scale²)` per coordinate.
    GaussianProduct { scale: f64 },
    /// Student-t with `df` degrees of freedom and the given scale per coordinate.
    StudentProduct { df: f64, scale: f64 },
    /// Uniform on `[lo, hi]` per coordinate.
    UniformBox { lo: f64, hi: f64 },
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::LaplaceProduct { kappa } => write!(f, "laplace-product(kappa={kappa})"),
            Prior::GaussianProduct { scale } => write!(f, "gaussian-product(scale={scale})"),
            Prior::StudentProduct { df, scale } => write!(f, "student-product(df={df}, scale={scale})"),
            Prior::UniformBox { lo, hi } => write!(f, "uniform-box({lo}, {hi})"),
        }
    }
}

impl Prior {
    pub fn laplace(kappa: f64) -> Result<Self> {
        Self::LaplaceProduct { kappa }.validated()
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::GaussianProduct { scale }.validated()
    }

    pub fn student(df: f64, scale: f64) -> Result<Self> {
        Self::StudentProduct { df, scale }.validated()
    }

    pub fn uniform_box(lo: f64, hi: f64) -> Result<Self> {
        Self::UniformBox { lo, hi }.validated()
    }

    /// Build a prior from its name. `scale` is `κ` for the Laplace prior and the
    /// coordinate scale otherwise; `df` is used by the Student prior only.
    pub fn by_name(name: &str, scale: f64, df: f64, lo: f64, hi: f64) -> Result<Self> {
        match name {
            "laplace-product" => Self::laplace(scale),
            "gaussian-product" => Self::gaussian(scale),
            "student-product" => Self::student(df, scale),
            "uniform-box" => Self::uniform_box(lo, hi),
            _ => Err(Error::Unknown {
                kind: "prior",
                name: name.into(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Prior::LaplaceProduct { .. } => "laplace-product",
            Prior::GaussianProduct { .. } => "gaussian-product",
            Prior::StudentProduct { .. } => "student-product",
            Prior::UniformBox { .. } => "uniform-box",
        }
    }

    fn validated(self) -> Result<Self> {
        let ok = match self {
            Prior::LaplaceProduct { kappa } => kappa > 0.0 && kappa.is_finite(),
            Prior::GaussianProduct { scale } => scale > 0.0 && scale.is_finite(),
            Prior::StudentProduct { df, scale } => df > 0.0 && scale > 0.0 && df.is_finite() && scale.is_finite(),
            Prior::UniformBox { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Config(format!("invalid prior parameters: {self}")))
        }
    }

    /// Whether the density is strictly positive everywhere.
    pub fn is_everywhere_positive(&self) -> bool {
        !matches!(self, Prior::UniformBox { .. })
    }

    /// Coordinate values where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Prior::LaplaceProduct { .. } => vec![0.0],
            Prior::UniformBox { lo, hi } => vec![lo, hi],
            Prior::GaussianProduct { .. } | Prior::StudentProduct { .. } => Vec::new(),
        }
    }

    /// Writing each coordinate density as `∝ e^{−κh(x)}`, the constant `D_h`
    /// with `|h(x)−h(y)| ≤ D_h + D_h|x−y|`, when one exists.
    pub fn shape_constant(&self) -> Option<f64> {
        match *self {
            Prior::LaplaceProduct { .. } => Some(1.0),
            // h(x) = (ν+1)/2·log(1 + x²/(νs²)) is Lipschitz with constant (ν+1)/(2s√ν)
            Prior::StudentProduct { df, scale } => Some((df + 1.0) / (2.0 * scale * df.sqrt())),
            Prior::GaussianProduct { .. } | Prior::UniformBox { .. } => None,
        }
    }

    /// The shape function `h` of [`Prior::shape_constant`].
    pub fn shape_function(&self, x: f64) -> Option<f64> {
        match *self {
            Prior::LaplaceProduct { .. } => Some(x.abs()),
            Prior::StudentProduct { df, scale } => Some(0.5 * (df + 1.0) * (x * x / (df * scale * scale)).ln_1p()),
            Prior::GaussianProduct { .. } | Prior::UniformBox { .. } => None,
        }
    }

    /// Heavy-tailed priors with a Lipschitz-type shape function, the class covered
    /// by the posterior concentration experiments.
    pub fn in_concentration_class(&self) -> bool {
        self.shape_constant().is_some()
    }

    /// Log density of one coordinate.
    pub fn log_density_1d(&self, x: f64) -> f64 {
        match *self {
            Prior::LaplaceProduct { kappa } => (0.5 * kappa).ln() - kappa * x.abs(),
            Prior::GaussianProduct { scale } => {
                -0.5 * (2.0 * std::f64::consts::PI).ln() - scale.ln() - 0.5 * (x / scale).powi(2)
            }
            Prior::StudentProduct { df, scale } => {
                libm::lgamma(0.5 * (df + 1.0)) - libm::lgamma(0.5 * df) - 0.5 * (df.ln() + LN_PI) - scale.ln()
                    - 0.5 * (df + 1.0) * (x * x / (df * scale * scale)).ln_1p()
            }
            Prior::UniformBox { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Derivative of [`Prior::log_density_1d`] (zero at the Laplace kink and
    /// everywhere for the uniform box).
    pub fn grad_log_density_1d(&self, x: f64) -> f64 {
        match *self {
            Prior::LaplaceProduct { kappa } => {
                if x > 0.0 {
                    -kappa
                } else if x < 0.0 {
                    kappa
                } else {
                    0.0
                }
            }
            Prior::GaussianProduct { scale } => -x / (scale * scale),
            Prior::StudentProduct { df, scale } => -(df + 1.0) * x / (df * scale * scale + x * x),
            Prior::UniformBox { .. } => 0.0,
        }
    }

    /// Second derivative where it exists, `0` for the piecewise-linear Laplace.
    pub fn hess_log_density_1d(&self, x: f64) -> f64 {
        match *self {
            Prior::GaussianProduct { scale } => -1.0 / (scale * scale),
            Prior::StudentProduct { df, scale } => {
                let v = df * scale * scale;
                -(df + 1.0) * (v - x * x) / (v + x * x).powi(2)
            }
            Prior::LaplaceProduct { .. } | Prior::UniformBox { .. } => 0.0,
        }
    }

    /// Exact log density; `−∞` outside the support of a uniform box.
    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        beta.iter().map(|&b| self.log_density_1d(b)).sum()
    }

    pub fn grad_log_density(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta.map(|b| self.grad_log_density_1d(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremeMethod {
    Analytic,
    Conservative,
    Numeric,
}

impl FromStr for ExtremeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "conservative" => Ok(Self::Conservative),
            "numeric" => Ok(Self::Numeric),
            _ => Err(Error::Unknown {
                kind: "prior extreme method",
                name: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorExtremes {
    pub log_sup: f64,
    pub log_inf: f64,
    pub method: ExtremeMethod,
}

/// `log sup π` and `log inf π` over the ellipsoid.
pub fn extremes_over_ball(prior: &Prior, ell: &Ellipsoid, method: ExtremeMethod) -> Result<PriorExtremes> {
    if let Prior::UniformBox { lo, hi } = *prior {
        check_box_support(lo, hi, ell)?;
        let v = ell.dim() as f64 * -(hi - lo).ln();
        return Ok(PriorExtremes {
            log_sup: v,
            log_inf: v,
            method,
        });
    }
    let (log_sup, log_inf) = match method {
        ExtremeMethod::Conservative => conservative(prior, ell),
        ExtremeMethod::Analytic => analytic(prior, ell)?,
        ExtremeMethod::Numeric => numeric(prior, ell),
    };
    Ok(PriorExtremes {
        log_sup,
        log_inf,
        method,
    })
}

fn check_box_support(lo: f64, hi: f64, ell: &Ellipsoid) -> Result<()> {
    for (j, hw) in ell.coordinate_halfwidths().into_iter().enumerate() {
        let c = ell.center()[j];
        if c - hw < lo || c + hw > hi {
            return Err(Error::Support(format!(
                "coordinate {j} of the ellipsoid spans [{}, {}], outside the prior box [{lo}, {hi}]",
                c - hw,
                c + hw
            )));
        }
    }
    Ok(())
}

fn conservative(prior: &Prior, ell: &Ellipsoid) -> (f64, f64) {
    let d = ell.dim() as f64;
    let rho = ell.outer_radius();
    let c = ell.center();
    match *prior {
        Prior::LaplaceProduct { kappa } => {
            let l1 = c.lp_norm(1);
            let base = d * (0.5 * kappa).ln();
            (base - kappa * (l1 - d.sqrt() * rho).max(0.0), base - kappa * (l1 + d.sqrt() * rho))
        }
        Prior::GaussianProduct { scale } => gaussian_extremes(scale, d, c.norm(), rho),
        Prior::StudentProduct { .. } => {
            let hws = ell.coordinate_halfwidths();
            let mut sup = 0.0;
            let mut inf = 0.0;
            for (j, hw) in hws.into_iter().enumerate() {
                let a = c[j].abs();
                sup += prior.log_density_1d((a - hw).max(0.0));
                inf += prior.log_density_1d(a + hw);
            }
            (sup, inf)
        }
        Prior::UniformBox { .. } => unreachable!("handled by extremes_over_ball"),
    }
}

fn gaussian_extremes(scale: f64, d: f64, center_norm: f64, rho: f64) -> (f64, f64) {
    let base = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - d * scale.ln();
    let near = (center_norm - rho).max(0.0);
    let far = center_norm + rho;
    (base - 0.5 * (near / scale).powi(2), base - 0.5 * (far / scale).powi(2))
}

/// Minimum of `‖β‖₁` over the ball `‖β − c‖ ≤ ρ`: soft-thresholding `c` at the
/// level `λ` where `Σ min(|cⱼ|, λ)² = ρ²`.
pub fn min_l1_over_ball(c: &DVector<f64>, rho: f64) -> f64 {
    if c.norm() <= rho {
        return 0.0;
    }
    let mut a: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    let d = a.len();
    let target = rho * rho;
    let mut below = 0.0;
    for k in 0..d {
        // λ in [a[k-1], a[k]]: f(λ) = below + (d−k)·λ²
        let at_next = below + (d - k) as f64 * a[k] * a[k];
        if at_next >= target {
            let lambda = ((target - below) / (d - k) as f64).sqrt();
            return a[k..].iter().map(|v| v - lambda).sum();
        }
        below += a[k] * a[k];
    }
    0.0
}

fn analytic(prior: &Prior, ell: &Ellipsoid) -> Result<(f64, f64)> {
    let rho = ell.ball_radius().ok_or_else(|| {
        Error::Capability("analytic prior extremes need a spherical ellipsoid (W a multiple of I)".into())
    })?;
    let d = ell.dim() as f64;
    let c = ell.center();
    match *prior {
        Prior::LaplaceProduct { kappa } => {
            let base = d * (0.5 * kappa).ln();
            let max_l1 = c.lp_norm(1) + rho * d.sqrt();
            Ok((base - kappa * min_l1_over_ball(c, rho), base - kappa * max_l1))
        }
        Prior::GaussianProduct { scale } => Ok(gaussian_extremes(scale, d, c.norm(), rho)),
        Prior::StudentProduct { .. } => {
            if c.iter().any(|&v| v != 0.0) {
                return Err(Error::Capability(
                    "analytic extremes of the Student prior are only available for balls centered at 0".into(),
                ));
            }
            // log(1 + u) is concave in u = x², so the sum is smallest with the
            // radius spread evenly over the coordinates
            let even = rho / d.sqrt();
            Ok((d * prior.log_density_1d(0.0), d * prior.log_density_1d(even)))
        }
        Prior::UniformBox { .. } => unreachable!("handled by extremes_over_ball"),
    }
}

fn smoothed_grad(prior: &Prior, beta: &DVector<f64>, eps: f64) -> DVector<f64> {
    match *prior {
        Prior::LaplaceProduct { kappa } => beta.map(|b| -kappa * b / (b * b + eps * eps).sqrt()),
        _ => prior.grad_log_density(beta),
    }
}

fn project_unit(u: DVector<f64>) -> DVector<f64> {
    let n = u.norm();
    if n > 1.0 {
        u / n
    } else {
        u
    }
}

/// Projected normalized-gradient ascent of `sign·log π` over the unit-ball
/// parametrization, with smoothing continuation for the Laplace kink.
fn ascend(prior: &Prior, ell: &Ellipsoid, start: DVector<f64>, sign: f64) -> f64 {
    let f = |u: &DVector<f64>| sign * prior.log_density(&ell.from_unit(u));
    let mut u = project_unit(start);
    let mut fu = f(&u);
    let schedule: &[f64] = match prior {
        Prior::LaplaceProduct { .. } => &[1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
        _ => &[0.0],
    };
    for &eps in schedule {
        let smooth = |u: &DVector<f64>| -> f64 {
            let beta = ell.from_unit(u);
            match *prior {
                Prior::LaplaceProduct { kappa } => {
                    sign * -kappa * beta.iter().map(|b| (b * b + eps * eps).sqrt()).sum::<f64>()
                }
                _ => sign * prior.log_density(&beta),
            }
        };
        let mut fs = smooth(&u);
        let mut step = 0.25;
        for _ in 0..20_000 {
            let g = ell.pullback_gradient(&smoothed_grad(prior, &ell.from_unit(&u), eps)) * sign;
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            let cand = project_unit(&u + g * (step / gn));
            let fc = smooth(&cand);
            if fc > fs {
                u = cand;
                fs = fc;
                step = (step * 1.5).min(1.0);
            } else {
                step *= 0.5;
                if step < 1e-13 {
                    break;
                }
            }
        }
        fu = fu.max(f(&u));
    }
    sign * fu
}

fn numeric(prior: &Prior, ell: &Ellipsoid) -> (f64, f64) {
    let d = ell.dim();
    let c = ell.center();
    let rho = ell.outer_radius();
    let toward = if c.norm() > 0.0 {
        c / c.norm()
    } else {
        DVector::from_element(d, 1.0 / (d as f64).sqrt())
    };
    let signs = c.map(|v| if v < 0.0 { -1.0 } else { 1.0 }) / (d as f64).sqrt();

    let sup_starts = [DVector::zeros(d), ell.to_unit(&(c - &toward * rho)), ell.to_unit(&(c - &signs * rho))];
    let inf_starts = [ell.to_unit(&(c + &toward * rho)), ell.to_unit(&(c + &signs * rho))];
    let sup = sup_starts
        .into_iter()
        .map(|u| ascend(prior, ell, u, 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let inf = inf_starts
        .into_iter()
        .map(|u| ascend(prior, ell, u, -1.0))
        .fold(f64::INFINITY, f64::min);
    (sup, inf)
}
