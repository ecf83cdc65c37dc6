//! Reference values of the log evidence `log ∫ e^{ℓ(β)} π(β) dβ` and of posterior
//! masses: a closed form for the conjugate Gaussian model, tensor Gauss–Legendre
//! quadrature for `d ≤ 3`, and heavy-tailed importance sampling beyond.
//!
//! All evidences include the base measure of the response density, so they are
//! log marginal densities of `y`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::curvature::Ellipsoid;
use crate::error::{check_dim, Error, Result};
use crate::family::GlmFamily;
use crate::prior::Prior;
use crate::quadform::{ProbMethodKind, ProbResult};
use crate::rng::{stream, Purpose};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const MIN_IS_DRAWS: usize = 10_000;
pub const ESS_FLOOR: f64 = 0.05;
pub const PROPOSAL_DF: f64 = 5.0;
pub const PROPOSAL_INFLATION: f64 = 1.5;
pub const MIN_BOX_HALFWIDTH: f64 = 12.0;
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Boundary log-integrand allowed relative to the peak, `log(1e-10)`.
const BOX_LOG_RATIO: f64 = -23.025_850_929_940_457;
const MAX_QUADRATURE_POINTS: usize = 1 << 22;
const DRAW_CHUNK: usize = 4096;
/// Smoothing of the Laplace kink while locating the mode.
const MODE_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Conjugate,
    Quadrature,
    ImportanceSampling,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvidenceEstimate {
    pub log_z: f64,
    pub standard_error: f64,
    pub method: OracleMethod,
    pub n_evals_or_draws: usize,
    /// Effective sample size, importance sampling only.
    pub ess: Option<f64>,
    /// Nodes per dimension of the accepted rule, quadrature only.
    pub nodes_per_dim: Option<usize>,
}

/// `log N(y; 0, σ²I + τ²XX')`, computed through the `d×d` Woodbury form.
pub fn conjugate_log_z(x: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, tau_p: f64) -> Result<EvidenceEstimate> {
    check_dim("conjugate_log_z: rows of X vs y", x.nrows(), y.len())?;
    if !(sigma > 0.0 && tau_p > 0.0) {
        return Err(Error::Domain(format!("conjugate oracle needs positive scales, got {sigma}, {tau_p}")));
    }
    let n = x.nrows() as f64;
    let d = x.ncols();
    let s2 = sigma * sigma;
    let t2 = tau_p * tau_p;
    let xtx = x.transpose() * x;
    let a = DMatrix::identity(d, d) + &xtx * (t2 / s2);
    let chol_a = Cholesky::new(a).ok_or_else(|| Error::Singular("conjugate marginal covariance".into()))?;
    let log_det = n * s2.ln() + 2.0 * chol_a.l().diagonal().map(f64::ln).sum();
    let b = DMatrix::identity(d, d) * (s2 / t2) + xtx;
    let chol_b = Cholesky::new(b).ok_or_else(|| Error::Singular("conjugate marginal covariance".into()))?;
    let xty = x.transpose() * y;
    let quad = (y.norm_squared() - xty.dot(&chol_b.solve(&xty))) / s2;
    Ok(EvidenceEstimate {
        log_z: -0.5 * (n * LN_2PI + log_det + quad),
        standard_error: 0.0,
        method: OracleMethod::Conjugate,
        n_evals_or_draws: 1,
        ess: None,
        nodes_per_dim: None,
    })
}

/// Exact posterior of the conjugate Gaussian model: mean and covariance.
pub fn conjugate_posterior(x: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, tau_p: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim("conjugate_posterior: rows of X vs y", x.nrows(), y.len())?;
    let d = x.ncols();
    let precision = x.transpose() * x / (sigma * sigma) + DMatrix::identity(d, d) / (tau_p * tau_p);
    let chol = Cholesky::new(precision).ok_or_else(|| Error::Singular("conjugate posterior precision".into()))?;
    let mean = chol.solve(&(x.transpose() * y / (sigma * sigma)));
    Ok((mean, chol.inverse()))
}

/// `log e^{ℓ(β)} π(β)` plus the base measure, evaluated from linear predictors.
struct LogJoint<'a> {
    family: &'a GlmFamily,
    y: &'a DVector<f64>,
    prior: &'a Prior,
    base: f64,
}

impl LogJoint<'_> {
    fn at_eta(&self, eta: impl Iterator<Item = f64>, beta: &DVector<f64>) -> f64 {
        let lp = self.prior.log_density(beta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let ll: f64 = eta.zip(self.y.iter()).map(|(t, &yi)| yi * t - self.family.a(t)).sum();
        ll + lp + self.base
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorMode {
    pub mode: DVector<f64>,
    /// Negative Hessian of the log posterior at the mode (likelihood part plus
    /// the smooth, concave part of the log prior). Positive definite.
    pub precision: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn neg_loglik_hessian(family: &GlmFamily, x: &DMatrix<f64>, eta: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (i, &t) in eta.iter().enumerate() {
        wx.row_mut(i).scale_mut(family.a2(t).sqrt());
    }
    wx.transpose() * wx
}

fn smoothed_log_prior(prior: &Prior, beta: &DVector<f64>) -> (f64, DVector<f64>) {
    match *prior {
        Prior::LaplaceProduct { kappa } => {
            let e2 = MODE_SMOOTHING * MODE_SMOOTHING;
            let value = beta.len() as f64 * (0.5 * kappa).ln() - kappa * beta.iter().map(|b| (b * b + e2).sqrt()).sum::<f64>();
            (value, beta.map(|b| -kappa * b / (b * b + e2).sqrt()))
        }
        _ => (prior.log_density(beta), prior.grad_log_density(beta)),
    }
}

/// Mode of the posterior by damped Newton on `ℓ + log π`, with the Laplace kink
/// smoothed. The mode only centers the oracles, so non-convergence is
/// reported rather than raised.
pub fn posterior_mode(family: &GlmFamily, x: &DMatrix<f64>, y: &DVector<f64>, prior: &Prior) -> Result<PosteriorMode> {
    check_dim("posterior_mode: rows of X vs y", x.nrows(), y.len())?;
    let d = x.ncols();
    let mut beta = match *prior {
        Prior::UniformBox { lo, hi } if !(lo < 0.0 && hi > 0.0) => DVector::from_element(d, 0.5 * (lo + hi)),
        _ => DVector::zeros(d),
    };
    let objective = |b: &DVector<f64>| -> (f64, DVector<f64>) {
        let eta = x * b;
        let ll: f64 = eta.iter().zip(y.iter()).map(|(&t, &yi)| yi * t - family.a(t)).sum();
        let resid = DVector::from_iterator(eta.len(), eta.iter().zip(y.iter()).map(|(&t, &yi)| yi - family.a1(t)));
        let (lp, gp) = smoothed_log_prior(prior, b);
        (ll + lp, x.transpose() * resid + gp)
    };
    let precision_at = |b: &DVector<f64>| -> DMatrix<f64> {
        let mut h = neg_loglik_hessian(family, x, &(x * b));
        for j in 0..d {
            h[(j, j)] += (-prior.hess_log_density_1d(b[j])).max(0.0);
        }
        h
    };
    let (mut f, mut g) = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..100 {
        iterations = it + 1;
        let h = precision_at(&beta);
        let chol = Cholesky::new(h).ok_or_else(|| Error::Singular("posterior curvature at the mode".into()))?;
        let step = chol.solve(&g);
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &beta + &step * t;
            let (fc, gc) = objective(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * t * slope {
                beta = cand;
                f = fc;
                g = gc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (step.norm() * t) <= 1e-10 * (1.0 + beta.norm()) {
            converged = moved || g.norm() <= 1e-8 * x.nrows() as f64;
            break;
        }
    }
    Ok(PosteriorMode {
        precision: precision_at(&beta),
        mode: beta,
        iterations,
        converged,
    })
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// Scale of the per-axis map `u = a·sinh(s)`, which clusters nodes near the
/// mode where the integrand lives and spreads them over the tails.
const SINH_SCALE: f64 = 3.0;
/// Fewest nodes any panel receives.
const MIN_PANEL_NODES: usize = 4;

/// Affine frame `β = mode + T·u` with per-axis composite rules on `[−h, h]`.
///
/// Smooth priors use `T = L⁻ᵀ` from the posterior precision `LLᵀ`. Priors
/// with kinks or jumps use `T = diag(σⱼ)` (marginal posterior sds) so that the
/// non-smooth sets are axis-aligned and each axis rule can be split at them.
struct Frame {
    eta0: DVector<f64>,
    /// `X·T`, columns are the predictor directions of unit steps in `u`.
    a: DMatrix<f64>,
    mode: DVector<f64>,
    t: DMatrix<f64>,
    log_det_t: f64,
    /// Per-axis panel edges in `s = asinh(u/a)`, increasing, spanning `u ∈ [−h, h]`.
    edges: Vec<Vec<f64>>,
}

impl Frame {
    fn new(x: &DMatrix<f64>, pm: &PosteriorMode, prior: &Prior, halfwidth: f64) -> Result<Self> {
        let d = pm.mode.len();
        let chol = Cholesky::new(pm.precision.clone()).ok_or_else(|| Error::Singular("posterior precision".into()))?;
        let breaks = prior.breakpoints();
        let (t, log_det_t) = if breaks.is_empty() {
            let l = chol.l();
            let t = l
                .transpose()
                .solve_upper_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| Error::Singular("posterior precision factor".into()))?;
            (t, -l.diagonal().map(f64::ln).sum())
        } else {
            let sd = chol.inverse().diagonal().map(f64::sqrt);
            let log_det = sd.map(f64::ln).sum();
            (DMatrix::from_diagonal(&sd), log_det)
        };
        let s_max = (halfwidth / SINH_SCALE).asinh();
        let edges = (0..d)
            .map(|j| {
                let mut e = vec![-s_max, s_max];
                for b in &breaks {
                    let u = (b - pm.mode[j]) / t[(j, j)];
                    if u > -halfwidth && u < halfwidth {
                        e.push((u / SINH_SCALE).asinh());
                    }
                }
                e.sort_by(f64::total_cmp);
                e.dedup();
                e
            })
            .collect();
        Ok(Self {
            eta0: x * &pm.mode,
            a: x * &t,
            mode: pm.mode.clone(),
            t,
            log_det_t,
            edges,
        })
    }

    fn log_integrand(&self, joint: &LogJoint, u: &[f64]) -> f64 {
        let beta = &self.mode + &self.t * DVector::from_column_slice(u);
        let a = &self.a;
        let eta = (0..self.eta0.len()).map(|i| self.eta0[i] + u.iter().enumerate().map(|(j, uj)| uj * a[(i, j)]).sum::<f64>());
        joint.at_eta(eta, &beta)
    }

    /// Nodes given to each panel of axis `j` when the axis has `m` in total.
    fn panel_nodes(&self, j: usize, m: usize) -> Vec<usize> {
        let e = &self.edges[j];
        let span = e[e.len() - 1] - e[0];
        e.windows(2)
            .map(|p| ((m as f64 * (p[1] - p[0]) / span).ceil() as usize).max(MIN_PANEL_NODES))
            .collect()
    }

    /// Composite Gauss–Legendre rule for axis `j` in `u`, about `m` nodes.
    fn axis_rule(&self, j: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut u = Vec::new();
        let mut log_w = Vec::new();
        for (panel, k) in self.edges[j].windows(2).zip(self.panel_nodes(j, m)) {
            let (nodes, weights) = gauss_legendre(k);
            let (mid, half) = (0.5 * (panel[0] + panel[1]), 0.5 * (panel[1] - panel[0]));
            for (x, w) in nodes.iter().zip(&weights) {
                let s = mid + half * x;
                u.push(SINH_SCALE * s.sinh());
                log_w.push((w * half * SINH_SCALE * s.cosh()).ln());
            }
        }
        (u, log_w)
    }

    fn n_points(&self, m: usize) -> usize {
        (0..self.edges.len()).map(|j| self.panel_nodes(j, m).iter().sum::<usize>()).product()
    }
}

fn for_each_grid_point(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    let d = sizes.len();
    let mut idx = vec![0usize; d];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn tensor_rule(frame: &Frame, joint: &LogJoint, m: usize) -> f64 {
    let d = frame.mode.len();
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..d).map(|j| frame.axis_rule(j, m)).collect();
    let total = frame.n_points(m);
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut u = [0.0; 3];
            let mut lw = 0.0;
            for (j, (nodes, log_w)) in rules.iter().enumerate() {
                let k = rem % nodes.len();
                rem /= nodes.len();
                u[j] = nodes[k];
                lw += log_w[k];
            }
            lw + frame.log_integrand(joint, &u[..d])
        })
        .collect();
    log_sum_exp(&values)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Largest log-integrand on the faces of the box, relative to the value at the mode.
fn boundary_log_ratio(frame: &Frame, joint: &LogJoint, m: usize, halfwidth: f64) -> f64 {
    let d = frame.mode.len();
    let peak = frame.log_integrand(joint, &vec![0.0; d]);
    let rules: Vec<Vec<f64>> = (0..d).map(|j| frame.axis_rule(j, m).0).collect();
    let mut worst = f64::NEG_INFINITY;
    for face in 0..d {
        let others: Vec<usize> = (0..d).filter(|&j| j != face).collect();
        let sizes: Vec<usize> = others.iter().map(|&j| rules[j].len()).collect();
        for side in [-1.0, 1.0] {
            for_each_grid_point(&sizes, |idx| {
                let mut u = vec![0.0; d];
                u[face] = side * halfwidth;
                for (k, &j) in others.iter().enumerate() {
                    u[j] = rules[j][idx[k]];
                }
                worst = worst.max(frame.log_integrand(joint, &u));
            });
        }
    }
    worst - peak
}

/// Tensor Gauss–Legendre quadrature around the posterior mode over `[−h, h]^d`,
/// `h = box_halfwidth` posterior standard deviations; axes are whitened for
/// smooth priors and split at the prior's kinks otherwise.
/// Nodes per dimension are doubled until consecutive rules agree to `1e-6`.
pub fn quadrature_log_z(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &Prior,
    box_halfwidth: f64,
    n_nodes_per_dim: usize,
) -> Result<EvidenceEstimate> {
    check_dim("quadrature_log_z: rows of X vs y", x.nrows(), y.len())?;
    let d = x.ncols();
    if d == 0 || d > 3 {
        return Err(Error::Capability(format!("quadrature supports 1 <= d <= 3, got d = {d}")));
    }
    if !(box_halfwidth >= MIN_BOX_HALFWIDTH) {
        return Err(Error::Config(format!(
            "quadrature box halfwidth must be at least {MIN_BOX_HALFWIDTH} posterior sds, got {box_halfwidth}"
        )));
    }
    if n_nodes_per_dim < 2 {
        return Err(Error::Config("quadrature needs at least 2 nodes per dimension".into()));
    }
    let pm = posterior_mode(family, x, y, prior)?;
    let frame = Frame::new(x, &pm, prior, box_halfwidth)?;
    let joint = LogJoint {
        family,
        y,
        prior,
        base: family.log_base_measure(y),
    };
    let ratio = boundary_log_ratio(&frame, &joint, n_nodes_per_dim, box_halfwidth);
    if ratio > BOX_LOG_RATIO {
        // a Gaussian tail would need ½h² ≥ ½h₀² − ratio + log(1e10)
        let needed = (box_halfwidth * box_halfwidth + 2.0 * (ratio - BOX_LOG_RATIO)).sqrt();
        return Err(Error::BoxTooSmall {
            boundary_log_ratio: ratio,
            suggested_halfwidth: (needed * 1.25).ceil(),
        });
    }
    let mut m = n_nodes_per_dim;
    let mut evals = frame.n_points(m);
    let mut prev = tensor_rule(&frame, &joint, m);
    let mut change = f64::NAN;
    loop {
        let next_m = 2 * m;
        let points = frame.n_points(next_m);
        if points > MAX_QUADRATURE_POINTS {
            return Err(Error::Quadrature { nodes: m, change });
        }
        let next = tensor_rule(&frame, &joint, next_m);
        evals += points;
        change = (next - prev).abs();
        m = next_m;
        if change <= QUADRATURE_TOL {
            return Ok(EvidenceEstimate {
                log_z: next + frame.log_det_t,
                standard_error: 0.0,
                method: OracleMethod::Quadrature,
                n_evals_or_draws: evals,
                ess: None,
                nodes_per_dim: Some(m),
            });
        }
        prev = next;
    }
}

/// Draws from the heavy-tailed proposal with their log importance weights.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub draws: Vec<DVector<f64>>,
    pub log_weights: Vec<f64>,
}

impl WeightedSample {
    fn max_log_weight(&self) -> f64 {
        self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let m = self.max_log_weight();
        let (s, s2) = self
            .log_weights
            .iter()
            .fold((0.0, 0.0), |(s, s2), lw| {
                let w = (lw - m).exp();
                (s + w, s2 + w * w)
            });
        s * s / s2
    }

    fn check_reliability(&self) -> Result<f64> {
        let ess = self.ess();
        let required = ESS_FLOOR * self.log_weights.len() as f64;
        if !(ess >= required) {
            return Err(Error::Reliability { ess, required });
        }
        Ok(ess)
    }

    /// `log` of the mean weight, with a delta-method standard error.
    pub fn log_mean_weight(&self) -> (f64, f64) {
        let n = self.log_weights.len() as f64;
        let m = self.max_log_weight();
        let ws: Vec<f64> = self.log_weights.iter().map(|lw| (lw - m).exp()).collect();
        let mean = ws.iter().sum::<f64>() / n;
        let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (m + mean.ln(), (var / n).sqrt() / mean)
    }

    /// Self-normalized posterior probability of the ellipsoid.
    pub fn mass(&self, ell: &Ellipsoid) -> ProbResult {
        let m = self.max_log_weight();
        let mut total = 0.0;
        let mut inside = 0.0;
        let flags: Vec<bool> = self.draws.iter().map(|b| ell.contains(b)).collect();
        let ws: Vec<f64> = self.log_weights.iter().map(|lw| (lw - m).exp()).collect();
        for (w, &f) in ws.iter().zip(flags.iter()) {
            total += w;
            if f {
                inside += w;
            }
        }
        let p = inside / total;
        let var_num: f64 = ws
            .iter()
            .zip(flags.iter())
            .map(|(w, &f)| (w * (if f { 1.0 } else { 0.0 } - p)).powi(2))
            .sum();
        ProbResult {
            p,
            log_p: p.ln(),
            standard_error: var_num.sqrt() / total,
            method: ProbMethodKind::MonteCarlo,
        }
    }
}

/// Multivariate t proposal centered at the posterior mode with scale
/// `1.5 × (precision)⁻¹`.
pub fn importance_sample(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &Prior,
    n_draws: usize,
    seed: u64,
) -> Result<WeightedSample> {
    check_dim("importance_sample: rows of X vs y", x.nrows(), y.len())?;
    if n_draws < MIN_IS_DRAWS {
        return Err(Error::Config(format!(
            "importance sampling needs at least {MIN_IS_DRAWS} draws, got {n_draws}"
        )));
    }
    let d = x.ncols();
    let pm = posterior_mode(family, x, y, prior)?;
    let cov = Cholesky::new(pm.precision.clone())
        .ok_or_else(|| Error::Singular("posterior precision".into()))?
        .inverse()
        * PROPOSAL_INFLATION;
    let l = Cholesky::new(cov)
        .ok_or_else(|| Error::Singular("proposal covariance".into()))?
        .l();
    let nu = PROPOSAL_DF;
    let df = d as f64;
    let log_q_const = libm::lgamma(0.5 * (nu + df))
        - libm::lgamma(0.5 * nu)
        - 0.5 * df * (nu * std::f64::consts::PI).ln()
        - l.diagonal().map(f64::ln).sum();
    let joint = LogJoint {
        family,
        y,
        prior,
        base: family.log_base_measure(y),
    };
    let chi2 = ChiSquared::new(nu).expect("positive degrees of freedom");
    let n_chunks = n_draws.div_ceil(DRAW_CHUNK);
    let chunks: Vec<(Vec<DVector<f64>>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Purpose::ImportanceSampling, k as u64);
            let count = DRAW_CHUNK.min(n_draws - k * DRAW_CHUNK);
            let mut b = DMatrix::zeros(d, count);
            let mut log_q = Vec::with_capacity(count);
            for c in 0..count {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let s = (nu / chi2.sample(&mut rng)).sqrt();
                let q2 = s * s * z.norm_squared();
                log_q.push(log_q_const - 0.5 * (nu + df) * (q2 / nu).ln_1p());
                b.set_column(c, &(&pm.mode + &l * z * s));
            }
            let eta = x * &b;
            let mut draws = Vec::with_capacity(count);
            let mut lw = Vec::with_capacity(count);
            for (c, lq) in log_q.iter().enumerate() {
                let beta = b.column(c).into_owned();
                let lj = joint.at_eta(eta.column(c).iter().copied(), &beta);
                lw.push(lj - lq);
                draws.push(beta);
            }
            (draws, lw)
        })
        .collect();
    let mut sample = WeightedSample {
        draws: Vec::with_capacity(n_draws),
        log_weights: Vec::with_capacity(n_draws),
    };
    for (d, w) in chunks {
        sample.draws.extend(d);
        sample.log_weights.extend(w);
    }
    Ok(sample)
}

pub fn importance_log_z(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &Prior,
    n_draws: usize,
    seed: u64,
) -> Result<EvidenceEstimate> {
    let sample = importance_sample(family, x, y, prior, n_draws, seed)?;
    let ess = sample.check_reliability()?;
    let (log_z, se) = sample.log_mean_weight();
    Ok(EvidenceEstimate {
        log_z,
        standard_error: se,
        method: OracleMethod::ImportanceSampling,
        n_evals_or_draws: n_draws,
        ess: Some(ess),
        nodes_per_dim: None,
    })
}

/// Posterior probability of the ellipsoid, with the effective sample size.
pub fn posterior_mass(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior: &Prior,
    ell: &Ellipsoid,
    n_draws: usize,
    seed: u64,
) -> Result<(ProbResult, f64)> {
    check_dim("posterior_mass: columns of X vs ellipsoid", ell.dim(), x.ncols())?;
    let sample = importance_sample(family, x, y, prior, n_draws, seed)?;
    let ess = sample.check_reliability()?;
    Ok((sample.mass(ell), ess))
}
