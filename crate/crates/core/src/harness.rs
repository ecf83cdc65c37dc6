//! Experiment drivers: coverage of the evidence bounds, BIC scans, posterior
//! concentration and model comparison.
//!
//! Every experiment derives its random streams from `master_seed`, so reruns
//! reproduce every row regardless of the number of worker threads.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{compute_bounds, BoundOptions, BoundsReport};
use crate::config::{CSource, EllipsoidKind, ExperimentConfig, OracleChoice, Resolved};
use crate::curvature::{certificate, check_assumption1, CurvatureCertificate, Ellipsoid};
use crate::data::{make_design, simulate_truth, Dataset, Mechanism};
use crate::error::{Error, Result};
use crate::evidence::{conjugate_log_z, importance_log_z, importance_sample, quadrature_log_z, EvidenceEstimate};
use crate::prior::{extremes_over_ball, PriorExtremes};
use crate::process::{calibrate_c, exact_sup_ellipsoid, theoretical_c, ProcessConstants, TailModel};
use crate::pseudo_true::{solve_pseudo_true, PseudoTrueFit};
use crate::quadform::ProbMethod;
use crate::report::{ViolationKind, ViolationReport};
use crate::rng::{child_seed, Purpose};

pub const COVERAGE_CSV_VERSION: &str = "# evbounds coverage v1";
pub const BIC_CSV_VERSION: &str = "# evbounds bic-scan v1";
pub const CONCENTRATION_CSV_VERSION: &str = "# evbounds concentration v1";
pub const COMPARE_CSV_VERSION: &str = "# evbounds compare v1";

/// Design, truth and pseudo-true fit.
#[derive(Debug, Clone)]
pub struct Truth {
    pub x: DMatrix<f64>,
    pub mechanism: Mechanism,
    pub true_mean: DVector<f64>,
    pub fit: PseudoTrueFit,
}

/// Everything that depends on the design and the truth but not on the response draw.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    /// Design the responses are generated from (may have more columns than the model).
    pub truth_x: DMatrix<f64>,
    pub truth: Truth,
    pub ell: Ellipsoid,
    pub cert: CurvatureCertificate,
    pub process: ProcessConstants,
    pub prior_extremes: PriorExtremes,
    pub assumption1: Option<ViolationReport>,
}

/// Index `k` selects the design stream, so each point of a sample-size grid has its own design.
pub fn prepare_truth(cfg: &ExperimentConfig, n: usize, d: usize, k: u64) -> Result<Truth> {
    let resolved = cfg.resolve()?;
    let x = make_design(n, d, resolved.design, child_seed(cfg.master_seed, Purpose::Design, k))?;
    let mechanism = cfg.mechanism_for(d)?;
    let true_mean = mechanism.true_mean(&x)?;
    let fit = solve_pseudo_true(&resolved.family, &x, &true_mean)?;
    Ok(Truth {
        x,
        mechanism,
        true_mean,
        fit,
    })
}

pub fn build_ellipsoid(cfg: &ExperimentConfig, resolved: &Resolved, truth: &Truth) -> Result<Ellipsoid> {
    let center = truth.fit.beta();
    match resolved.ellipsoid {
        EllipsoidKind::Spherical => Ellipsoid::spherical(center, truth.x.nrows(), cfg.radius_c1),
        EllipsoidKind::Fisher => Ellipsoid::fisher(&resolved.family, &truth.x, center, cfg.radius_c1 * cfg.radius_c1),
    }
}

pub fn process_constants(
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    truth_x: &DMatrix<f64>,
    truth: &Truth,
    ell: &Ellipsoid,
    k: u64,
) -> Result<ProcessConstants> {
    match resolved.c_source {
        CSource::Empirical => calibrate_c(
            &truth.mechanism,
            truth_x,
            &truth.true_mean,
            &truth.x,
            ell,
            cfg.calib_replicates,
            cfg.delta_tilde,
            child_seed(cfg.master_seed, Purpose::Calibration, k),
        ),
        CSource::Subgaussian => {
            let tau = truth.mechanism.tau(truth.x.nrows()).ok_or_else(|| {
                Error::Config(format!("mechanism {} has no sub-Gaussian parameter", truth.mechanism.name()))
            })?;
            theoretical_c(TailModel::SubGaussian { tau }, &truth.x, ell, cfg.k0)
        }
        CSource::Subexponential => {
            let se = truth.mechanism.sub_exponential(&truth.true_mean).ok_or_else(|| {
                Error::Config(format!("mechanism {} has no sub-exponential parameters", truth.mechanism.name()))
            })?;
            theoretical_c(
                TailModel::SubExponential {
                    nu: se.nu,
                    gbar: se.gbar,
                },
                &truth.x,
                ell,
                cfg.k0,
            )
        }
    }
}

fn finish_setup(cfg: &ExperimentConfig, truth_x: DMatrix<f64>, truth: Truth, k: u64) -> Result<Setup> {
    let resolved = cfg.resolve()?;
    let ell = build_ellipsoid(cfg, &resolved, &truth)?;
    let cert = certificate(&resolved.family, &truth.x, &ell)?;
    let process = process_constants(cfg, &resolved, &truth_x, &truth, &ell, k)?;
    let prior_extremes = extremes_over_ball(&resolved.prior, &ell, resolved.prior_method)?;
    let assumption1 = (cfg.assumption1_samples > 0).then(|| {
        check_assumption1(
            &resolved.family,
            &truth.x,
            &cert,
            &ell,
            cfg.assumption1_samples,
            child_seed(cfg.master_seed, Purpose::Assumption1, k),
        )
    });
    Ok(Setup {
        config: cfg.clone(),
        resolved,
        truth_x,
        truth,
        ell,
        cert,
        process,
        prior_extremes,
        assumption1,
    })
}

pub fn prepare(cfg: &ExperimentConfig, n: usize, d: usize, k: u64) -> Result<Setup> {
    let truth = prepare_truth(cfg, n, d, k)?;
    finish_setup(cfg, truth.x.clone(), truth, k)
}

/// Responses for replicate `rep` of the grid point `k`.
pub fn draw_dataset(setup: &Setup, k: u64, rep: u64) -> Result<Dataset> {
    let seed = child_seed(child_seed(setup.config.master_seed, Purpose::Response, k), Purpose::Response, rep);
    let mut ds = simulate_truth(&setup.truth.mechanism, &setup.truth_x, seed)?;
    ds.x = setup.truth.x.clone();
    Ok(ds)
}

impl Setup {
    pub fn n(&self) -> usize {
        self.truth.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.truth.x.ncols()
    }

    /// Whether the sampled quadratic check (if run) found no violations of either inequality.
    pub fn assumption1_held(&self) -> Option<bool> {
        self.assumption1.as_ref().map(|r| {
            r.count(ViolationKind::QuadraticUpper) == 0 && r.count(ViolationKind::QuadraticLower) == 0
        })
    }

    /// `ℓ(β*)` for the response `y`, including the base measure.
    pub fn ell_star(&self, y: &DVector<f64>) -> Result<f64> {
        let f = &self.resolved.family;
        Ok(f.log_likelihood(&self.truth.x, y, &self.truth.fit.beta())? + f.log_base_measure(y))
    }

    pub fn bounds(&self, y: &DVector<f64>, k: u64, rep: u64) -> Result<BoundsReport> {
        let options = BoundOptions {
            lower_term: self.resolved.lower_term,
            prob_method: ProbMethod::Auto {
                seed: child_seed(child_seed(self.config.master_seed, Purpose::MonteCarlo, k), Purpose::MonteCarlo, rep),
            },
            prior_everywhere_positive: self.resolved.prior.is_everywhere_positive(),
        };
        let mut report = compute_bounds(
            self.ell_star(y)?,
            &self.cert,
            &self.process,
            &self.prior_extremes,
            &self.ell,
            self.config.eta,
            self.config.delta,
            &options,
        )?;
        if let Some(held) = self.assumption1_held() {
            report.set_assumption1(held);
        }
        Ok(report)
    }

    pub fn oracle(&self, y: &DVector<f64>, k: u64, rep: u64) -> Result<Option<EvidenceEstimate>> {
        let cfg = &self.config;
        let r = &self.resolved;
        let x = &self.truth.x;
        Ok(match r.oracle {
            OracleChoice::Conjugate => Some(conjugate_log_z(x, y, 1.0, cfg.prior_scale)?),
            OracleChoice::Quadrature => Some(quadrature_log_z(&r.family, x, y, &r.prior, cfg.quad_halfwidth, cfg.quad_nodes)?),
            OracleChoice::Importance => {
                let seed = child_seed(child_seed(cfg.master_seed, Purpose::ImportanceSampling, k), Purpose::ImportanceSampling, rep);
                Some(importance_log_z(&r.family, x, y, &r.prior, cfg.is_draws, seed)?)
            }
            OracleChoice::None => None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub status: String,
    pub ell_star: f64,
    pub log_det_h: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub oracle_log_z: Option<f64>,
    pub oracle_se: Option<f64>,
    pub hit: Option<bool>,
    /// `lower` or `upper` for a miss, empty otherwise.
    pub miss_side: String,
    /// Realized supremum of the centered process over the ellipsoid.
    pub sup: f64,
    pub c_times_d: f64,
    pub sup_exceeds: bool,
    pub theorem_certified: bool,
    pub error: String,
}

impl ReplicateRow {
    fn failed(replicate: usize, err: &Error) -> Self {
        Self {
            replicate,
            status: "failed".into(),
            ell_star: f64::NAN,
            log_det_h: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
            width: f64::NAN,
            oracle_log_z: None,
            oracle_se: None,
            hit: None,
            miss_side: String::new(),
            sup: f64::NAN,
            c_times_d: f64::NAN,
            sup_exceeds: false,
            theorem_certified: false,
            error: err.to_string(),
        }
    }

    const HEADER: [&'static str; 16] = [
        "replicate",
        "status",
        "ell_star",
        "log_det_H",
        "lower",
        "upper",
        "width",
        "oracle_log_z",
        "oracle_se",
        "hit",
        "miss_side",
        "sup",
        "C_times_d",
        "sup_exceeds",
        "theorem_certified",
        "error",
    ];

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.replicate.to_string(),
            self.status.clone(),
            self.ell_star.to_string(),
            self.log_det_h.to_string(),
            self.lower.to_string(),
            self.upper.to_string(),
            self.width.to_string(),
            opt(self.oracle_log_z),
            opt(self.oracle_se),
            self.hit.map(|h| h.to_string()).unwrap_or_default(),
            self.miss_side.clone(),
            self.sup.to_string(),
            self.c_times_d.to_string(),
            self.sup_exceeds.to_string(),
            self.theorem_certified.to_string(),
            self.error.clone(),
        ]
    }
}

fn evaluate(setup: &Setup, k: u64, rep: usize) -> Result<ReplicateRow> {
    let ds = draw_dataset(setup, k, rep as u64)?;
    let bounds = setup.bounds(&ds.y, k, rep as u64)?;
    let oracle = setup.oracle(&ds.y, k, rep as u64)?;
    let sup = exact_sup_ellipsoid(&setup.truth.x, &ds.residual(), &setup.ell)?;
    let c_times_d = setup.process.c * setup.d() as f64;
    let hit = oracle.as_ref().map(|o| bounds.contains(o.log_z));
    let miss_side = match (&oracle, hit) {
        (Some(o), Some(false)) if o.log_z < bounds.lower => "lower",
        (Some(_), Some(false)) => "upper",
        _ => "",
    };
    Ok(ReplicateRow {
        replicate: rep,
        status: "ok".into(),
        ell_star: bounds.ell_star,
        log_det_h: bounds.log_det_h,
        lower: bounds.lower,
        upper: bounds.upper,
        width: bounds.width(),
        oracle_log_z: oracle.as_ref().map(|o| o.log_z),
        oracle_se: oracle.as_ref().map(|o| o.standard_error),
        hit,
        miss_side: miss_side.into(),
        sup,
        c_times_d,
        sup_exceeds: sup > c_times_d,
        theorem_certified: bounds.theorem_certified,
        error: String::new(),
    })
}

/// Run `f` for every replicate, keeping failures that only affect one replicate.
fn replicate_rows(n: usize, f: impl Fn(usize) -> Result<ReplicateRow> + Sync) -> Result<Vec<ReplicateRow>> {
    (0..n)
        .into_par_iter()
        .map(|rep| match f(rep) {
            Ok(row) => Ok(row),
            Err(e) if e.is_replicate_failure() => Ok(ReplicateRow::failed(rep, &e)),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub label: String,
    pub n: usize,
    pub d: usize,
    pub n_replicates: usize,
    pub n_sandwich_hits: usize,
    pub n_misses: usize,
    pub n_failures: usize,
    /// Hits over all replicates, failures included in the denominator.
    pub hit_rate: f64,
    /// Hits over replicates that completed.
    pub hit_rate_completed: f64,
    /// `1 − δ − δ̃`.
    pub guaranteed_rate: f64,
    pub mean_width: f64,
    pub mean_width_per_d: f64,
    pub n_sup_exceedances: usize,
    pub sup_exceedance_rate: f64,
    #[serde(rename = "C")]
    pub c_process: f64,
    #[serde(rename = "c")]
    pub c_curvature: f64,
    pub delta_tilde: f64,
    pub constant_source: String,
    pub fit_grad_norm: f64,
    pub fit_tol_grad: f64,
    pub assumption1_held: Option<bool>,
    pub theorem_certified: bool,
    /// Misses where some hypothesis flag was false.
    pub misses_with_hypotheses_unmet: usize,
    pub rows: Vec<ReplicateRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    let d = cfg.dimension(cfg.n);
    let setup = prepare(cfg, cfg.n, d, 0)?;
    coverage_for_setup(&setup, 0)
}

pub fn coverage_for_setup(setup: &Setup, k: u64) -> Result<CoverageReport> {
    let cfg = &setup.config;
    let rows = replicate_rows(cfg.n_replicates, |rep| evaluate(setup, k, rep))?;
    let ok: Vec<&ReplicateRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let hits = ok.iter().filter(|r| r.hit == Some(true)).count();
    let misses = ok.iter().filter(|r| r.hit == Some(false)).count();
    let failures = rows.len() - ok.len();
    let exceed = ok.iter().filter(|r| r.sup_exceeds).count();
    let width = mean(ok.iter().map(|r| r.width));
    let d = setup.d();
    Ok(CoverageReport {
        label: cfg.label(),
        n: setup.n(),
        d,
        n_replicates: rows.len(),
        n_sandwich_hits: hits,
        n_misses: misses,
        n_failures: failures,
        hit_rate: hits as f64 / rows.len() as f64,
        hit_rate_completed: if hits + misses > 0 {
            hits as f64 / (hits + misses) as f64
        } else {
            f64::NAN
        },
        guaranteed_rate: 1.0 - cfg.delta - setup.process.delta_tilde,
        mean_width: width,
        mean_width_per_d: width / d as f64,
        n_sup_exceedances: exceed,
        sup_exceedance_rate: if ok.is_empty() {
            f64::NAN
        } else {
            exceed as f64 / ok.len() as f64
        },
        c_process: setup.process.c,
        c_curvature: setup.cert.c,
        delta_tilde: setup.process.delta_tilde,
        constant_source: setup.process.source.as_str().into(),
        fit_grad_norm: setup.truth.fit.grad_norm,
        fit_tol_grad: setup.truth.fit.tol_grad,
        assumption1_held: setup.assumption1_held(),
        theorem_certified: ok.iter().all(|r| r.theorem_certified),
        misses_with_hypotheses_unmet: ok
            .iter()
            .filter(|r| r.hit == Some(false) && (!r.theorem_certified || r.sup_exceeds))
            .count(),
        rows,
    })
}

fn csv_writer<W: Write>(mut out: W, version: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "{version}")?;
    Ok(csv::Writer::from_writer(out))
}

pub fn write_coverage_csv<W: Write>(report: &CoverageReport, out: W) -> Result<()> {
    let mut w = csv_writer(out, COVERAGE_CSV_VERSION)?;
    w.write_record(ReplicateRow::HEADER)?;
    for row in &report.rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BicRow {
    pub n: usize,
    pub d: usize,
    pub log_det_h: f64,
    pub d_log_n: f64,
    pub oracle_log_z: Option<f64>,
    pub ell_star: f64,
    pub laplace: f64,
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    /// `midpoint − (ℓ* − ½log|H|)`.
    pub offset: f64,
    /// `(2C − c/2)·d/2 + |log sup π| + |log inf π|`.
    pub band: f64,
    /// Largest deviation of either bound from the sum of its recorded terms.
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BicScan {
    pub d: usize,
    /// Least-squares slope of `log|H|` on `log n`.
    pub slope: f64,
    pub fit_grad_norms: Vec<f64>,
    pub rows: Vec<BicRow>,
}

pub fn run_bic_scan(cfg: &ExperimentConfig, n_grid: &[usize]) -> Result<BicScan> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bic-scan needs an increasing grid of at least two sample sizes".into()));
    }
    let d = cfg.d;
    let mut rows = Vec::with_capacity(n_grid.len());
    let mut grads = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let setup = prepare(cfg, n, d, k as u64)?;
        grads.push(setup.truth.fit.grad_norm);
        let ds = draw_dataset(&setup, k as u64, 0)?;
        let b = setup.bounds(&ds.y, k as u64, 0)?;
        let oracle = match setup.oracle(&ds.y, k as u64, 0) {
            Ok(o) => o.map(|o| o.log_z),
            Err(e) if e.is_replicate_failure() => None,
            Err(e) => return Err(e),
        };
        let c = b.constants.c_curvature;
        rows.push(BicRow {
            n,
            d,
            log_det_h: b.log_det_h,
            d_log_n: d as f64 * (n as f64).ln(),
            oracle_log_z: oracle,
            ell_star: b.ell_star,
            laplace: b.laplace,
            lower: b.lower,
            upper: b.upper,
            midpoint: b.midpoint(),
            offset: b.midpoint() - b.laplace,
            band: (2.0 * b.constants.c_process - 0.5 * c) * d as f64 / 2.0
                + b.terms_upper.log_sup_prior.abs()
                + b.terms_lower.log_inf_prior.abs(),
            reconstruction_error: (b.upper - b.upper_from_terms()).abs().max((b.lower - b.lower_from_terms()).abs()),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log_det_h).collect();
    Ok(BicScan {
        d,
        slope: ls_slope(&xs, &ys),
        fit_grad_norms: grads,
        rows,
    })
}

pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs.iter().copied());
    let my = mean(ys.iter().copied());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_bic_csv<W: Write>(scan: &BicScan, out: W) -> Result<()> {
    let mut w = csv_writer(out, BIC_CSV_VERSION)?;
    w.write_record([
        "n", "d", "log_det_H", "d_log_n", "oracle_log_z", "ell_star", "laplace", "lower", "upper", "midpoint", "offset", "band",
    ])?;
    for r in &scan.rows {
        w.write_record([
            r.n.to_string(),
            r.d.to_string(),
            r.log_det_h.to_string(),
            r.d_log_n.to_string(),
            r.oracle_log_z.map(|v| v.to_string()).unwrap_or_default(),
            r.ell_star.to_string(),
            r.laplace.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.midpoint.to_string(),
            r.offset.to_string(),
            r.band.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub d: usize,
    pub replicate: usize,
    pub status: String,
    /// Posterior mass of the ellipsoid.
    pub gamma: f64,
    pub gamma_se: f64,
    /// Posterior mass of the same ellipsoid with `R` scaled by 4, same draws.
    pub gamma_scaled: f64,
    pub ess: f64,
    pub concentrated: bool,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationSummary {
    pub n: usize,
    pub d: usize,
    pub n_replicates: usize,
    /// Replicates whose importance sample met the effective-sample-size floor.
    pub n_reliable: usize,
    /// Among reliable replicates, the fraction with `γ ≥ 1 − η`.
    pub fraction_concentrated: f64,
    pub failure_fraction: f64,
    /// `d·η·(failure fraction)`, the constant `C₂` implied by `δ = C₂/(dη)`.
    pub implied_c2: f64,
    pub fit_grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub eta: f64,
    pub radius_c1: f64,
    pub summaries: Vec<ConcentrationSummary>,
    pub rows: Vec<ConcentrationRow>,
}

pub fn run_concentration(cfg: &ExperimentConfig) -> Result<ConcentrationReport> {
    let resolved = cfg.resolve()?;
    if !resolved.prior.in_concentration_class() {
        return Err(Error::Config(format!(
            "posterior concentration experiments need a heavy-tailed product prior whose log density is \
             −κ·h with |h(x) − h(y)| <= D + D|x − y| (laplace-product or student-product); {} is outside that class",
            resolved.prior.name()
        )));
    }
    if cfg.n_grid.is_empty() {
        return Err(Error::Config("concentration needs a nonempty n_grid".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (k, &n) in cfg.n_grid.iter().enumerate() {
        let d = cfg.dimension(n);
        let truth = prepare_truth(cfg, n, d, k as u64)?;
        let ell = Ellipsoid::spherical(truth.fit.beta(), n, cfg.radius_c1)?;
        let wide = ell.with_r(4.0 * ell.r())?;
        let setup_rows: Vec<ConcentrationRow> = (0..cfg.n_replicates)
            .into_par_iter()
            .map(|rep| -> Result<ConcentrationRow> {
                let seed = child_seed(child_seed(cfg.master_seed, Purpose::Response, k as u64), Purpose::Response, rep as u64);
                let ds = simulate_truth(&truth.mechanism, &truth.x, seed)?;
                let is_seed = child_seed(
                    child_seed(cfg.master_seed, Purpose::ImportanceSampling, k as u64),
                    Purpose::ImportanceSampling,
                    rep as u64,
                );
                let sample = importance_sample(&resolved.family, &truth.x, &ds.y, &resolved.prior, cfg.is_draws, is_seed)?;
                let ess = sample.ess();
                let reliable = ess >= crate::evidence::ESS_FLOOR * cfg.is_draws as f64;
                let mass = sample.mass(&ell);
                let scaled = sample.mass(&wide);
                Ok(ConcentrationRow {
                    n,
                    d,
                    replicate: rep,
                    status: if reliable { "ok" } else { "unreliable" }.into(),
                    gamma: mass.p,
                    gamma_se: mass.standard_error,
                    gamma_scaled: scaled.p,
                    ess,
                    concentrated: mass.p >= 1.0 - cfg.eta,
                    error: String::new(),
                })
            })
            .map(|r| {
                r.or_else(|e| {
                    if e.is_replicate_failure() {
                        Ok(ConcentrationRow {
                            n,
                            d,
                            replicate: 0,
                            status: "failed".into(),
                            gamma: f64::NAN,
                            gamma_se: f64::NAN,
                            gamma_scaled: f64::NAN,
                            ess: f64::NAN,
                            concentrated: false,
                            error: e.to_string(),
                        })
                    } else {
                        Err(e)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .enumerate()
            .map(|(rep, mut row)| {
                row.replicate = rep;
                row
            })
            .collect();
        let reliable: Vec<&ConcentrationRow> = setup_rows.iter().filter(|r| r.status == "ok").collect();
        let frac = reliable.iter().filter(|r| r.concentrated).count() as f64 / reliable.len().max(1) as f64;
        summaries.push(ConcentrationSummary {
            n,
            d,
            n_replicates: setup_rows.len(),
            n_reliable: reliable.len(),
            fraction_concentrated: frac,
            failure_fraction: 1.0 - frac,
            implied_c2: d as f64 * cfg.eta * (1.0 - frac),
            fit_grad_norm: truth.fit.grad_norm,
        });
        rows.extend(setup_rows);
    }
    Ok(ConcentrationReport {
        eta: cfg.eta,
        radius_c1: cfg.radius_c1,
        summaries,
        rows,
    })
}

pub fn write_concentration_csv<W: Write>(report: &ConcentrationReport, out: W) -> Result<()> {
    let mut w = csv_writer(out, CONCENTRATION_CSV_VERSION)?;
    w.write_record(["n", "d", "replicate", "status", "gamma", "gamma_se", "gamma_scaled", "ess", "concentrated", "error"])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            r.d.to_string(),
            r.replicate.to_string(),
            r.status.clone(),
            r.gamma.to_string(),
            r.gamma_se.to_string(),
            r.gamma_scaled.to_string(),
            r.ess.to_string(),
            r.concentrated.to_string(),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateRow {
    pub label: String,
    pub family: String,
    pub prior: String,
    pub d: usize,
    pub lower: f64,
    pub upper: f64,
    pub laplace: f64,
    pub oracle_log_z: Option<f64>,
    pub theorem_certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Above,
    Below,
    NotCertified,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub candidates: Vec<CandidateRow>,
    /// `relations[i][j]` places candidate `i` relative to `j`; `Above` means `lower_i > upper_j`.
    pub relations: Vec<Vec<Relation>>,
    /// Certified pairs `(better, worse)` by label.
    pub certified_order: Vec<(String, String)>,
}

/// Evaluate every candidate on one shared dataset. The data come from the first
/// configuration, on a design with as many columns as the largest candidate;
/// candidate `k` uses the first `d_k` columns.
pub fn run_model_compare(configs: &[ExperimentConfig]) -> Result<CompareReport> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("model comparison needs at least one candidate".into()))?;
    let resolved0 = first.resolve()?;
    let d_max = configs.iter().map(|c| c.d).max().expect("nonempty");
    let n = first.n;
    let full_x = make_design(n, d_max, resolved0.design, child_seed(first.master_seed, Purpose::Design, 0))?;
    let mechanism = first.mechanism_for(d_max)?;
    let true_mean = mechanism.true_mean(&full_x)?;
    let data = simulate_truth(&mechanism, &full_x, child_seed(first.master_seed, Purpose::Response, 0))?;

    let mut candidates = Vec::with_capacity(configs.len());
    for (k, cfg) in configs.iter().enumerate() {
        if cfg.n != n {
            return Err(Error::Config("all candidates must share the same n".into()));
        }
        let resolved = cfg.resolve()?;
        let x = full_x.columns(0, cfg.d).into_owned();
        let fit = solve_pseudo_true(&resolved.family, &x, &true_mean)?;
        let truth = Truth {
            x,
            mechanism: mechanism.clone(),
            true_mean: true_mean.clone(),
            fit,
        };
        let mut cfg_shared = cfg.clone();
        cfg_shared.master_seed = first.master_seed;
        // every candidate sees the same calibration and Monte Carlo streams
        let setup = finish_setup(&cfg_shared, full_x.clone(), truth, 0)?;
        let b = setup.bounds(&data.y, 0, 0)?;
        let oracle = match setup.oracle(&data.y, 0, 0) {
            Ok(o) => o.map(|o| o.log_z),
            Err(e) if e.is_replicate_failure() => None,
            Err(e) => return Err(e),
        };
        candidates.push(CandidateRow {
            label: cfg.label.clone().unwrap_or_else(|| format!("candidate-{k}")),
            family: resolved.family.name().into(),
            prior: resolved.prior.to_string(),
            d: cfg.d,
            lower: b.lower,
            upper: b.upper,
            laplace: b.laplace,
            oracle_log_z: oracle,
            theorem_certified: b.theorem_certified,
        });
    }
    let m = candidates.len();
    let mut relations = vec![vec![Relation::NotCertified; m]; m];
    let mut certified_order = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if candidates[i].lower > candidates[j].upper {
                relations[i][j] = Relation::Above;
                relations[j][i] = Relation::Below;
                certified_order.push((candidates[i].label.clone(), candidates[j].label.clone()));
            }
        }
    }
    Ok(CompareReport {
        candidates,
        relations,
        certified_order,
    })
}

pub fn write_compare_csv<W: Write>(report: &CompareReport, out: W) -> Result<()> {
    let mut w = csv_writer(out, COMPARE_CSV_VERSION)?;
    w.write_record(["label", "family", "prior", "d", "lower", "upper", "laplace", "oracle_log_z", "theorem_certified"])?;
    for c in &report.candidates {
        w.write_record([
            c.label.clone(),
            c.family.clone(),
            c.prior.clone(),
            c.d.to_string(),
            c.lower.to_string(),
            c.upper.to_string(),
            c.laplace.to_string(),
            c.oracle_log_z.map(|v| v.to_string()).unwrap_or_default(),
            c.theorem_certified.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
