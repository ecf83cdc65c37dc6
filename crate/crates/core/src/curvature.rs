//! Localization ellipsoid and the two-sided curvature certificate `(H, c)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::family::{CurvatureShape, GlmFamily};
use crate::pseudo_true::kl_gap;
use crate::report::{Violation, ViolationKind, ViolationReport};
use crate::rng::{stream, Purpose};

/// Smallest admissible curvature infimum; anything below is treated as zero.
pub const MIN_CURVATURE: f64 = 1e-300;
const SAMPLE_CHUNK: usize = 1024;

/// `{β : (β−center)'W(β−center) ≤ R·d}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    w: DMatrix<f64>,
    r: f64,
    /// Lower Cholesky factor `L` with `W = LL'`.
    chol: DMatrix<f64>,
    /// `Some(w0)` when `W = w0·I`.
    scalar: Option<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, w: DMatrix<f64>, r: f64) -> Result<Self> {
        let d = center.len();
        check_dim("ellipsoid: W rows vs center", d, w.nrows())?;
        check_dim("ellipsoid: W columns vs center", d, w.ncols())?;
        if d == 0 {
            return Err(Error::Config("ellipsoid must have dimension at least 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("ellipsoid R must be positive and finite, got {r}")));
        }
        let asym = (&w - w.transpose()).amax();
        if asym > 1e-12 * w.amax().max(1.0) {
            return Err(Error::Domain(format!("ellipsoid W is not symmetric (asymmetry {asym:e})")));
        }
        let chol = Cholesky::new(w.clone())
            .ok_or_else(|| Error::Domain("ellipsoid W is not positive definite".into()))?
            .l();
        let w0 = w[(0, 0)];
        let is_scalar = (0..d).all(|i| (0..d).all(|j| w[(i, j)] == if i == j { w0 } else { 0.0 }));
        Ok(Self {
            center,
            w,
            r,
            chol,
            scalar: is_scalar.then_some(w0),
        })
    }

    /// `W = n·I`, `R = c1²`: the ball of radius `c1·√(d/n)` around `center`.
    pub fn spherical(center: DVector<f64>, n: usize, c1: f64) -> Result<Self> {
        let d = center.len();
        Self::new(center, DMatrix::identity(d, d) * n as f64, c1 * c1)
    }

    /// `W = X' diag(a''(xᵢ'center)) X`.
    pub fn fisher(family: &GlmFamily, x: &DMatrix<f64>, center: DVector<f64>, r: f64) -> Result<Self> {
        check_dim("fisher ellipsoid: columns of X vs center", x.ncols(), center.len())?;
        let eta = x * &center;
        let mut wx = x.clone();
        for (i, &t) in eta.iter().enumerate() {
            let s = family.a2(t).sqrt();
            wx.row_mut(i).scale_mut(s);
        }
        Self::new(center, wx.transpose() * wx, r)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `R·d`, the right-hand side of the membership test.
    pub fn rd(&self) -> f64 {
        self.r * self.dim() as f64
    }

    /// Same center and shape, different `R`.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.center.clone(), self.w.clone(), r)
    }

    /// Euclidean radius when `W` is a multiple of the identity.
    pub fn ball_radius(&self) -> Option<f64> {
        self.scalar.map(|w0| (self.rd() / w0).sqrt())
    }

    /// Radius of the smallest Euclidean ball around the center containing the ellipsoid.
    pub fn outer_radius(&self) -> f64 {
        match self.ball_radius() {
            Some(rho) => rho,
            None => {
                let lmin = self.w.clone().symmetric_eigen().eigenvalues.min();
                (self.rd() / lmin).sqrt()
            }
        }
    }

    /// `(β−center)'W(β−center)`.
    pub fn quad_form(&self, beta: &DVector<f64>) -> f64 {
        let delta = beta - &self.center;
        let lt = self.chol.transpose() * delta;
        lt.norm_squared()
    }

    pub fn contains(&self, beta: &DVector<f64>) -> bool {
        self.quad_form(beta) <= self.rd()
    }

    /// `sup |v'(β−center)|` over the ellipsoid, `√(R·d·v'W⁻¹v)`.
    pub fn linear_halfwidth(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        self.rd().sqrt() * z.norm()
    }

    /// Map a point of the closed unit ball into the ellipsoid.
    pub fn from_unit(&self, u: &DVector<f64>) -> DVector<f64> {
        let z = self
            .chol
            .transpose()
            .solve_upper_triangular(u)
            .expect("Cholesky factor has a positive diagonal");
        &self.center + z * self.rd().sqrt()
    }

    /// Inverse of [`Ellipsoid::from_unit`].
    pub fn to_unit(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.chol.transpose() * (beta - &self.center) / self.rd().sqrt()
    }

    /// Gradient with respect to the unit-ball coordinates of [`Ellipsoid::from_unit`],
    /// given the gradient `g` with respect to `β`.
    pub fn pullback_gradient(&self, g: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(g)
            .expect("Cholesky factor has a positive diagonal")
            * self.rd().sqrt()
    }

    /// A point drawn uniformly from the ellipsoid.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.from_unit(&uniform_in_unit_ball(self.dim(), rng))
    }

    /// Per-coordinate half-widths `√(R·d·(W⁻¹)_jj)` of the bounding box.
    pub fn coordinate_halfwidths(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let mut e = DVector::zeros(self.dim());
                e[j] = 1.0;
                self.linear_halfwidth(&e)
            })
            .collect()
    }
}

pub fn uniform_in_unit_ball<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / d as f64);
            return z * (radius / norm);
        }
    }
}

/// Exact range of `xᵢ'β` over the ellipsoid, for every row of `X`.
pub fn predictor_intervals(x: &DMatrix<f64>, ell: &Ellipsoid) -> Result<Vec<(f64, f64)>> {
    check_dim("predictor_intervals: columns of X vs ellipsoid", ell.dim(), x.ncols())?;
    let centers = x * ell.center();
    let z = ell
        .chol
        .solve_lower_triangular(&x.transpose())
        .expect("Cholesky factor has a positive diagonal");
    let scale = ell.rd().sqrt();
    Ok(centers
        .iter()
        .zip(z.column_iter())
        .map(|(&m, col)| {
            let hw = scale * col.norm();
            (m - hw, m + hw)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureCertificate {
    pub intervals: Vec<(f64, f64)>,
    /// Infimum of `a''` over each interval.
    pub u_sq: Vec<f64>,
    /// Supremum of `a''` over each interval.
    pub v_sq: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub h: DMatrix<f64>,
    pub c: f64,
}

impl CurvatureCertificate {
    /// `c ∈ (1/2, 1]`, as the bounds require.
    pub fn c_in_range(&self) -> bool {
        self.c > 0.5 && self.c <= 1.0
    }
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        seq.serialize_element(&row.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

fn curvature_extremes(family: &GlmFamily, lo: f64, hi: f64) -> (f64, f64) {
    let (a_lo, a_hi) = (family.a2(lo), family.a2(hi));
    match family.shape() {
        CurvatureShape::Constant => (a_lo, a_lo),
        CurvatureShape::Increasing => (a_lo, a_hi),
        CurvatureShape::Decreasing => (a_hi, a_lo),
        CurvatureShape::Unimodal { mode } => {
            let sup = if lo <= mode && mode <= hi {
                family.a2(mode)
            } else {
                a_lo.max(a_hi)
            };
            (a_lo.min(a_hi), sup)
        }
    }
}

/// `H = Σ u_i² xᵢxᵢ'` and `c = min u_i²/v_i²` from the curvature extremes on each interval.
pub fn certificate(family: &GlmFamily, x: &DMatrix<f64>, ell: &Ellipsoid) -> Result<CurvatureCertificate> {
    let intervals = predictor_intervals(x, ell)?;
    let mut u_sq = Vec::with_capacity(intervals.len());
    let mut v_sq = Vec::with_capacity(intervals.len());
    for (i, &(lo, hi)) in intervals.iter().enumerate() {
        let (u, v) = curvature_extremes(family, lo, hi);
        if !(u >= MIN_CURVATURE) {
            return Err(Error::DegenerateCurvature { index: i, value: u });
        }
        u_sq.push(u);
        v_sq.push(v);
    }
    let mut ux = x.clone();
    for (i, &u) in u_sq.iter().enumerate() {
        ux.row_mut(i).scale_mut(u.sqrt());
    }
    let h = ux.transpose() * ux;
    if Cholesky::new(h.clone()).is_none() {
        return Err(Error::Singular("curvature matrix H is not positive definite".into()));
    }
    let c = u_sq
        .iter()
        .zip(v_sq.iter())
        .map(|(u, v)| u / v)
        .fold(1.0_f64, f64::min);
    Ok(CurvatureCertificate {
        intervals,
        u_sq,
        v_sq,
        h,
        c,
    })
}

/// Check `Δ'HΔ/(2c) ≥ D(β*, β) ≥ Δ'HΔ/2` at `n_samples` uniform points of the ellipsoid,
/// and whether `c` lies in `(1/2, 1]`.
pub fn check_assumption1(
    family: &GlmFamily,
    x: &DMatrix<f64>,
    cert: &CurvatureCertificate,
    ell: &Ellipsoid,
    n_samples: usize,
    seed: u64,
) -> ViolationReport {
    let beta_star = ell.center();
    let n_chunks = n_samples.div_ceil(SAMPLE_CHUNK);
    let per_chunk: Vec<Vec<Violation>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Purpose::Assumption1, k as u64);
            let count = SAMPLE_CHUNK.min(n_samples - k * SAMPLE_CHUNK);
            let mut found = Vec::new();
            for _ in 0..count {
                let beta = ell.sample_uniform(&mut rng);
                let delta = &beta - beta_star;
                let q = (delta.transpose() * &cert.h * &delta)[(0, 0)];
                let kl = kl_gap(family, x, beta_star, &beta).expect("dimensions checked by the ellipsoid");
                let tol = 1e-10 * (1.0 + kl.abs());
                let point: Vec<f64> = beta.iter().copied().collect();
                if q / (2.0 * cert.c) < kl - tol {
                    found.push(Violation {
                        kind: ViolationKind::QuadraticUpper,
                        point: point.clone(),
                        lhs: q / (2.0 * cert.c),
                        rhs: kl,
                    });
                }
                if kl < q / 2.0 - tol {
                    found.push(Violation {
                        kind: ViolationKind::QuadraticLower,
                        point,
                        lhs: kl,
                        rhs: q / 2.0,
                    });
                }
            }
            found
        })
        .collect();
    let mut violations: Vec<Violation> = per_chunk.into_iter().flatten().collect();
    if !cert.c_in_range() {
        violations.push(Violation {
            kind: ViolationKind::CurvatureRatio,
            point: Vec::new(),
            lhs: cert.c,
            rhs: 0.5,
        });
    }
    ViolationReport {
        checked: n_samples,
        violations,
    }
}
