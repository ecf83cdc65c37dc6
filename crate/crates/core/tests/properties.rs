//! Invariants of the bound components, checked on random instances.

use evbounds::bounds::{assemble, BoundComponents, LowerCurvatureTerm};
use evbounds::config::ExperimentConfig;
use evbounds::curvature::{certificate, Ellipsoid};
use evbounds::evidence::importance_sample;
use evbounds::family::GlmFamily;
use evbounds::prior::{extremes_over_ball, ExtremeMethod, Prior};
use evbounds::process::{exact_sup, exact_sup_ellipsoid};
use evbounds::pseudo_true::{kl_gap, kl_rate_lower_bound};
use evbounds::quadform::{prob_ball, weighted_chisq_cdf};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn families() -> impl Strategy<Value = GlmFamily> {
    prop_oneof![Just(GlmFamily::gaussian()), Just(GlmFamily::logistic()), Just(GlmFamily::poisson())]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn vector(len: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, len).prop_map(DVector::from_vec)
}

/// A PSD matrix `AA' + 0.1·I`, kept away from singularity.
fn psd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(d, d).prop_map(move |a| &a * a.transpose() + DMatrix::identity(d, d) * 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_sup_is_homogeneous(x in matrix(12, 3), r in vector(12, 2.0), rho in 0.01f64..3.0, s in 0.1f64..5.0) {
        let base = exact_sup(&x, &r, rho).unwrap();
        prop_assert!((exact_sup(&x, &r, s * rho).unwrap() - s * base).abs() <= 1e-12 * (1.0 + s * base));
        prop_assert!((exact_sup(&x, &(&r * s), rho).unwrap() - s * base).abs() <= 1e-12 * (1.0 + s * base));
    }

    #[test]
    fn exact_sup_dominates_directions(x in matrix(10, 3), r in vector(10, 2.0), v in vector(3, 1.0)) {
        prop_assume!(v.norm() > 1e-6);
        let ell = Ellipsoid::spherical(DVector::zeros(3), 10, 2.0).unwrap();
        let rho = ell.ball_radius().unwrap();
        let dir = &v * (rho / v.norm());
        let value = (r.dot(&(&x * &dir))).abs();
        prop_assert!(value <= exact_sup_ellipsoid(&x, &r, &ell).unwrap() * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn kl_gap_dominates_rate_bound(family in families(), x in matrix(15, 2), bs in vector(2, 1.0), b in vector(2, 3.0)) {
        let gap = kl_gap(&family, &x, &bs, &b).unwrap();
        let lower = kl_rate_lower_bound(&family, &x, &bs, &b);
        prop_assert!(gap >= 0.0);
        prop_assert!(gap + 1e-9 * (1.0 + gap) >= lower, "gap {} < bound {}", gap, lower);
    }

    #[test]
    fn certificate_sandwiches_kl_on_the_ellipsoid(
        family in families(),
        x in matrix(20, 2),
        center in vector(2, 0.5),
        c1 in 0.5f64..6.0,
        seed in any::<u64>(),
    ) {
        let ell = Ellipsoid::spherical(center.clone(), 20, c1).unwrap();
        let cert = certificate(&family, &x, &ell).unwrap();
        prop_assert!(cert.c > 0.0 && cert.c <= 1.0 + 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let b = ell.sample_uniform(&mut rng);
            let delta = &b - &center;
            let q = (delta.transpose() * &cert.h * &delta)[(0, 0)];
            let kl = kl_gap(&family, &x, &center, &b).unwrap();
            let tol = 1e-10 * (1.0 + q);
            prop_assert!(kl >= 0.5 * q - tol, "KL {} below H/2 form {}", kl, 0.5 * q);
            prop_assert!(kl <= 0.5 * q / cert.c + tol, "KL {} above H/(2c) form {}", kl, 0.5 * q / cert.c);
        }
    }

    #[test]
    fn curvature_ratio_shrinks_with_the_radius(family in families(), x in matrix(20, 2), center in vector(2, 0.5), c1 in 0.5f64..4.0) {
        let small = Ellipsoid::spherical(center.clone(), 20, c1).unwrap();
        let large = small.with_r(4.0 * small.r()).unwrap();
        let a = certificate(&family, &x, &small).unwrap().c;
        let b = certificate(&family, &x, &large).unwrap().c;
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn ball_probability_is_monotone_and_scale_equivariant(m in psd(4), t in 0.1f64..20.0, s in 0.2f64..5.0) {
        let method = evbounds::quadform::ProbMethod::EigenSeries;
        let p = prob_ball(&m, t, method).unwrap().p;
        let p2 = prob_ball(&m, 1.5 * t, method).unwrap().p;
        let ps = prob_ball(&(&m * s), s * t, method).unwrap().p;
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(p2 + 1e-9 >= p);
        prop_assert!((ps - p).abs() < 1e-7, "{} vs {}", ps, p);
    }

    #[test]
    fn single_eigenvalue_is_a_scaled_chi_square(lambda in 0.1f64..10.0, t in 0.01f64..30.0) {
        // P(λχ²₁ ≤ t) = erf(√(t/(2λ)))
        let p = weighted_chisq_cdf(&[lambda], t).p;
        prop_assert!((p - libm::erf((t / (2.0 * lambda)).sqrt())).abs() < 1e-7);
    }

    #[test]
    fn prior_extremes_bracket_sampled_densities(
        kind in 0usize..3,
        center in vector(3, 2.0),
        c1 in 0.5f64..8.0,
        seed in any::<u64>(),
    ) {
        let prior = [Prior::laplace(1.3), Prior::gaussian(0.7), Prior::student(3.0, 1.5)].map(Result::unwrap)[kind];
        let ell = Ellipsoid::spherical(center, 12, c1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for method in [ExtremeMethod::Conservative, ExtremeMethod::Numeric] {
            let ext = extremes_over_ball(&prior, &ell, method).unwrap();
            prop_assert!(ext.log_inf <= ext.log_sup);
            for _ in 0..50 {
                let v = prior.log_density(&ell.sample_uniform(&mut rng));
                prop_assert!(v <= ext.log_sup + 1e-9 && v >= ext.log_inf - 1e-9, "{:?}: {} outside [{}, {}]", method, v, ext.log_inf, ext.log_sup);
            }
        }
    }

    #[test]
    fn bounds_are_ordered_and_translate_with_ell_star(
        ell_star in -500.0f64..0.0,
        log_det_h in 0.0f64..40.0,
        c_process in 0.0f64..5.0,
        c_curvature in 0.5f64..1.0,
        d in 1usize..20,
        log_sup in -10.0f64..0.0,
        gap in 0.0f64..10.0,
        eta in 0.0f64..0.5,
        log_p in -1.0f64..0.0,
        shift in -50.0f64..50.0,
        log_c in any::<bool>(),
    ) {
        let lower_term = if log_c { LowerCurvatureTerm::LogC } else { LowerCurvatureTerm::Stated };
        let b = BoundComponents {
            ell_star,
            log_det_h,
            c_process,
            c_curvature,
            d,
            log_sup_prior: log_sup,
            log_inf_prior: log_sup - gap,
            eta,
            log_prob_rd: log_p,
            log_prob_rd_over_c: log_p,
            lower_term,
        };
        let a = assemble(&b);
        // upper − lower = d·(2C − κ(c)) + gap − log(1−η) with equal probability terms
        if 2.0 * c_process >= lower_term.eval(c_curvature) {
            prop_assert!(a.lower <= a.upper);
        }
        let width = d as f64 * (2.0 * c_process - lower_term.eval(c_curvature)) + gap - (-eta).ln_1p();
        prop_assert!((a.upper - a.lower - width).abs() < 1e-9);
        let moved = assemble(&BoundComponents { ell_star: ell_star + shift, ..b });
        prop_assert!((moved.upper - a.upper - shift).abs() < 1e-9);
        prop_assert!((moved.lower - a.lower - shift).abs() < 1e-9);
    }

    #[test]
    fn config_round_trips(n in 2usize..10_000, d in 1usize..50, seed in any::<u64>(), eta in 0.0f64..1.0, label in "[a-z]{0,8}") {
        let cfg = ExperimentConfig { n, d, master_seed: seed, eta, label: Some(label), ..Default::default() };
        prop_assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn posterior_mass_grows_with_the_radius(y in prop::collection::vec(0u8..2, 40), seed in any::<u64>()) {
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { 1.0 } else { ((i % 9) as f64 - 4.0) / 4.0 });
        let y = DVector::from_iterator(40, y.into_iter().map(f64::from));
        let sample = importance_sample(&GlmFamily::logistic(), &x, &y, &Prior::laplace(1.0).unwrap(), 10_000, seed).unwrap();
        let mut prev = 0.0;
        for c1 in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let ell = Ellipsoid::spherical(DVector::zeros(2), 40, c1).unwrap();
            let p = sample.mass(&ell).p;
            prop_assert!(p + 1e-15 >= prev);
            prev = p;
        }
    }
}
