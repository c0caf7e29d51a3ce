mod common;

use gammap::duality::{certify, certify_with, Moment};
use gammap::linalg::{PNorm, SymMatrix};
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::Domain;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn p_strategy() -> impl Strategy<Value = PNorm> {
    prop_oneof![
        Just(PNorm::TWO),
        Just(PNorm::new(3.0).unwrap()),
        (2.0f64..16.0).prop_map(|p| PNorm::new(p).unwrap()),
        Just(PNorm::INFINITY),
    ]
}

fn points(d: usize, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

fn psd(d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| SymMatrix::gram(&DMatrix::from_vec(d, d, v)))
}

fn sized_points(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=3).prop_flat_map(move |d| points(d, n.clone()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trp_is_a_norm_on_psd(
        (a, b) in (1usize..=5).prop_flat_map(|d| (psd(d), psd(d))),
        t in -4.0f64..4.0,
        p in p_strategy(),
    ) {
        common::trp_axioms(&a, &b, t, p.half()).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn value_is_absolutely_homogeneous(pts in sized_points(2..=6), t in prop::sample::select(vec![0.5, 2.0, -3.0]), p in p_strategy()) {
        common::homogeneity(&pts, t, p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn value_is_monotone_under_inclusion(
        (pts, extra) in (1usize..=3).prop_flat_map(|d| (points(d, 2..=5), points(d, 1..=3))),
        p in p_strategy(),
    ) {
        common::monotonicity(&pts, &extra, p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn value_is_subadditive_under_minkowski_sum(
        (kp, lp) in (1usize..=3).prop_flat_map(|d| (points(d, 2..=4), points(d, 2..=4))),
        p in p_strategy(),
    ) {
        common::triangle(&kp, &lp, p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn convex_hull_does_not_change_value(pts in sized_points(2..=7), p in p_strategy()) {
        common::hull_invariance(&pts, p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn sublevel_cuts_keep_feasible_matrices(seed in any::<u64>(), d in 1usize..=5, p in p_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::sublevel_soundness(&mut rng, d, p, 20).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn containment_cuts_keep_feasible_pairs(seed in any::<u64>(), d in 1usize..=4, n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::sk_soundness(&mut rng, d, n, 20).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn certificates_never_exceed_the_solver_value(
        pts in sized_points(2..=6),
        p in p_strategy(),
        raw in prop::collection::vec(0.01f64..1.0, 6),
    ) {
        let k = Domain::finite(&pts).unwrap();
        let sol = common::solve_checked(&k, p).map_err(TestCaseError::fail)?;
        let raw = &raw[..pts.len()];
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let diag = if p == PNorm::TWO { None } else {
            let q = p.dual_q();
            let raw = vec![1.0; k.dim()];
            let norm = q.norm_of(&raw);
            Some(raw.iter().map(|x| (x / norm).sqrt()).collect::<Vec<_>>())
        };
        let cert = certify(&k, p, &w, diag.as_deref()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(cert.lower_bound <= sol.gamma_value + 1e-6, "{} > {}", cert.lower_bound, sol.gamma_value);
    }

    #[test]
    fn second_moment_dominates_centered(pts in sized_points(1..=5), p in p_strategy()) {
        let sym = Domain::finite(&common::symmetric_closure(&pts)).unwrap();
        let n = sym.points().unwrap().len();
        let w = vec![1.0 / n as f64; n];
        let diag = (p != PNorm::TWO).then(|| {
            let norm = p.dual_q().norm_of(&vec![1.0; sym.dim()]);
            vec![(1.0 / norm).sqrt(); sym.dim()]
        });
        let centered = certify_with(&sym, p, &w, diag.as_deref(), Moment::Centered).unwrap();
        let second = certify_with(&sym, p, &w, diag.as_deref(), Moment::Second).unwrap();
        prop_assert!(second.lower_bound >= centered.lower_bound - 1e-12);
    }

    #[test]
    fn certificate_value_ignores_point_order(pts in sized_points(2..=6), shift in 1usize..6) {
        let n = pts.len();
        let w: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
        let s: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / s).collect();
        let a = certify(&Domain::finite(&pts).unwrap(), PNorm::TWO, &w, None).unwrap();
        let mut rp = pts.clone();
        let mut rw = w.clone();
        rp.rotate_left(shift % n);
        rw.rotate_left(shift % n);
        let b = certify(&Domain::finite(&rp).unwrap(), PNorm::TWO, &rw, None).unwrap();
        prop_assert!((a.lower_bound - b.lower_bound).abs() <= 1e-8 * (1.0 + a.lower_bound), "{} vs {}", a.lower_bound, b.lower_bound);
    }

    #[test]
    fn projection_does_not_increase_value(pts in points(3, 2..=6), p in p_strategy()) {
        let k = Domain::finite(&pts).unwrap();
        let proj = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pk = Domain::affine(proj, k.clone()).unwrap();
        let cfg = SolverConfig::default().with_beta(common::beta_for(&k, p));
        let full = solve_gamma(&k, p, &cfg).unwrap();
        let low = solve_gamma(&pk, p, &cfg).unwrap();
        // dropping a coordinate of a feasible ellipsoid stays feasible
        prop_assert!(low.lambda_star <= full.lambda_star * (1.0 + 1e-9) + 2.0 * common::beta_for(&k, p));
    }
}
