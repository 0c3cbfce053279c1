mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::Rng;
use toric_legendre::certify::{
    boundary_inward_check, boundary_margin, cpn_closed_det, cpn_region_inequality, mixed_det_at, mixed_det_scan,
    near_vertex_certificate, rank_one_det_identity, BoundaryPiece,
};
use toric_legendre::polytope::DelzantPolytope;
use toric_legendre::potential::PotentialField;
use toric_legendre::region::{AlphaBox, NamedRegion, Region};

/// Uniform point of the open simplex with `Σx > ½`.
fn upper_simplex_point(n: usize, rng: &mut StdRng) -> DVector<f64> {
    loop {
        let x = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let s = x.sum();
        if s > 0.5 && s < 1.0 && x.iter().all(|&v| v > 1e-3) && s < 1.0 - 1e-3 {
            return x;
        }
    }
}

/// `−diag(α/x²) + Σα/(1 − Σx)² 𝟙𝟙ᵀ`, written out for the simplex.
fn simplex_mixed_hessian(x: &DVector<f64>, a: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let s = 1.0 - x.sum();
    let c = a.sum() / (s * s);
    DMatrix::from_fn(n, n, |j, k| c - if j == k { a[j] / (x[j] * x[j]) } else { 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_determinant_matches(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = common::rng(seed);
        let p = DelzantPolytope::simplex(n).unwrap();
        let x = upper_simplex_point(n, &mut rng);
        let a = common::random_vector(n, 0.1, 3.0, &mut rng);
        let closed = cpn_closed_det(&x, &a).unwrap();
        let numeric = mixed_det_at(&p, &x, &a).unwrap();
        let oracle = simplex_mixed_hessian(&x, &a).determinant();
        prop_assert!((closed - numeric).abs() <= 1e-10 * numeric.abs());
        prop_assert!((oracle - numeric).abs() <= 1e-10 * numeric.abs());
    }

    #[test]
    fn rank_one_identity_holds(a in prop::collection::vec(0.1f64..10.0, 1..=6)) {
        prop_assert!(rank_one_det_identity(&a).unwrap().relative_error() <= 1e-12);
    }

    #[test]
    fn cauchy_margin_is_positive(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = common::rng(seed);
        for _ in 0..50 {
            let x = upper_simplex_point(n, &mut rng);
            let a = common::random_vector(n, 0.01, 5.0, &mut rng);
            prop_assert!(cpn_region_inequality(&x, &a).unwrap() > 0.0);
        }
    }

    #[test]
    fn cauchy_margin_vanishes_at_equality(seed in any::<u64>(), n in 1usize..=3, t in 0.1f64..5.0) {
        let mut rng = common::rng(seed);
        let w = common::random_vector(n, 0.1, 1.0, &mut rng);
        let x = &w * (0.5 / w.sum());
        let a = &x * t;
        let scale = x.iter().map(|v| v * v / (t * v)).sum::<f64>();
        prop_assert!(cpn_region_inequality(&x, &a).unwrap().abs() <= 1e-14 * scale.max(1.0));
        // Moving up into the region restores a positive margin.
        let up = &x * 1.01;
        prop_assert!(cpn_region_inequality(&up, &a).unwrap() > 0.0);
    }

    #[test]
    fn boundary_witness_reproduces_margin(c in 0.55f64..1.0) {
        let p = DelzantPolytope::simplex(2).unwrap();
        let v = PotentialField::isotropic(&[c, c]);
        let b = AlphaBox::uniform(0.5, 2.0, 2, 4).unwrap();
        let r = boundary_inward_check(&p, &v, BoundaryPiece::SimplexMidSlice, &b, 12).unwrap();
        let again = boundary_margin(&p, &v, BoundaryPiece::SimplexMidSlice, 0, &r.witness.x, &r.witness.alpha).unwrap();
        prop_assert!((again - r.worst_margin).abs() <= 1e-12 * (1.0 + again.abs()));
    }
}

#[test]
fn thousand_random_determinants_per_dimension() {
    let mut rng = common::rng(7);
    for n in 1..=3 {
        let p = DelzantPolytope::simplex(n).unwrap();
        for _ in 0..1000 {
            let x = upper_simplex_point(n, &mut rng);
            let a = common::random_vector(n, 0.05, 5.0, &mut rng);
            let numeric = mixed_det_at(&p, &x, &a).unwrap();
            let closed = cpn_closed_det(&x, &a).unwrap();
            let oracle = simplex_mixed_hessian(&x, &a).determinant();
            assert!((closed - numeric).abs() <= 1e-10 * numeric.abs(), "x={x} a={a}");
            // The assembled matrix is ill-conditioned near the far facet.
            assert!((oracle - numeric).abs() <= 1e-6 * numeric.abs(), "x={x} a={a}");
        }
    }
}

#[test]
fn determinant_near_the_far_facet() {
    // Exact value by rational arithmetic on the binary inputs.
    let x = DVector::from_vec(vec![0.21142283205080237, 0.3959928574068826, 0.3906329121239227]);
    let a = DVector::from_vec(vec![1.4574291682525862, 0.24684396160602878, 3.659172101173447]);
    let exact = 1226694019.6230373;
    let p = DelzantPolytope::simplex(3).unwrap();
    assert!((mixed_det_at(&p, &x, &a).unwrap() - exact).abs() <= 1e-12 * exact);
    assert!((cpn_closed_det(&x, &a).unwrap() - exact).abs() <= 1e-12 * exact);
}

#[test]
fn ten_thousand_cauchy_samples() {
    let mut rng = common::rng(11);
    for k in 0..10_000 {
        let n = 1 + k % 3;
        let x = upper_simplex_point(n, &mut rng);
        let a = common::random_vector(n, 0.01, 5.0, &mut rng);
        assert!(cpn_region_inequality(&x, &a).unwrap() > 0.0);
    }
}

#[test]
fn hirzebruch_region_has_constant_sign() {
    for n in 0..=3 {
        let p = DelzantPolytope::hirzebruch(n).unwrap();
        let r = mixed_det_scan(
            &p,
            &Region::predicate(NamedRegion::Hirzebruch { n }, 24),
            &AlphaBox::uniform(0.1, 3.0, 2, 8).unwrap(),
        )
        .unwrap();
        assert!(r.pass, "n={n}: {r:?}");
        let again = mixed_det_at(&p, &r.witness.x, &r.witness.alpha).unwrap().abs();
        assert!((again - r.worst_margin).abs() <= 1e-12 * again);
    }
}

#[test]
fn simplex_scan_is_sharp() {
    for n in 1..=3 {
        let p = DelzantPolytope::simplex(n).unwrap();
        let b = AlphaBox::uniform(0.1, 3.0, n, 5).unwrap();
        let inside = mixed_det_scan(&p, &Region::predicate(NamedRegion::SimplexUpper, 12), &b).unwrap();
        assert!(inside.pass, "n={n}");
        let whole = mixed_det_scan(&p, &Region::full_interior(12), &b).unwrap();
        assert!(!whole.pass, "n={n}");
    }
}

#[test]
fn near_vertex_margins_are_consistent() {
    let p = DelzantPolytope::simplex(2).unwrap();
    for vert in p.enumerate_vertices().unwrap() {
        let c = p.analytic_center().unwrap();
        let x0 = &vert.point + (&c - &vert.point) * 0.01;
        let alpha = DVector::from_vec(vec![1.0, 2.0]);
        let r = near_vertex_certificate(&p, &vert, &x0, &alpha).unwrap();
        let min = r.sub_checks.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
        assert_eq!(min, r.worst_margin);
        assert_eq!(r.pass, r.sub_checks.iter().all(|s| s.pass));
        let det = mixed_det_at(&p, &x0, &alpha).unwrap().abs();
        let reported = r.sub_checks.iter().find(|s| s.name == "mixed_det").unwrap().value;
        assert!((det - reported).abs() <= 1e-10 * det);
    }
}
