mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use toric_legendre::polytope::DelzantPolytope;
use toric_legendre::potential::{
    check_convexity, check_sign_conditions, check_strict_convexity, CustomPotential, Polynomial, PotentialEval,
    PotentialField, SignCondition,
};
use toric_legendre::region::Region;

fn random_poly(deg: usize, rng: &mut rand::rngs::StdRng) -> Polynomial {
    Polynomial::new((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn families(n: usize, rng: &mut rand::rngs::StdRng) -> Vec<PotentialField> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = &m + m.transpose();
    let center = common::random_vector(n, -1.0, 1.0, rng);
    let terms = (0..n).map(|_| random_poly(4, rng)).collect();
    // exp(x·a) with analytic derivatives.
    let a = common::random_vector(n, -1.0, 1.0, rng);
    let custom = CustomPotential::new(n, "exp_linear", move |x| {
        let e = x.dot(&a).exp();
        Ok(PotentialEval { value: e, grad: &a * e, hess: &a * a.transpose() * e })
    });
    vec![
        PotentialField::quadratic(q, center, rng.random_range(-1.0..1.0)).unwrap(),
        PotentialField::SumComposed { f: random_poly(5, rng) },
        PotentialField::Separable { terms },
        PotentialField::Custom(custom),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn derivatives_match_finite_differences(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = common::rng(seed);
        let x = common::random_vector(n, -1.0, 1.0, &mut rng);
        for v in families(n, &mut rng) {
            let e = v.v_eval(&x).unwrap();
            let h = 1e-5;
            let g = common::fd_gradient(|y| v.value(y).unwrap(), &x, h);
            prop_assert!(common::rel_err(&g, &e.grad) <= 1e-6, "{:?}", v);
            let mut hess = DMatrix::zeros(n, n);
            for k in 0..n {
                let row = common::fd_gradient(|y| v.v_eval(y).unwrap().grad[k], &x, h);
                hess.set_row(k, &row.transpose());
            }
            prop_assert!((&hess - &e.hess).norm() / (1.0 + e.hess.norm()) <= 1e-6, "{:?}", v);
        }
    }

    #[test]
    fn quadratic_value_is_exact(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = common::rng(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let q = &m * m.transpose();
        let c = common::random_vector(n, -1.0, 1.0, &mut rng);
        let k = rng.random_range(-5.0..5.0);
        let v = PotentialField::quadratic(q.clone(), c.clone(), k).unwrap();
        let x = common::random_vector(n, -3.0, 3.0, &mut rng);
        let mut expected = k;
        for i in 0..n {
            for j in 0..n {
                expected += 0.5 * (x[i] - c[i]) * q[(i, j)] * (x[j] - c[j]);
            }
        }
        prop_assert!((v.value(&x).unwrap() - expected).abs() <= 1e-13 * (1.0 + expected.abs()));
    }

    #[test]
    fn convexity_witnesses_reproduce_margins(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let p = DelzantPolytope::simplex(2).unwrap();
        let region = Region::full_interior(8);
        for v in families(2, &mut rng) {
            for entry in [
                check_strict_convexity(&v, &p, &region).unwrap(),
                check_convexity(&v, &p, &region).unwrap(),
            ] {
                prop_assert!(p.contains_interior(&entry.witness));
                let h = v.v_eval(&entry.witness).unwrap().hess;
                let lam = h.symmetric_eigen().eigenvalues.min();
                prop_assert!((lam - entry.worst_margin).abs() <= 1e-12 * (1.0 + lam.abs()));
            }
        }
    }

    #[test]
    fn sign_witnesses_reproduce_margins(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let v = PotentialField::isotropic(&[rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)]);
        let cases = [
            (DelzantPolytope::simplex(2).unwrap(), SignCondition::SimplexMidSliceDecreasing),
            (DelzantPolytope::centered_box(&[1.0, 1.5]).unwrap(), SignCondition::BoxHyperplaneDecreasing),
            (DelzantPolytope::hirzebruch(1).unwrap(), SignCondition::HirzebruchLineIncreasing { n: 1 }),
            (DelzantPolytope::hirzebruch(2).unwrap(), SignCondition::HirzebruchCurveDecreasing { n: 2 }),
        ];
        for (p, cond) in cases {
            let e = check_sign_conditions(&v, cond, &p, 16).unwrap();
            let g = v.v_eval(&e.witness).unwrap().grad;
            let again = match cond {
                SignCondition::HirzebruchLineIncreasing { .. } => g[1],
                SignCondition::BoxHyperplaneDecreasing => {
                    let i = e.witness.iter().position(|y| *y == 0.0).unwrap();
                    -g[i]
                }
                _ => -g.max(),
            };
            prop_assert!((again - e.worst_margin).abs() <= 1e-12 * (1.0 + again.abs()));
            prop_assert_eq!(e.pass, e.worst_margin > 0.0);
        }
    }
}

#[test]
fn polynomial_degree_cap() {
    assert!(Polynomial::new(vec![1.0; 17]).is_ok());
    assert!(Polynomial::new(vec![1.0; 18]).is_err());
    let p = Polynomial::new(vec![1.0, 0.0, 3.0, 0.0]).unwrap();
    assert_eq!(p.degree(), Some(2));
    assert_eq!(p.eval3(2.0), (13.0, 12.0, 6.0));
}
