#![allow(dead_code)]

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use toric_legendre::polytope::DelzantPolytope;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Every builtin family at a few parameter values.
pub fn builtins() -> Vec<(String, DelzantPolytope)> {
    let mut out = Vec::new();
    for n in 1..=3 {
        out.push((format!("simplex({n})"), DelzantPolytope::simplex(n).unwrap()));
    }
    out.push(("box(1,1)".into(), DelzantPolytope::centered_box(&[1.0, 1.0]).unwrap()));
    out.push(("box(1,2,0.5)".into(), DelzantPolytope::centered_box(&[1.0, 2.0, 0.5]).unwrap()));
    for n in 0..=3 {
        out.push((format!("hirzebruch({n})"), DelzantPolytope::hirzebruch(n).unwrap()));
    }
    for n in 1..=2 {
        out.push((format!("orthant({n})"), DelzantPolytope::orthant(n).unwrap()));
    }
    out
}

/// Random interior point: a convex combination of vertices with weights
/// bounded away from zero, or positive coordinates on an orthant.
pub fn interior_point(p: &DelzantPolytope, rng: &mut StdRng) -> DVector<f64> {
    if p.is_orthant() {
        return DVector::from_fn(p.dim(), |_, _| rng.random_range(0.05..3.0));
    }
    let verts = p.enumerate_vertices().unwrap();
    let w: Vec<f64> = verts.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut x = DVector::zeros(p.dim());
    for (v, wi) in verts.iter().zip(&w) {
        x += &v.point * (wi / total);
    }
    assert!(p.contains_interior(&x));
    x
}

pub fn random_vector(n: usize, lo: f64, hi: f64, rng: &mut StdRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Central-difference gradient of `f` with step `h`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}
