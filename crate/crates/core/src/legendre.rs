//! Inversion of the generalized Legendre transform.
//!
//! Convention: the canonical relation is `Γ = {ξ = −∂W/∂x, η = ∂W/∂α}`, the
//! forward map is `G = min_x (V + W)`, and the reconstructed gradient is
//! `∂V/∂x = −∂W/∂x` at the recovered point. With `W(x, y) = −x·y` this is
//! the classical transform `G(y) = min_x (F(x) − x·y) = −F*(y)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::forward::{default_start, minimize_with, GSource};
use crate::kinetic::{GeneratingFunction, KineticEval, KineticForm};
use crate::linalg::{min_eigenvalue, singular_extremes};
use crate::polytope::DelzantPolytope;
use crate::potential::{CustomPotential, PotentialEval, PotentialField};
use crate::region::Region;

const MAX_ITER: usize = 200;
const MAX_HALVINGS: usize = 60;
const SINGULAR_RATIO: f64 = 1e12;

/// `W(x, y) = −x·y`, optionally restricted to a polytope interior in `x`.
#[derive(Clone, Copy, Debug)]
pub struct Bilinear<'a> {
    dim: usize,
    domain: Option<&'a DelzantPolytope>,
}

impl<'a> Bilinear<'a> {
    pub fn new(dim: usize) -> Self {
        Self { dim, domain: None }
    }

    pub fn on(domain: &'a DelzantPolytope) -> Self {
        Self { dim: domain.dim(), domain: Some(domain) }
    }
}

impl GeneratingFunction for Bilinear<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn domain(&self) -> Option<&DelzantPolytope> {
        self.domain
    }

    fn eval(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<KineticEval> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, alpha.len())?;
        if let Some(p) = self.domain {
            p.require_interior(x)?;
        }
        let n = self.dim;
        Ok(KineticEval {
            value: -x.dot(alpha),
            grad_x: -alpha,
            grad_alpha: -x,
            hess_xx: DMatrix::zeros(n, n),
            mixed_hess: -DMatrix::identity(n, n),
        })
    }

    fn mixed_scale(&self, _x: &DVector<f64>, _alpha: &DVector<f64>) -> Result<f64> {
        Ok(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaSolve {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `‖∂W/∂α(x, α) − η‖`.
    pub residual: f64,
}

/// Solves `∂W/∂α(x, α) = η` for `x` by Newton's method with the mixed
/// Hessian as Jacobian, keeping iterates inside the domain.
pub fn solve_x_from_eta_with(
    gf: &dyn GeneratingFunction,
    alpha: &DVector<f64>,
    eta: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<EtaSolve> {
    let n = gf.dim();
    check_dim(n, alpha.len())?;
    check_dim(n, eta.len())?;
    check_dim(n, x0.len())?;
    let tol = 1e-10 * (1.0 + eta.norm());
    let mut x = x0.clone();
    let mut e = gf.eval(&x, alpha)?;
    let mut r = &e.grad_alpha - eta;
    let mut rn = r.norm();
    for iterations in 0..=MAX_ITER {
        if rn <= tol {
            return Ok(EtaSolve { x, iterations, residual: rn });
        }
        if iterations == MAX_ITER {
            break;
        }
        let jac = &e.mixed_hess;
        let (lo, hi) = singular_extremes(jac);
        let scale = hi.max(gf.mixed_scale(&x, alpha)?);
        if !(lo * SINGULAR_RATIO > scale) {
            return Err(Error::SingularJacobian { ratio: scale / lo });
        }
        let dir = jac
            .clone()
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularJacobian { ratio: f64::INFINITY })?;
        let mut t_max = 1.0;
        if let Some(p) = gf.domain() {
            let reach = p.max_step(&x, &dir);
            if reach.is_finite() {
                t_max = f64::min(1.0, 0.95 * reach);
            }
        }
        let mut t = t_max;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &dir * t;
            if let Ok(et) = gf.eval(&trial, alpha) {
                let rt = &et.grad_alpha - eta;
                let rtn = rt.norm();
                if rtn.is_finite() && rtn <= (1.0 - 1e-4 * t) * rn {
                    accepted = Some((trial, et, rt, rtn));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, en, rnext, rnn)) = accepted else {
            return Err(Error::NonConvergence { what: "eta inversion line search", iterations });
        };
        x = xn;
        e = en;
        r = rnext;
        rn = rnn;
    }
    Err(Error::NonConvergence { what: "eta inversion", iterations: MAX_ITER })
}

/// [`solve_x_from_eta_with`] for the kinetic form of `p`.
pub fn solve_x_from_eta(
    p: &DelzantPolytope,
    alpha: &DVector<f64>,
    eta: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    solve_x_from_eta_with(&KineticForm::new(p), alpha, eta, x0).map(|s| s.x)
}

/// Fixes the additive constant so that sample `alpha_index` takes `value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub alpha_index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconstructOptions {
    pub anchor: Option<Anchor>,
    /// First Newton start; later samples continue from their predecessor.
    /// Defaults to the centroid of `region` when one is given.
    pub start: Option<DVector<f64>>,
    /// Samples outside this region are flagged.
    pub region: Option<Region>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedSample {
    pub index: usize,
    pub alpha: DVector<f64>,
    pub x_of_alpha: DVector<f64>,
    pub v_value: f64,
    pub v_grad: DVector<f64>,
    pub newton_iters: usize,
    pub residual: f64,
    pub in_region: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleFailure {
    pub index: usize,
    pub alpha: DVector<f64>,
    pub error: Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub samples: Vec<ReconstructedSample>,
    pub failures: Vec<SampleFailure>,
    /// `None` means values are determined only up to an additive constant.
    pub anchor: Option<Anchor>,
}

impl ReconstructionResult {
    pub fn max_residual(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.residual))
    }

    pub fn all_in_region(&self) -> bool {
        self.samples.iter().all(|s| s.in_region)
    }

    /// Smallest distance between recovered points of distinct weights.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.samples.iter().enumerate() {
            for b in &self.samples[i + 1..] {
                if a.alpha != b.alpha {
                    best = best.min((&a.x_of_alpha - &b.x_of_alpha).norm());
                }
            }
        }
        best
    }
}

/// Recovers `V` and `∂V/∂x` at the points `x(α)` from samples of `G`.
pub fn reconstruct_v(
    gf: &dyn GeneratingFunction,
    source: &dyn GSource,
    alphas: &[DVector<f64>],
    options: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    check_dim(gf.dim(), source.dim())?;
    let mut samples: Vec<ReconstructedSample> = Vec::with_capacity(alphas.len());
    let mut failures = Vec::new();
    let region_start = match (&options.start, &options.region, gf.domain()) {
        (None, Some(region), Some(p)) => region_centroid(region, p),
        _ => None,
    };
    for (index, alpha) in alphas.iter().enumerate() {
        check_dim(gf.dim(), alpha.len())?;
        let cold = options
            .start
            .clone()
            .or_else(|| region_start.clone())
            .unwrap_or_else(|| default_start(gf.domain(), alpha));
        match reconstruct_one(gf, source, alpha, samples.last().map(|s| &s.x_of_alpha), &cold) {
            Ok((x, v_value, v_grad, solve)) => {
                let in_region = match (&options.region, gf.domain()) {
                    (Some(region), Some(p)) => region.contains(p, &x),
                    _ => true,
                };
                samples.push(ReconstructedSample {
                    index,
                    alpha: alpha.clone(),
                    x_of_alpha: x,
                    v_value,
                    v_grad,
                    newton_iters: solve.iterations,
                    residual: solve.residual,
                    in_region,
                });
            }
            Err(error) => failures.push(SampleFailure { index, alpha: alpha.clone(), error }),
        }
    }
    if let Some(anchor) = options.anchor {
        let s = samples
            .iter()
            .find(|s| s.index == anchor.alpha_index)
            .ok_or_else(|| Error::InvalidArgument(format!("anchor sample {} unavailable", anchor.alpha_index)))?;
        let shift = anchor.value - s.v_value;
        for s in &mut samples {
            s.v_value += shift;
        }
    }
    Ok(ReconstructionResult { samples, failures, anchor: options.anchor })
}

type Recovered = (DVector<f64>, f64, DVector<f64>, EtaSolve);

/// Centroid of the region samples, when it lies in the region. Default starts
/// such as the analytic center can sit on the degenerate locus itself.
fn region_centroid(region: &Region, p: &DelzantPolytope) -> Option<DVector<f64>> {
    let pts = region.sample(p).ok()?;
    let first = pts.first()?;
    let c = pts.iter().fold(DVector::zeros(first.len()), |acc, x| acc + x) / pts.len() as f64;
    region.contains(p, &c).then_some(c)
}

fn reconstruct_one(
    gf: &dyn GeneratingFunction,
    source: &dyn GSource,
    alpha: &DVector<f64>,
    warm: Option<&DVector<f64>>,
    cold: &DVector<f64>,
) -> Result<Recovered> {
    let (g, eta) = source.value_and_gradient(alpha)?;
    let solve = match warm {
        Some(x0) => solve_x_from_eta_with(gf, alpha, &eta, x0)
            .or_else(|_| solve_x_from_eta_with(gf, alpha, &eta, cold))?,
        None => solve_x_from_eta_with(gf, alpha, &eta, cold)?,
    };
    let w = gf.eval(&solve.x, alpha)?;
    Ok((solve.x.clone(), g - w.value, -w.grad_x, solve))
}

/// A convex function and its classical transform on sampled points.
#[derive(Clone, Debug)]
pub struct ClassicalPair {
    pub f: PotentialField,
    pub domain: Option<DelzantPolytope>,
    pub ys: Vec<DVector<f64>>,
    /// `G(y) = min_x (F(x) − x·y)`.
    pub g_values: Vec<f64>,
    /// Minimizers `x(y) = −∂G/∂y`.
    pub xs: Vec<DVector<f64>>,
    /// `max ‖∇F(x(y)) − y‖`: how far the two gradient maps are from inverse.
    pub inverse_residual: f64,
}

impl ClassicalPair {
    /// The convex conjugate `F*(y) = −G(y)` as a potential, evaluated by
    /// solving the minimization on demand. Its Hessian is `(∇²F)⁻¹` at `x(y)`.
    pub fn conjugate_field(&self) -> PotentialField {
        let f = self.f.clone();
        let domain = self.domain.clone();
        let n = self.ys.first().map_or_else(|| f.dim().unwrap_or(0), |y| y.len());
        PotentialField::Custom(CustomPotential::new(n, "convex_conjugate", move |y| {
            let gf: Box<dyn GeneratingFunction> = match &domain {
                Some(p) => Box::new(Bilinear::on(p)),
                None => Box::new(Bilinear::new(n)),
            };
            let r = minimize_with(gf.as_ref(), &f, y, None)?;
            if !r.converged() {
                return Err(Error::NonConvergence { what: "conjugate evaluation", iterations: r.iterations });
            }
            let hess = f
                .v_eval(&r.x_star)?
                .hess
                .try_inverse()
                .ok_or_else(|| Error::Potential("singular Hessian in conjugate".into()))?;
            Ok(PotentialEval { value: -r.g_value, grad: r.x_star, hess })
        }))
    }
}

/// Classical Legendre transform of a strictly convex `F` at the points `ys`,
/// computed with the forward solver and `W = −x·y`.
pub fn classical_legendre(
    f: &PotentialField,
    ys: &[DVector<f64>],
    domain: Option<&DelzantPolytope>,
) -> Result<ClassicalPair> {
    if let PotentialField::Quadratic { q, .. } = f {
        let lam = min_eigenvalue(q);
        if !(lam > 1e-12 * q.amax().max(1.0)) {
            return Err(Error::InvalidArgument(format!(
                "F is not strictly convex (min Hessian eigenvalue {lam:e})"
            )));
        }
    }
    let n = match (ys.first(), domain, f.dim()) {
        (Some(y), _, _) => y.len(),
        (None, Some(p), _) => p.dim(),
        (None, None, Some(d)) => d,
        (None, None, None) => 0,
    };
    let gf: Bilinear = match domain {
        Some(p) => Bilinear::on(p),
        None => Bilinear::new(n),
    };
    let mut g_values = Vec::with_capacity(ys.len());
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(ys.len());
    let mut inverse_residual: f64 = 0.0;
    for y in ys {
        check_dim(n, y.len())?;
        let r = minimize_with(&gf, f, y, xs.last())?;
        if !r.converged() {
            return Err(Error::InvalidArgument(format!(
                "F is not strictly convex and stable at y = {:?}: solver status {}",
                y.as_slice(),
                r.status
            )));
        }
        inverse_residual = inverse_residual.max((f.v_eval(&r.x_star)?.grad - y).norm());
        g_values.push(r.g_value);
        xs.push(r.x_star);
    }
    Ok(ClassicalPair {
        f: f.clone(),
        domain: domain.cloned(),
        ys: ys.to_vec(),
        g_values,
        xs,
        inverse_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{sample_g, ClosureSource, ForwardOracle, SampleOptions, TableSource};
    use crate::region::AlphaBox;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn eta_inversion_examples() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let x = solve_x_from_eta(&cp1, &v(&[1.0]), &v(&[16.0 / 3.0]), &v(&[0.6])).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-10);
        // η = 4 is a double root at the fold x = ½, so x is only fixed to
        // the square root of the residual tolerance.
        let x = solve_x_from_eta(&cp1, &v(&[1.0]), &v(&[4.0]), &v(&[0.3])).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-5);

        let h1 = DelzantPolytope::hirzebruch(1).unwrap();
        let (x0, a) = (v(&[0.9, 0.3]), v(&[1.0, 2.0]));
        let eta = crate::kinetic::w_eval(&h1, &x0, &a).unwrap().grad_alpha;
        let s = solve_x_from_eta_with(&KineticForm::new(&h1), &a, &eta, &x0).unwrap();
        assert!(s.iterations <= 1);
        assert_eq!(s.x, x0);
    }

    #[test]
    fn degenerate_point_is_singular() {
        // CP¹ at x = ½ with α = 1: ∂²W/∂α∂x = −1/x² + 1/(1−x)² = 0.
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let err = solve_x_from_eta(&cp1, &v(&[1.0]), &v(&[5.0]), &v(&[0.5])).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }), "{err:?}");
    }

    #[test]
    fn zero_potential_on_cp1() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let kf = KineticForm::new(&cp1);
        let src = ClosureSource::new(1, |a| Ok((2.0 * a[0] * a[0], DVector::from_element(1, 4.0 * a[0]))));
        let alphas: Vec<_> = (0..7).map(|k| v(&[0.5 + 0.25 * k as f64])).collect();
        let opts = ReconstructOptions { start: Some(v(&[0.4])), ..Default::default() };
        let r = reconstruct_v(&kf, &src, &alphas, &opts).unwrap();
        assert!(r.failures.is_empty(), "{:?}", r.failures);
        for s in &r.samples {
            assert!(s.v_value.abs() < 1e-8);
            assert!((s.x_of_alpha[0] - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn cp2_round_trip() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        let pot = PotentialField::isotropic(&[0.7, 0.7]);
        let kf = KineticForm::new(&cp2);
        let oracle = ForwardOracle::new(&kf, &pot);
        let alphas = AlphaBox::uniform(0.5, 2.0, 2, 5).unwrap().points();
        let r = reconstruct_v(&kf, &oracle, &alphas, &ReconstructOptions::default()).unwrap();
        assert!(r.failures.is_empty());
        for s in &r.samples {
            let truth = pot.v_eval(&s.x_of_alpha).unwrap();
            assert!((s.v_value - truth.value).abs() < 1e-6);
            assert!((&s.v_grad - &truth.grad).norm() < 1e-5);
            assert!(s.residual < 1e-8);
        }
        assert!(r.min_separation() > 1e-10);
    }

    #[test]
    fn table_mode_has_second_order_error() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        let pot = PotentialField::isotropic(&[0.7, 0.7]);
        let b = AlphaBox::uniform(0.5, 2.0, 2, 16).unwrap();
        let t = sample_g(&cp2, &pot, &b, &SampleOptions::default()).unwrap();
        let src = TableSource::new(&t).unwrap();
        let interior: Vec<_> = b
            .points()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| b.multi_index(*k).iter().all(|&i| i > 0 && i < 15))
            .map(|(_, a)| a)
            .collect();
        let r = reconstruct_v(&KineticForm::new(&cp2), &src, &interior, &ReconstructOptions::default())
            .unwrap();
        assert!(r.failures.is_empty());
        let err = r
            .samples
            .iter()
            .map(|s| (s.v_value - pot.value(&s.x_of_alpha).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn anchoring_shifts_values() {
        let kf_poly = DelzantPolytope::simplex(1).unwrap();
        let kf = KineticForm::new(&kf_poly);
        let src = ClosureSource::new(1, |a| Ok((2.0 * a[0] * a[0] + 3.0, DVector::from_element(1, 4.0 * a[0]))));
        let alphas = [v(&[1.0]), v(&[1.5])];
        let opts = ReconstructOptions {
            anchor: Some(Anchor { alpha_index: 0, value: 0.0 }),
            start: Some(v(&[0.4])),
            region: None,
        };
        let r = reconstruct_v(&kf, &src, &alphas, &opts).unwrap();
        assert!(r.samples.iter().all(|s| s.v_value.abs() < 1e-8));
    }

    #[test]
    fn classical_examples() {
        let half = PotentialField::isotropic(&[0.0]);
        let ys: Vec<_> = [-1.0, 0.0, 0.5, 2.0].iter().map(|&y| v(&[y])).collect();
        let pair = classical_legendre(&half, &ys, None).unwrap();
        for (y, g) in ys.iter().zip(&pair.g_values) {
            assert!((g + 0.5 * y[0] * y[0]).abs() < 1e-12);
        }
        assert!(pair.inverse_residual < 1e-12);

        let q = PotentialField::quadratic(DMatrix::from_diagonal(&v(&[1.0, 4.0])), v(&[0.0, 0.0]), 0.0)
            .unwrap();
        let y = v(&[0.6, -1.2]);
        let pair = classical_legendre(&q, &[y.clone()], None).unwrap();
        let want = -0.5 * (y[0] * y[0] + y[1] * y[1] / 4.0);
        assert!((pair.g_values[0] - want).abs() < 1e-12);

        let flat = PotentialField::quadratic(DMatrix::from_diagonal(&v(&[1.0, 0.0])), v(&[0.0, 0.0]), 0.0)
            .unwrap();
        assert!(classical_legendre(&flat, &[y], None).is_err());
    }

    #[test]
    fn reciprocal_conjugate_on_half_line() {
        // min_t (t s + 1/t) = 2√s, i.e. F(t) = 1/t at y = −s.
        let o1 = DelzantPolytope::orthant(1).unwrap();
        let recip = PotentialField::Custom(CustomPotential::new(1, "reciprocal", |t| {
            let t = t[0];
            Ok(PotentialEval {
                value: 1.0 / t,
                grad: DVector::from_element(1, -1.0 / (t * t)),
                hess: DMatrix::from_element(1, 1, 2.0 / (t * t * t)),
            })
        }));
        let ss = [0.25, 1.0, 4.0];
        let ys: Vec<_> = ss.iter().map(|&s| v(&[-s])).collect();
        let pair = classical_legendre(&recip, &ys, Some(&o1)).unwrap();
        for (s, g) in ss.iter().zip(&pair.g_values) {
            assert!((g - 2.0 * s.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn double_conjugacy() {
        let q = PotentialField::quadratic(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            v(&[0.3, -0.2]),
            1.5,
        )
        .unwrap();
        let ys: Vec<_> = AlphaBox::uniform(-1.0, 1.0, 2, 4).unwrap().points();
        let first = classical_legendre(&q, &ys, None).unwrap();
        let conj = first.conjugate_field();
        let second = classical_legendre(&conj, &first.xs, None).unwrap();
        for (x, g2) in first.xs.iter().zip(&second.g_values) {
            let f = q.value(x).unwrap();
            assert!((f + g2).abs() <= 1e-8 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn bilinear_reconstruction_recovers_f() {
        let gf = Bilinear::new(1);
        let src = ClosureSource::new(1, |y| Ok((-0.5 * y[0] * y[0], -y.clone())));
        let ys: Vec<_> = [-1.0, 0.5, 2.0].iter().map(|&y| v(&[y])).collect();
        let r = reconstruct_v(&gf, &src, &ys, &ReconstructOptions::default()).unwrap();
        for s in &r.samples {
            let x = s.x_of_alpha[0];
            assert!((s.v_value - 0.5 * x * x).abs() < 1e-10);
            assert!((s.v_grad[0] - x).abs() < 1e-10);
        }
    }
}
