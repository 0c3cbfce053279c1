//! The spectral invariant `G(α) = min_x V(x) + W(x, α)` and its sampling
//! over weight grids.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kinetic::{GeneratingFunction, KineticForm};
use crate::newton::{self, Objective, Settings, Status};
use crate::polytope::DelzantPolytope;
use crate::potential::PotentialField;
use crate::region::AlphaBox;

#[derive(Clone, Debug, PartialEq)]
pub struct MinResult {
    pub alpha: DVector<f64>,
    pub x_star: DVector<f64>,
    pub g_value: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub iterations: usize,
    pub status: Status,
}

impl MinResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// `x ↦ V(x) + W(x, α)` for fixed `α`.
pub struct TotalObjective<'a> {
    pub gf: &'a dyn GeneratingFunction,
    pub v: &'a PotentialField,
    pub alpha: &'a DVector<f64>,
}

impl Objective for TotalObjective<'_> {
    fn dim(&self) -> usize {
        self.gf.dim()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let w = self.gf.eval(x, self.alpha)?;
        let v = self.v.v_eval(x)?;
        Ok((v.value + w.value, v.grad + w.grad_x, v.hess + w.hess_xx))
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        // W alone is cheap enough; the full eval keeps one code path.
        Ok(self.v.value(x)? + self.gf.eval(x, self.alpha)?.value)
    }
}

/// Starting point when none is given: the analytic center of a bounded
/// polytope, `x_i = |α_i|` on an orthant, otherwise a stored interior point
/// (or the origin without a domain).
pub fn default_start(domain: Option<&DelzantPolytope>, alpha: &DVector<f64>) -> DVector<f64> {
    match domain {
        Some(p) if p.is_bounded() => p.analytic_center().expect("bounded polytopes carry a center"),
        Some(p) if p.is_orthant() => alpha.map(|a| a.abs().max(1e-3)),
        Some(p) => p.interior_point().clone(),
        None => DVector::zeros(alpha.len()),
    }
}

/// Minimizes `V + W(·, α)` for a general generating function.
pub fn minimize_with(
    gf: &dyn GeneratingFunction,
    v: &PotentialField,
    alpha: &DVector<f64>,
    x0: Option<&DVector<f64>>,
) -> Result<MinResult> {
    let n = gf.dim();
    check_dim(n, alpha.len())?;
    v.check_dim(n)?;
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("non-finite weight".into()));
    }
    let start = x0.cloned().unwrap_or_else(|| default_start(gf.domain(), alpha));
    let obj = TotalObjective { gf, v, alpha };
    let out = newton::minimize(&obj, gf.domain(), start, &Settings::default())?;
    Ok(MinResult {
        alpha: alpha.clone(),
        x_star: out.x,
        g_value: out.value,
        grad_norm: out.grad_norm,
        hess_min_eig: out.hess_min_eig,
        iterations: out.iterations,
        status: out.status,
    })
}

/// `G(α)` on a Delzant polytope.
pub fn minimize_total(
    p: &DelzantPolytope,
    v: &PotentialField,
    alpha: &DVector<f64>,
    x0: Option<&DVector<f64>>,
) -> Result<MinResult> {
    minimize_with(&KineticForm::new(p), v, alpha, x0)
}

/// Warm start with a cold retry when the warm run does not converge.
fn solve_continued(
    p: &DelzantPolytope,
    v: &PotentialField,
    alpha: &DVector<f64>,
    warm: Option<&DVector<f64>>,
) -> Result<MinResult> {
    match warm {
        Some(x0) if p.contains_interior(x0) => {
            let r = minimize_total(p, v, alpha, Some(x0))?;
            if r.converged() {
                return Ok(r);
            }
            let cold = minimize_total(p, v, alpha, None)?;
            Ok(if cold.converged() { cold } else { r })
        }
        _ => minimize_total(p, v, alpha, None),
    }
}

/// Runs a continuation sweep over `alphas` in order.
fn sweep(p: &DelzantPolytope, v: &PotentialField, alphas: &[DVector<f64>]) -> Result<Vec<MinResult>> {
    sweep_from(p, v, alphas, None)
}

fn sweep_from(
    p: &DelzantPolytope,
    v: &PotentialField,
    alphas: &[DVector<f64>],
    first: Option<MinResult>,
) -> Result<Vec<MinResult>> {
    let mut out: Vec<MinResult> = Vec::with_capacity(alphas.len());
    out.extend(first);
    for a in &alphas[out.len()..] {
        let warm = out.last().filter(|r| r.converged()).map(|r| &r.x_star);
        out.push(solve_continued(p, v, a, warm)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOptions {
    /// Rows are solved concurrently when above 1. The table does not depend
    /// on this: each row continues from its first node, and the first nodes
    /// continue down the leading column.
    pub threads: usize,
    /// Re-solve every weight from `2ⁿ` perturbed starts and flag the table
    /// when the minimum values disagree.
    pub multistart: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { threads: 1, multistart: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GTable {
    pub alpha_box: Option<AlphaBox>,
    pub grid: Vec<DVector<f64>>,
    pub results: Vec<MinResult>,
    pub polytope_fingerprint: String,
    pub potential_fingerprint: String,
    /// Some entry did not converge.
    pub partial: bool,
    /// Multistart found differing minimum values at some weight.
    pub non_unique: bool,
}

impl GTable {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn max_grad_norm(&self) -> f64 {
        self.results.iter().fold(0.0, |m, r| m.max(r.grad_norm))
    }
}

/// Samples `G` on every node of `alpha_box`, row-major.
pub fn sample_g(
    p: &DelzantPolytope,
    v: &PotentialField,
    alpha_box: &AlphaBox,
    options: &SampleOptions,
) -> Result<GTable> {
    check_dim(p.dim(), alpha_box.dim())?;
    let grid = alpha_box.points();
    let row_len = alpha_box.resolution.last().copied().unwrap_or(1).max(1);
    let rows: Vec<&[DVector<f64>]> = grid.chunks(row_len).collect();
    let heads: Vec<DVector<f64>> = rows.iter().map(|r| r[0].clone()).collect();
    let heads = sweep(p, v, &heads)?;
    let solve_row = |(row, head): (&&[DVector<f64>], &MinResult)| sweep_from(p, v, row, Some(head.clone()));
    let solved: Vec<Result<Vec<MinResult>>> = if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| rows.par_iter().zip(heads.par_iter()).map(solve_row).collect())
    } else {
        rows.iter().zip(heads.iter()).map(solve_row).collect()
    };
    let results: Vec<MinResult> = solved.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    finish_table(p, v, Some(alpha_box.clone()), grid, results, options)
}

/// Samples `G` at an explicit list of weights, in order.
pub fn sample_g_at(
    p: &DelzantPolytope,
    v: &PotentialField,
    alphas: &[DVector<f64>],
    options: &SampleOptions,
) -> Result<GTable> {
    for a in alphas {
        check_dim(p.dim(), a.len())?;
    }
    let results = sweep(p, v, alphas)?;
    finish_table(p, v, None, alphas.to_vec(), results, options)
}

fn finish_table(
    p: &DelzantPolytope,
    v: &PotentialField,
    alpha_box: Option<AlphaBox>,
    grid: Vec<DVector<f64>>,
    results: Vec<MinResult>,
    options: &SampleOptions,
) -> Result<GTable> {
    let partial = results.iter().any(|r| !r.converged());
    let mut non_unique = false;
    if options.multistart {
        for r in results.iter().filter(|r| r.converged()) {
            if multistart_spread(p, v, r)? > 1e-8 * (1.0 + r.g_value.abs()) {
                non_unique = true;
                break;
            }
        }
    }
    Ok(GTable {
        alpha_box,
        grid,
        results,
        polytope_fingerprint: p.fingerprint(),
        potential_fingerprint: v.fingerprint(),
        partial,
        non_unique,
    })
}

/// Largest deviation of converged minimum values from `r.g_value` over
/// starts displaced from the default start toward each orthant direction.
pub fn multistart_spread(p: &DelzantPolytope, v: &PotentialField, r: &MinResult) -> Result<f64> {
    let n = p.dim();
    let base = default_start(Some(p), &r.alpha);
    let mut spread: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        let dir = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
        let reach = p.max_step(&base, &dir).min(1.0 + base.amax());
        let x0 = &base + dir * (0.5 * reach);
        let other = minimize_total(p, v, &r.alpha, Some(&x0))?;
        if other.converged() {
            spread = spread.max((other.g_value - r.g_value).abs());
        }
    }
    Ok(spread)
}

/// A source of `G(α)` and `∂G/∂α`.
pub trait GSource: Sync {
    fn dim(&self) -> usize;

    fn value_and_gradient(&self, alpha: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

/// Solves the forward problem on demand and returns the exact envelope
/// gradient `∂W/∂α(x*, α)`.
pub struct ForwardOracle<'a> {
    gf: &'a dyn GeneratingFunction,
    v: &'a PotentialField,
}

impl<'a> ForwardOracle<'a> {
    pub fn new(gf: &'a dyn GeneratingFunction, v: &'a PotentialField) -> Self {
        Self { gf, v }
    }

    pub fn solve(&self, alpha: &DVector<f64>) -> Result<MinResult> {
        let r = minimize_with(self.gf, self.v, alpha, None)?;
        if !r.converged() {
            return Err(Error::NonConvergence { what: "forward minimization", iterations: r.iterations });
        }
        Ok(r)
    }
}

impl GSource for ForwardOracle<'_> {
    fn dim(&self) -> usize {
        self.gf.dim()
    }

    fn value_and_gradient(&self, alpha: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let r = self.solve(alpha)?;
        let w = self.gf.eval(&r.x_star, alpha)?;
        Ok((r.g_value, w.grad_alpha))
    }
}

type GFn = dyn Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)> + Send + Sync;

/// A closed-form `G` with its gradient.
pub struct ClosureSource {
    dim: usize,
    f: Box<GFn>,
}

impl ClosureSource {
    pub fn new(
        dim: usize,
        f: impl Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, f: Box::new(f) }
    }
}

impl GSource for ClosureSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_gradient(&self, alpha: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim, alpha.len())?;
        (self.f)(alpha)
    }
}

/// Central differences of a sampled table. Only interior grid nodes have a
/// gradient.
pub struct TableSource<'a> {
    table: &'a GTable,
    alpha_box: &'a AlphaBox,
}

impl<'a> TableSource<'a> {
    pub fn new(table: &'a GTable) -> Result<Self> {
        let alpha_box = table
            .alpha_box
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("table was not sampled on a weight box".into()))?;
        Ok(Self { table, alpha_box })
    }

    fn node_index(&self, alpha: &DVector<f64>) -> Result<Vec<usize>> {
        let b = self.alpha_box;
        (0..b.dim())
            .map(|i| {
                let h = b.spacing(i);
                let k = if h == 0.0 { 0.0 } else { (alpha[i] - b.lower[i]) / h };
                let r = k.round();
                let tol = 1e-9 * (1.0 + k.abs());
                if (k - r).abs() > tol || r < 0.0 || r as usize >= b.resolution[i] {
                    Err(Error::InvalidArgument(format!("weight {alpha:?} is not a grid node")))
                } else {
                    Ok(r as usize)
                }
            })
            .collect()
    }

    fn entry(&self, idx: &[usize]) -> Result<&MinResult> {
        let r = &self.table.results[self.alpha_box.flat_index(idx)];
        if !r.converged() {
            return Err(Error::NonConvergence { what: "table entry", iterations: r.iterations });
        }
        Ok(r)
    }
}

impl GSource for TableSource<'_> {
    fn dim(&self) -> usize {
        self.alpha_box.dim()
    }

    fn value_and_gradient(&self, alpha: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim(), alpha.len())?;
        let idx = self.node_index(alpha)?;
        let b = self.alpha_box;
        let value = self.entry(&idx)?.g_value;
        let mut grad = DVector::zeros(b.dim());
        for i in 0..b.dim() {
            if idx[i] == 0 || idx[i] + 1 >= b.resolution[i] {
                return Err(Error::TableBoundary(alpha.iter().copied().collect()));
            }
            let mut hi = idx.clone();
            hi[i] += 1;
            let mut lo = idx.clone();
            lo[i] -= 1;
            grad[i] = (self.entry(&hi)?.g_value - self.entry(&lo)?.g_value) / (2.0 * b.spacing(i));
        }
        Ok((value, grad))
    }
}

/// `∂G/∂α` from any source.
pub fn g_gradient(source: &dyn GSource, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    source.value_and_gradient(alpha).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Polynomial;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn linear(c: &[f64]) -> PotentialField {
        PotentialField::Separable {
            terms: c.iter().map(|&a| Polynomial::new(vec![0.0, a]).unwrap()).collect(),
        }
    }

    /// Root of `−1 + ½(1/(1−x)² − 1/x²)` on (0, 1) by bisection.
    fn cp1_tilted_root() -> f64 {
        let f = |x: f64| -1.0 + 0.5 * (1.0 / ((1.0 - x) * (1.0 - x)) - 1.0 / (x * x));
        let (mut a, mut b) = (0.5, 0.999);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn cp1_examples() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let r = minimize_total(&cp1, &PotentialField::zero(1), &v(&[1.0]), None).unwrap();
        assert!(r.converged());
        assert!((r.x_star[0] - 0.5).abs() < 1e-12);
        assert!((r.g_value - 2.0).abs() < 1e-12);

        let xs = cp1_tilted_root();
        assert!((xs - 0.5605).abs() < 1e-3);
        let r = minimize_total(&cp1, &linear(&[-1.0]), &v(&[1.0]), None).unwrap();
        assert!(r.converged(), "{r:?}");
        assert!((r.x_star[0] - xs).abs() < 1e-10);
        let g = -xs + 0.5 * (1.0 / xs + 1.0 / (1.0 - xs));
        assert!((r.g_value - g).abs() < 1e-12);
    }

    #[test]
    fn orthant_example() {
        let o1 = DelzantPolytope::orthant(1).unwrap();
        let r = minimize_total(&o1, &linear(&[1.0]), &v(&[1.0]), None).unwrap();
        assert!(r.converged());
        assert!((r.x_star[0] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.g_value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sampled_tables() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let alphas = [v(&[0.5]), v(&[1.0]), v(&[2.0])];
        let t = sample_g_at(&cp1, &PotentialField::zero(1), &alphas, &SampleOptions::default()).unwrap();
        for (r, g) in t.results.iter().zip([0.5, 2.0, 8.0]) {
            assert!((r.g_value - g).abs() < 1e-12);
        }
        assert!(!t.partial);

        let o1 = DelzantPolytope::orthant(1).unwrap();
        let t = sample_g_at(&o1, &linear(&[1.0]), &[v(&[1.0]), v(&[2.0])], &SampleOptions::default())
            .unwrap();
        assert!((t.results[0].g_value - 2f64.sqrt()).abs() < 1e-12);
        assert!((t.results[1].g_value - 2.0 * 2f64.sqrt()).abs() < 1e-12);

        let t = sample_g_at(&o1, &linear(&[1.0]), &[], &SampleOptions::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn envelope_gradients() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let zero = PotentialField::zero(1);
        let kf = KineticForm::new(&cp1);
        let oracle = ForwardOracle::new(&kf, &zero);
        assert!((g_gradient(&oracle, &v(&[1.0])).unwrap()[0] - 4.0).abs() < 1e-10);

        let cp2 = DelzantPolytope::simplex(2).unwrap();
        let bowl = PotentialField::isotropic(&[0.3, 0.3]);
        let kf2 = KineticForm::new(&cp2);
        let oracle = ForwardOracle::new(&kf2, &bowl);
        assert_eq!(g_gradient(&oracle, &v(&[0.0, 0.0])).unwrap().amax(), 0.0);

        let o1 = DelzantPolytope::orthant(1).unwrap();
        let lin = linear(&[1.0]);
        let kfo = KineticForm::new(&o1);
        let oracle = ForwardOracle::new(&kfo, &lin);
        assert!((g_gradient(&oracle, &v(&[1.0])).unwrap()[0] - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn table_differences() {
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let b = AlphaBox::new(vec![0.5], vec![1.5], vec![11]).unwrap();
        let t = sample_g(&cp1, &PotentialField::zero(1), &b, &SampleOptions::default()).unwrap();
        let src = TableSource::new(&t).unwrap();
        // G = 2α² is quadratic, so central differences are exact.
        let g = g_gradient(&src, &v(&[1.0])).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-9);
        assert!(matches!(g_gradient(&src, &v(&[0.5])), Err(Error::TableBoundary(_))));
        assert!(g_gradient(&src, &v(&[1.03])).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        let pot = PotentialField::isotropic(&[0.7, 0.7]);
        let b = AlphaBox::uniform(0.5, 2.0, 2, 6).unwrap();
        let serial = sample_g(&cp2, &pot, &b, &SampleOptions::default()).unwrap();
        let par = sample_g(&cp2, &pot, &b, &SampleOptions { threads: 3, multistart: false }).unwrap();
        assert_eq!(serial.results, par.results);
        assert!(!serial.partial);
    }

    #[test]
    fn multistart_agrees_for_convex_problems() {
        let h1 = DelzantPolytope::hirzebruch(1).unwrap();
        let pot = PotentialField::isotropic(&[1.0, 0.25]);
        let b = AlphaBox::uniform(0.5, 1.5, 2, 3).unwrap();
        let t = sample_g(&h1, &pot, &b, &SampleOptions { threads: 1, multistart: true }).unwrap();
        assert!(!t.non_unique);
        assert!(!t.partial);
    }

    #[test]
    fn nonconvex_potential_is_flagged_or_certified() {
        // A concave bump; with small weights the total objective is not convex
        // at the center, and the solver must not report a spurious certificate.
        let cp1 = DelzantPolytope::simplex(1).unwrap();
        let bump = PotentialField::quadratic(
            DMatrix::from_element(1, 1, -400.0),
            v(&[0.5]),
            0.0,
        )
        .unwrap();
        let r = minimize_total(&cp1, &bump, &v(&[0.1]), Some(&v(&[0.5]))).unwrap();
        assert_ne!(r.status, Status::Converged);
        let r = minimize_total(&cp1, &bump, &v(&[0.1]), Some(&v(&[0.45]))).unwrap();
        if r.converged() {
            assert!(r.hess_min_eig > 0.0);
            assert!((r.x_star[0] - 0.5).abs() > 0.01);
        }
    }
}
