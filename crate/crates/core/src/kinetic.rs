//! The toric kinetic term `W(x, α) = ½ Σ_i <ℓ_i, α>² / l_i(x)` and its
//! derivatives, all assembled in one pass over the facets.
//!
//! Sign convention: `mixed_hess[(j, k)] = ∂²W/∂α_j∂x_k = -Σ_i <ℓ_i,α> ℓ_i^j ℓ_i^k / l_i(x)²`,
//! i.e. `LᵀAL` with `A = diag(-<ℓ_i,α>/l_i(x)²)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::polytope::DelzantPolytope;

/// Weights live in 𝔤* ≅ ℝⁿ.
pub type WeightVector = DVector<f64>;

/// Value and first/second derivatives of a generating function at `(x, α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticEval {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_alpha: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    /// Entry `(j, k)` is `∂²W/∂α_j∂x_k`.
    pub mixed_hess: DMatrix<f64>,
}

/// A generating function `W(x, α)` of a canonical transformation, possibly
/// restricted to a polytope interior in `x`.
pub trait GeneratingFunction: Sync {
    fn dim(&self) -> usize;

    fn domain(&self) -> Option<&DelzantPolytope>;

    fn eval(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<KineticEval>;

    /// Reference magnitude of the mixed Hessian at `(x, α)`, used to judge
    /// singularity independently of the matrix's own spectrum (which is
    /// meaningless for 1×1 blocks).
    fn mixed_scale(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
        Ok(self.eval(x, alpha)?.mixed_hess.norm())
    }
}

/// `W` for a Delzant polytope.
#[derive(Clone, Copy, Debug)]
pub struct KineticForm<'a> {
    polytope: &'a DelzantPolytope,
}

impl<'a> KineticForm<'a> {
    pub fn new(polytope: &'a DelzantPolytope) -> Self {
        Self { polytope }
    }

    pub fn polytope(&self) -> &'a DelzantPolytope {
        self.polytope
    }
}

impl GeneratingFunction for KineticForm<'_> {
    fn dim(&self) -> usize {
        self.polytope.dim()
    }

    fn domain(&self) -> Option<&DelzantPolytope> {
        Some(self.polytope)
    }

    fn eval(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<KineticEval> {
        w_eval(self.polytope, x, alpha)
    }

    fn mixed_scale(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
        let p = self.polytope;
        p.require_interior(x)?;
        let l = p.facet_values_unchecked(x);
        let dl = dl_alpha(p, alpha)?;
        Ok(p.normals()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let norm2: f64 = row.iter().map(|&v| (v * v) as f64).sum();
                dl[i].abs() * norm2 / (l[i] * l[i])
            })
            .sum())
    }
}

/// `(<ℓ_1, α>, …, <ℓ_d, α>)`.
pub fn dl_alpha(p: &DelzantPolytope, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(p.dim(), alpha.len())?;
    Ok(DVector::from_iterator(
        p.facet_count(),
        p.normals().iter().map(|row| p.pair(row, alpha)),
    ))
}

pub fn w_eval(p: &DelzantPolytope, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<KineticEval> {
    p.require_interior(x)?;
    let dl = dl_alpha(p, alpha)?;
    let l = p.facet_values_unchecked(x);
    let n = p.dim();
    let mut out = KineticEval {
        value: 0.0,
        grad_x: DVector::zeros(n),
        grad_alpha: DVector::zeros(n),
        hess_xx: DMatrix::zeros(n, n),
        mixed_hess: DMatrix::zeros(n, n),
    };
    for (i, row) in p.normals().iter().enumerate() {
        let (a, li) = (dl[i], l[i]);
        let r1 = a / li;
        let r2 = r1 / li;
        out.value += 0.5 * a * r1;
        for k in 0..n {
            let lk = row[k] as f64;
            if lk == 0.0 {
                continue;
            }
            out.grad_x[k] -= 0.5 * a * r2 * lk;
            out.grad_alpha[k] += r1 * lk;
            for m in 0..n {
                let lm = row[m] as f64;
                if lm == 0.0 {
                    continue;
                }
                out.hess_xx[(k, m)] += a * r2 / li * lk * lm;
                out.mixed_hess[(k, m)] -= r2 * lk * lm;
            }
        }
    }
    Ok(out)
}

/// Facet matrix `L` (d×n) and the diagonal of `A` with `mixed_hess = LᵀAL`.
pub fn mixed_hess_factors(
    p: &DelzantPolytope,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    p.require_interior(x)?;
    let dl = dl_alpha(p, alpha)?;
    let l = p.facet_values_unchecked(x);
    let big_l = DMatrix::from_fn(p.facet_count(), p.dim(), |i, j| p.normal(i)[j] as f64);
    let a = DVector::from_fn(p.facet_count(), |i, _| -dl[i] / (l[i] * l[i]));
    Ok((big_l, a))
}

/// Residual of the mean-value identity for the quadratic map
/// `g(α) = ∂W/∂x(x, α)`: `‖g(v+w) − g(v) − Dg(v + w/2)·w‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanValueResidual {
    pub residual: f64,
    /// `1 + ‖g(v+w)‖ + ‖g(v)‖`.
    pub scale: f64,
}

impl MeanValueResidual {
    pub fn relative(&self) -> f64 {
        self.residual / self.scale
    }
}

pub fn w_quadratic_mvp_check(
    p: &DelzantPolytope,
    x: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<MeanValueResidual> {
    check_dim(p.dim(), w.len())?;
    let at_v = w_eval(p, x, v)?;
    let at_vw = w_eval(p, x, &(v + w))?;
    let mid = w_eval(p, x, &(v + w * 0.5))?;
    // Dg[(k, j)] = ∂²W/∂x_k∂α_j = mixed_hess[(j, k)].
    let dg_w = mid.mixed_hess.transpose() * w;
    let residual = (&at_vw.grad_x - &at_v.grad_x - dg_w).norm();
    Ok(MeanValueResidual {
        residual,
        scale: 1.0 + at_vw.grad_x.norm() + at_v.grad_x.norm(),
    })
}
