//! Damped Newton minimization with a fraction-to-boundary safeguard.
//!
//! Every minimization in the crate (the weighted total potential, the
//! analytic center, classical conjugates, the 1-D symbol minimum) runs through
//! [`minimize`]. Iterates stay strictly inside the optional polytope domain:
//! a step never covers more than `boundary_fraction` of the distance to the
//! nearest facet along the search direction.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::min_eigenvalue;
use crate::polytope::DelzantPolytope;

/// A twice differentiable function to be minimized.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Value, gradient and Hessian at `x`.
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)>;

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.eval(x).map(|(f, _, _)| f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    MaxIter,
    IndefiniteHessian,
    BoundaryEscape,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::IndefiniteHessian => "indefinite_hessian",
            Status::BoundaryEscape => "boundary_escape",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        [Status::Converged, Status::MaxIter, Status::IndefiniteHessian, Status::BoundaryEscape]
            .into_iter()
            .find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Scale `grad_tol` by `1 + |f|`.
    pub relative: bool,
    pub boundary_fraction: f64,
    pub armijo: f64,
    pub facet_floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-10,
            relative: true,
            boundary_fraction: 0.95,
            armijo: 1e-4,
            facet_floor: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub iterations: usize,
    pub status: Status,
}

const MAX_HALVINGS: usize = 60;

pub fn minimize(
    obj: &dyn Objective,
    domain: Option<&DelzantPolytope>,
    x0: DVector<f64>,
    settings: &Settings,
) -> Result<Outcome> {
    crate::error::check_dim(obj.dim(), x0.len())?;
    if let Some(p) = domain {
        p.require_interior(&x0)?;
    }
    let mut x = x0;
    let mut iterations = 0;
    loop {
        let (f, g, h) = obj.eval(&x)?;
        let grad_norm = g.norm();
        let scale = if settings.relative { 1.0 + f.abs() } else { 1.0 };
        let finish = |status: Option<Status>, x: DVector<f64>| {
            let hess_min_eig = min_eigenvalue(&h);
            let status = status.unwrap_or(if hess_min_eig > 0.0 {
                Status::Converged
            } else {
                Status::IndefiniteHessian
            });
            Outcome { x, value: f, grad_norm, hess_min_eig, iterations, status }
        };
        if grad_norm <= settings.grad_tol * scale {
            return Ok(finish(None, x));
        }
        if iterations >= settings.max_iter {
            return Ok(finish(Some(Status::MaxIter), x));
        }
        if let Some(p) = domain {
            if p.min_facet_value(&x) < settings.facet_floor {
                return Ok(finish(Some(Status::BoundaryEscape), x));
            }
        }

        let mut dir = newton_direction(&h, &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            dir = -&g;
            slope = -grad_norm * grad_norm;
        }
        let mut t_max = 1.0;
        if let Some(p) = domain {
            let reach = p.max_step(&x, &dir);
            if reach.is_finite() {
                t_max = f64::min(1.0, settings.boundary_fraction * reach);
            }
        }

        // Predicted decrease below rounding level: the Armijo test is pure
        // noise here and would accept vanishing steps, so take the
        // safeguarded step as is.
        if -slope <= 1e-14 * (1.0 + f.abs()) {
            let trial = &x + &dir * t_max;
            if obj.value(&trial).is_ok_and(f64::is_finite) {
                x = trial;
                iterations += 1;
                continue;
            }
        }
        let mut t = t_max;
        let mut next = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &dir * t;
            if let Ok(ft) = obj.value(&trial) {
                if ft.is_finite() && ft <= f + settings.armijo * t * slope {
                    next = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = next else {
            return Ok(finish(Some(Status::MaxIter), x));
        };
        x = next;
        iterations += 1;
    }
}

/// Newton direction from a Cholesky solve; an indefinite Hessian is shifted
/// to positive definite so the direction still descends.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = h.clone().cholesky() {
        return -chol.solve(g);
    }
    let n = h.nrows();
    let lam = min_eigenvalue(h);
    let norm = h.norm().max(1.0);
    let mut shift = -lam + 1e-8 * norm;
    for _ in 0..40 {
        let shifted = h + DMatrix::identity(n, n) * shift;
        if let Some(chol) = shifted.cholesky() {
            return -chol.solve(g);
        }
        shift *= 10.0;
    }
    -g.clone()
}
