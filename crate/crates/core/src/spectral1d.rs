//! Bottom of the weight-`α/ħ` spectrum of `ħ²Δ + V(|z|²)` on ℝ², compared
//! with the classical value `c_α = min_s V(s) + α²/s`.
//!
//! In the sector `e^{imθ}` with `m = α/ħ`, the substitution `u = √r f` turns
//! the radial operator into `−ħ² u'' + V_eff u` with
//! `V_eff(r) = V(r²) + (α² − ħ²/4)/r²`. The `−ħ²/4r²` term is exact for the
//! substitution and of order `ħ²`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::newton::{self, Objective, Settings};
use crate::polytope::DelzantPolytope;
use crate::potential::Polynomial;

pub const MIN_POINTS: usize = 100;
pub const DEFAULT_POINTS: usize = 4000;
pub const EIGEN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RadialProblem {
    v1d: Polynomial,
    alpha: f64,
    hbar: f64,
    r_max: f64,
    npts: usize,
    c_alpha: f64,
}

impl RadialProblem {
    /// `r_max = None` picks twice the radius beyond the classical minimum at
    /// which `V_eff` first reaches `3 c_α`.
    pub fn new(v1d: Polynomial, alpha: f64, hbar: f64, r_max: Option<f64>, npts: usize) -> Result<Self> {
        if !(alpha > 0.0 && hbar > 0.0 && alpha.is_finite() && hbar.is_finite()) {
            return Err(Error::InvalidArgument("alpha and hbar must be positive".into()));
        }
        let m = alpha / hbar;
        if (m - m.round()).abs() > 1e-12 * m.max(1.0) || m.round() < 1.0 {
            return Err(Error::InvalidArgument(format!("alpha/hbar = {m} is not a positive integer")));
        }
        if v1d.degree().unwrap_or(0) < 1 || !(v1d.leading_coefficient() > 0.0) {
            return Err(Error::InvalidArgument(
                "V must grow at infinity (degree >= 1, positive leading coefficient)".into(),
            ));
        }
        if npts < MIN_POINTS {
            return Err(Error::InvalidArgument(format!("npts = {npts} is below {MIN_POINTS}")));
        }
        let (c_alpha, s_star) = classical_minimum(&v1d, alpha)?;
        let mut prob = Self { v1d, alpha, hbar, r_max: 0.0, npts, c_alpha };
        prob.r_max = match r_max {
            Some(r) => r,
            None => 2.0 * prob.threshold_radius(s_star.sqrt()),
        };
        if !(prob.r_max > 0.0 && prob.r_max.is_finite()) {
            return Err(Error::InvalidArgument("r_max must be positive".into()));
        }
        Ok(prob)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn npts(&self) -> usize {
        self.npts
    }

    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    pub fn with_grid(&self, r_max: f64, npts: usize) -> Result<Self> {
        Self::new(self.v1d.clone(), self.alpha, self.hbar, Some(r_max), npts)
    }

    pub fn effective_potential(&self, r: f64) -> f64 {
        effective_potential(&self.v1d, self.alpha, self.hbar, r)
    }

    /// Smallest `r > r0` with `V_eff(r) ≥ 3|c_α|`, to bisection accuracy.
    fn threshold_radius(&self, r0: f64) -> f64 {
        let target = 3.0 * self.c_alpha.abs().max(1e-300);
        let mut hi = r0.max(1e-3);
        while self.effective_potential(hi) < target {
            hi *= 2.0;
        }
        let mut lo = r0;
        if self.effective_potential(lo) >= target {
            return hi;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.effective_potential(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Diagonal and off-diagonal of the finite-difference operator on
    /// `r_j = j h`, `j = 1..=npts`, `h = r_max/(npts + 1)`, Dirichlet ends.
    pub fn tridiagonal(&self) -> (Vec<f64>, f64) {
        let h = self.r_max / (self.npts + 1) as f64;
        let k = self.hbar * self.hbar / (h * h);
        let diag = (1..=self.npts).map(|j| 2.0 * k + self.effective_potential(j as f64 * h)).collect();
        (diag, -k)
    }

    pub fn lowest_eigenvalue(&self) -> Result<f64> {
        let bound = 3.0 * self.c_alpha;
        if !(self.effective_potential(self.r_max) > bound) {
            return Err(Error::InvalidArgument(format!(
                "r_max = {} is inside the classically allowed region (V_eff = {} <= 3 c_alpha = {bound})",
                self.r_max,
                self.effective_potential(self.r_max)
            )));
        }
        let (diag, off) = self.tridiagonal();
        Ok(lowest_tridiagonal_eigenvalue(&diag, off))
    }
}

/// `V(r²) + (α² − ħ²/4)/r²`.
pub fn effective_potential(v1d: &Polynomial, alpha: f64, hbar: f64, r: f64) -> f64 {
    v1d.eval(r * r) + (alpha * alpha - hbar * hbar / 4.0) / (r * r)
}

/// Number of eigenvalues below `lambda` of the symmetric tridiagonal matrix
/// with the given diagonal and constant off-diagonal (Sturm count).
pub fn sturm_count(diag: &[f64], off: f64, lambda: f64) -> usize {
    let e2 = off * off;
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in diag.iter().enumerate() {
        q = d - lambda - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (d.abs() + off.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue by bisection on Sturm counts, to [`EIGEN_TOL`].
pub fn lowest_tridiagonal_eigenvalue(diag: &[f64], off: f64) -> f64 {
    let r = 2.0 * off.abs();
    let mut lo = diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - r));
    let mut hi = diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d + r));
    while hi - lo > EIGEN_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Symbol<'a> {
    v1d: &'a Polynomial,
    a2: f64,
}

impl Objective for Symbol<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, s: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let s = s[0];
        let (p, d1, d2) = self.v1d.eval3(s);
        Ok((
            p + self.a2 / s,
            DVector::from_element(1, d1 - self.a2 / (s * s)),
            DMatrix::from_element(1, 1, d2 + 2.0 * self.a2 / (s * s * s)),
        ))
    }
}

/// `(c_α, s*)` with `c_α = min_{s>0} V(s) + α²/s`.
pub fn classical_minimum(v1d: &Polynomial, alpha: f64) -> Result<(f64, f64)> {
    let half_line = DelzantPolytope::orthant(1)?;
    let obj = Symbol { v1d, a2: alpha * alpha };
    let out = newton::minimize(
        &obj,
        Some(&half_line),
        DVector::from_element(1, alpha.abs().max(1e-3)),
        &Settings::default(),
    )?;
    if out.status != newton::Status::Converged {
        return Err(Error::NonConvergence { what: "classical minimum", iterations: out.iterations });
    }
    Ok((out.value, out.x[0]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralRow {
    pub hbar: f64,
    pub lambda_min: f64,
    pub gap: f64,
}

impl SpectralRow {
    pub fn gap_over_hbar(&self) -> f64 {
        self.gap / self.hbar
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiclassicalReport {
    pub c_alpha: f64,
    pub rows: Vec<SpectralRow>,
    /// Least-squares fit `gap ≈ slope·ħ + intercept`.
    pub slope: f64,
    pub intercept: f64,
}

impl SemiclassicalReport {
    /// Gaps positive and shrinking along the (decreasing) `ħ` list.
    pub fn monotone_approach(&self) -> bool {
        self.rows.iter().all(|r| r.gap > 0.0) && self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }
}

/// Lowest eigenvalues for a decreasing list of `ħ`, each with its default
/// truncation radius.
pub fn semiclassical_limit_check(
    v1d: &Polynomial,
    alpha: f64,
    hbars: &[f64],
    npts: usize,
) -> Result<SemiclassicalReport> {
    if hbars.is_empty() {
        return Err(Error::InvalidArgument("empty hbar list".into()));
    }
    if hbars.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("hbar list must be strictly decreasing".into()));
    }
    let rows: Vec<SpectralRow> = hbars
        .par_iter()
        .map(|&hbar| {
            let prob = RadialProblem::new(v1d.clone(), alpha, hbar, None, npts)?;
            let lambda_min = prob.lowest_eigenvalue()?;
            Ok(SpectralRow { hbar, lambda_min, gap: lambda_min - prob.c_alpha() })
        })
        .collect::<Result<_>>()?;
    let c_alpha = classical_minimum(v1d, alpha)?.0;
    let (slope, intercept) = linear_fit(&rows.iter().map(|r| (r.hbar, r.gap)).collect::<Vec<_>>());
    Ok(SemiclassicalReport { c_alpha, rows, slope, intercept })
}

fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (f64::NAN, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
