//! Sampled certificates for the sufficient conditions of the inversion:
//! mixed-Hessian regularity on regions, inward gradients on region
//! boundaries, the closed forms on simplices and Hirzebruch polytopes, and
//! near-vertex regularity.
//!
//! Every report is a certificate over its grid only. The witness is the
//! sample attaining the worst margin (lowest index on ties) and re-evaluating
//! the condition there reproduces the margin.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::forward::{sample_g, GTable, SampleOptions};
use crate::kinetic::{mixed_hess_factors, w_eval};
use crate::linalg::{int_det, singular_extremes, sym_norm};
use crate::polytope::{DelzantPolytope, Vertex};
use crate::potential::PotentialField;
use crate::region::{self, AlphaBox, Region};

/// Determinants at or below this magnitude count as zero.
pub const DET_FLOOR: f64 = 1e-10;
/// Required ratio of the vertex block to the remaining facets.
pub const DOMINANCE_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub x: DVector<f64>,
    pub alpha: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Positive iff the sub-check passes.
    pub margin: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub condition: String,
    pub region: String,
    pub weight_set: String,
    /// Samples per axis in `x` and in `α`.
    pub x_grid: Vec<usize>,
    pub alpha_grid: Vec<usize>,
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: Witness,
    pub samples: usize,
    pub sub_checks: Vec<SubCheck>,
}

impl CertificateReport {
    pub const NOTE: &'static str = "certificate over the sampled points only";
}

fn describe_box(b: &AlphaBox) -> String {
    format!("box {:?}..{:?}", b.lower, b.upper)
}

/// `det ∂²W/∂α∂x` at `(x, α)`, expanded over the factorization `LᵀAL` by
/// Cauchy–Binet: `Σ_S det(L_S)² Π_{i∈S} A_i` over `n`-subsets of facets.
/// Near a facet the assembled matrix is a large rank-one term plus a small
/// diagonal and loses most of its digits to rounding; the expansion does not.
pub fn mixed_det_at(p: &DelzantPolytope, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    let (_, a) = mixed_hess_factors(p, x, alpha)?;
    let mut sum = 0.0;
    for subset in (0..p.facet_count()).combinations(p.dim()) {
        let rows: Vec<&[i64]> = subset.iter().map(|&i| p.normal(i)).collect();
        let minor = int_det(&rows);
        if minor != 0 {
            sum += (minor * minor) as f64 * subset.iter().map(|&i| a[i]).product::<f64>();
        }
    }
    Ok(sum)
}

/// Scans `|det ∂²W/∂α∂x|` over region × weight grid. Passes iff every
/// determinant exceeds [`DET_FLOOR`] in magnitude and all share one sign.
pub fn mixed_det_scan(p: &DelzantPolytope, region_x: &Region, alphas: &AlphaBox) -> Result<CertificateReport> {
    check_dim(p.dim(), alphas.dim())?;
    let xs = region_x.sample(p)?;
    let weights = alphas.points();
    if xs.is_empty() || weights.is_empty() {
        return Err(Error::InvalidArgument("mixed determinant scan has no samples".into()));
    }
    // Per x row: (min |det|, index of its weight, saw positive, saw negative).
    let rows: Vec<(f64, usize, bool, bool)> = xs
        .par_iter()
        .map(|x| -> Result<_> {
            let mut best = (f64::INFINITY, 0, false, false);
            for (j, a) in weights.iter().enumerate() {
                let det = mixed_det_at(p, x, a)?;
                if det.abs() < best.0 {
                    best.0 = det.abs();
                    best.1 = j;
                }
                best.2 |= det > 0.0;
                best.3 |= det < 0.0;
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (mut worst, mut wi, mut wj) = (f64::INFINITY, 0, 0);
    let (mut pos, mut neg) = (false, false);
    for (i, &(m, j, sp, sn)) in rows.iter().enumerate() {
        if m < worst {
            (worst, wi, wj) = (m, i, j);
        }
        pos |= sp;
        neg |= sn;
    }
    let constant_sign = !(pos && neg);
    let nonzero = worst > DET_FLOOR;
    Ok(CertificateReport {
        condition: "mixed_hessian_nondegenerate".into(),
        region: region_x.describe(),
        weight_set: describe_box(alphas),
        x_grid: region_x.axis_resolution(p.dim())?,
        alpha_grid: alphas.resolution.clone(),
        pass: nonzero && constant_sign,
        worst_margin: worst,
        witness: Witness { x: xs[wi].clone(), alpha: weights[wj].clone() },
        samples: xs.len() * weights.len(),
        sub_checks: vec![
            SubCheck { name: "min_abs_det", pass: nonzero, margin: worst - DET_FLOOR, value: worst },
            SubCheck {
                name: "constant_sign",
                pass: constant_sign,
                margin: if constant_sign { 1.0 } else { -1.0 },
                value: match (pos, neg) {
                    (true, false) => 1.0,
                    (false, true) => -1.0,
                    _ => 0.0,
                },
            },
        ],
    })
}

fn check_simplex_point(x: &DVector<f64>, alpha: &DVector<f64>) -> Result<()> {
    check_dim(x.len(), alpha.len())?;
    if x.iter().any(|&v| !(v > 0.0)) || !(x.sum() < 1.0) {
        return Err(Error::InvalidArgument("x must lie in the open simplex".into()));
    }
    Ok(())
}

/// Closed-form mixed-Hessian determinant on the `n`-simplex:
/// `(−1)ⁿ Πα Σα / (Πx² (1 − Σx)²) · [(1 − Σx)²/Σα − Σ x_i²/α_i]`.
pub fn cpn_closed_det(x: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    check_simplex_point(x, alpha)?;
    if alpha.iter().any(|&a| a == 0.0) {
        return Err(Error::InvalidArgument("weights must be nonzero".into()));
    }
    let n = x.len();
    let s = 1.0 - x.sum();
    let sa = alpha.sum();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let prod_a: f64 = alpha.product();
    let prod_x2: f64 = x.iter().map(|v| v * v).product();
    let bracket = s * s / sa - x.iter().zip(alpha.iter()).map(|(xi, ai)| xi * xi / ai).sum::<f64>();
    Ok(sign * prod_a * sa / (prod_x2 * s * s) * bracket)
}

/// Cauchy margin `Σ x_i²/α_i − (1 − Σx)²/Σα`, positive on `Σx > ½` for
/// positive weights.
pub fn cpn_region_inequality(x: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    check_simplex_point(x, alpha)?;
    let s = 1.0 - x.sum();
    Ok(x.iter().zip(alpha.iter()).map(|(xi, ai)| xi * xi / ai).sum::<f64>() - s * s / alpha.sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankOneCheck {
    /// `det(diag(a) + 𝟙𝟙ᵀ)` by LU.
    pub lhs: f64,
    /// `Π a_i (1 + Σ 1/a_i)`.
    pub rhs: f64,
}

impl RankOneCheck {
    pub fn relative_error(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs()
    }
}

pub fn rank_one_det_identity(a: &[f64]) -> Result<RankOneCheck> {
    if a.is_empty() || a.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("entries must be finite and nonzero".into()));
    }
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { a[i] + 1.0 } else { 1.0 });
    let rhs = a.iter().product::<f64>() * (1.0 + a.iter().map(|v| 1.0 / v).sum::<f64>());
    Ok(RankOneCheck { lhs: m.determinant(), rhs })
}

/// `x_2* = √n x_2 (1 − x_2) / √(1 − 2x_2)`; identically zero for `n = 0`.
pub fn hirzebruch_xstar(n: u32, x2: f64) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    if !(x2 < 0.5) {
        return Err(Error::InvalidArgument(format!("x2 = {x2} must be below 1/2")));
    }
    Ok(f64::from(n).sqrt() * x2 * (1.0 - x2) / (1.0 - 2.0 * x2).sqrt())
}

/// `x_1 > 0`, `0 < x_2 < ½`, `n + 1 − x_1 − n x_2 > 0` and
/// `2x_1 > n + 1 − n(x_2 + x_2*)`.
pub fn hirzebruch_region_contains(n: u32, x1: f64, x2: f64) -> bool {
    let nf = f64::from(n);
    if !(x1 > 0.0 && x2 > 0.0 && x2 < 0.5 && nf + 1.0 - x1 - nf * x2 > 0.0) {
        return false;
    }
    match hirzebruch_xstar(n, x2) {
        Ok(xs) => 2.0 * x1 > nf + 1.0 - nf * (x2 + xs),
        Err(_) => false,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveCheck {
    pub n: u32,
    pub max_residual: f64,
    pub witness_alpha: DVector<f64>,
    /// Minimizers of `W` alone over the weight grid.
    pub table: GTable,
}

impl CurveCheck {
    pub const TOLERANCE: f64 = 1e-7;

    pub fn pass(&self) -> bool {
        !self.table.partial && self.max_residual <= Self::TOLERANCE
    }
}

/// Minimizes `W(·, α)` over the Hirzebruch interior for each grid weight and
/// measures the distance of `x_1*` from the critical curve through `x_2*`.
pub fn hirzebruch_critical_curve_check(n: u32, alphas: &AlphaBox) -> Result<CurveCheck> {
    let p = DelzantPolytope::hirzebruch(n)?;
    let table = sample_g(&p, &PotentialField::zero(2), alphas, &SampleOptions::default())?;
    let mut max_residual: f64 = 0.0;
    let mut witness_alpha = DVector::zeros(2);
    for r in &table.results {
        if !r.converged() {
            return Err(Error::NonConvergence { what: "kinetic minimization", iterations: r.iterations });
        }
        let (x1, x2) = (r.x_star[0], r.x_star[1]);
        let res = (x1 - region::hirzebruch_curve_x1(n, x2)?).abs();
        if res > max_residual || witness_alpha.iter().all(|&v| v == 0.0) {
            max_residual = max_residual.max(res);
            witness_alpha = r.alpha.clone();
        }
    }
    Ok(CurveCheck { n, max_residual, witness_alpha, table })
}

/// Boundary pieces of certified regions, with the inward direction used to
/// show that `V + W` has no minimum there.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPiece {
    /// `Σ x_i = ½` of the simplex region `Σx > ½`. Margin
    /// `max_i −∂_i(V + W)`: some coordinate direction into the region
    /// strictly decreases the total potential.
    SimplexMidSlice,
    /// `x_2 = ½` of the Hirzebruch region. Margin `∂_2(V + W)`.
    HirzebruchMidLine { n: u32 },
    /// The critical curve of the Hirzebruch region. Margin `max_i −∂_i(V + W)`.
    HirzebruchCriticalCurve { n: u32 },
    /// The hyperplanes `y_i = 0` of `{y_i > 0}` in a centered box. Margin
    /// `−∂_i(V + W)`.
    BoxHyperplanes,
}

impl BoundaryPiece {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SimplexMidSlice => "simplex_mid_slice",
            Self::HirzebruchMidLine { .. } => "hirzebruch_mid_line",
            Self::HirzebruchCriticalCurve { .. } => "hirzebruch_critical_curve",
            Self::BoxHyperplanes => "box_hyperplanes",
        }
    }

    pub fn parse(name: &str, hirzebruch_n: u32) -> Result<Self> {
        Ok(match name {
            "simplex_mid_slice" => Self::SimplexMidSlice,
            "hirzebruch_mid_line" => Self::HirzebruchMidLine { n: hirzebruch_n },
            "hirzebruch_critical_curve" => Self::HirzebruchCriticalCurve { n: hirzebruch_n },
            "box_hyperplanes" => Self::BoxHyperplanes,
            other => return Err(Error::UnknownCondition(other.to_string())),
        })
    }

    /// Boundary samples; each carries the coordinate index that defines the
    /// piece where relevant.
    pub fn sample(&self, p: &DelzantPolytope, resolution: usize) -> Result<Vec<(usize, DVector<f64>)>> {
        Ok(match *self {
            Self::SimplexMidSlice => region::simplex_slice(p.dim(), 0.5, resolution)
                .into_iter()
                .map(|x| (0, x))
                .collect(),
            Self::HirzebruchMidLine { n } => {
                region::hirzebruch_mid_line(n, resolution).into_iter().map(|x| (1, x)).collect()
            }
            Self::HirzebruchCriticalCurve { n } => region::hirzebruch_critical_curve(n, resolution)?
                .into_iter()
                .map(|x| (0, x))
                .collect(),
            Self::BoxHyperplanes => region::box_coordinate_hyperplanes(&region::box_half_widths(p)?, resolution),
        })
    }
}

/// Inward margin of `V + W(·, α)` at a boundary sample.
pub fn boundary_margin(
    p: &DelzantPolytope,
    v: &PotentialField,
    piece: BoundaryPiece,
    axis: usize,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<f64> {
    let g = v.v_eval(x)?.grad + w_eval(p, x, alpha)?.grad_x;
    Ok(match piece {
        BoundaryPiece::SimplexMidSlice | BoundaryPiece::HirzebruchCriticalCurve { .. } => (-g).max(),
        BoundaryPiece::HirzebruchMidLine { .. } => g[1],
        BoundaryPiece::BoxHyperplanes => -g[axis],
    })
}

/// Inward-gradient certificate on one boundary piece over a weight grid.
/// Passes iff every margin is positive beyond rounding.
pub fn boundary_inward_check(
    p: &DelzantPolytope,
    v: &PotentialField,
    piece: BoundaryPiece,
    alphas: &AlphaBox,
    resolution: usize,
) -> Result<CertificateReport> {
    check_dim(p.dim(), alphas.dim())?;
    let xs = piece.sample(p, resolution)?;
    let weights = alphas.points();
    if xs.is_empty() || weights.is_empty() {
        return Err(Error::InvalidArgument("boundary check has no samples".into()));
    }
    let (mut worst, mut wi, mut wj) = (f64::INFINITY, 0, 0);
    let mut scale: f64 = 0.0;
    for (i, (axis, x)) in xs.iter().enumerate() {
        for (j, a) in weights.iter().enumerate() {
            let m = boundary_margin(p, v, piece, *axis, x, a)?;
            let g = v.v_eval(x)?.grad.amax() + w_eval(p, x, a)?.grad_x.amax();
            scale = scale.max(g);
            if m < worst {
                (worst, wi, wj) = (m, i, j);
            }
        }
    }
    let tol = 1e-12 * (1.0 + scale);
    Ok(CertificateReport {
        condition: format!("inward_gradient:{}", piece.name()),
        region: piece.name().into(),
        weight_set: describe_box(alphas),
        x_grid: vec![resolution],
        alpha_grid: alphas.resolution.clone(),
        pass: worst > tol,
        worst_margin: worst,
        witness: Witness { x: xs[wi].1.clone(), alpha: weights[wj].clone() },
        samples: xs.len() * weights.len(),
        sub_checks: Vec::new(),
    })
}

/// Regularity near a vertex: the active facets pair nontrivially with `α₀`,
/// the mixed Hessian is nonsingular at `x₀`, and the vertex facets dominate
/// it. Dominance is `σ_min(active block) / ‖remaining block‖₂`, which bounds
/// the perturbation the active block can absorb.
pub fn near_vertex_certificate(
    p: &DelzantPolytope,
    vertex: &Vertex,
    x0: &DVector<f64>,
    alpha0: &DVector<f64>,
) -> Result<CertificateReport> {
    check_dim(p.dim(), alpha0.len())?;
    let (big_l, a) = mixed_hess_factors(p, x0, alpha0)?;
    let n = p.dim();
    let mut active = DMatrix::zeros(n, n);
    let mut rest = DMatrix::zeros(n, n);
    for i in 0..p.facet_count() {
        let row = big_l.row(i).transpose();
        let term = &row * row.transpose() * a[i];
        if vertex.active_facets.contains(&i) {
            active += term;
        } else {
            rest += term;
        }
    }
    let min_pair = vertex
        .active_facets
        .iter()
        .map(|&i| {
            p.normal(i).iter().zip(alpha0.iter()).map(|(&l, &al)| l as f64 * al).sum::<f64>().abs()
        })
        .fold(f64::INFINITY, f64::min);
    let det = (&active + &rest).determinant().abs();
    let (sigma_min, _) = singular_extremes(&active);
    let rest_norm = sym_norm(&rest);
    let ratio = if rest_norm == 0.0 { f64::INFINITY } else { sigma_min / rest_norm };
    let sub_checks = vec![
        SubCheck { name: "active_pairing", pass: min_pair > 0.0, margin: min_pair, value: min_pair },
        SubCheck { name: "mixed_det", pass: det > DET_FLOOR, margin: det - DET_FLOOR, value: det },
        SubCheck {
            name: "vertex_dominance",
            pass: ratio >= DOMINANCE_FACTOR,
            margin: ratio - DOMINANCE_FACTOR,
            value: ratio,
        },
    ];
    let worst = sub_checks.iter().map(|s| s.margin).fold(f64::INFINITY, f64::min);
    Ok(CertificateReport {
        condition: "near_vertex".into(),
        region: format!("vertex {:?}", vertex.point.as_slice()),
        weight_set: format!("{:?}", alpha0.as_slice()),
        x_grid: vec![1],
        alpha_grid: vec![1],
        pass: sub_checks.iter().all(|s| s.pass),
        worst_margin: worst,
        witness: Witness { x: x0.clone(), alpha: alpha0.clone() },
        samples: 1,
        sub_checks,
    })
}
