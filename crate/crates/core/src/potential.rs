//! Potentials `V` on polytope interiors and sampled checks of the convexity,
//! sign, and symmetry hypotheses that make the inversion well posed.
//!
//! All hypothesis checks are certificates over the sampled points only; the
//! reports say so in [`HypothesisReport::NOTE`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::linalg::min_eigenvalue;
use crate::polytope::DelzantPolytope;
use crate::region::{self, Region};

pub const MAX_DEGREE: usize = 16;

/// Dense univariate polynomial, `coeffs[k]` multiplies `t^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree {} exceeds {MAX_DEGREE}",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    /// `t ↦ t^k`.
    pub fn monomial(k: usize) -> Result<Self> {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree ignoring trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|&c| c != 0.0)
    }

    pub fn leading_coefficient(&self) -> f64 {
        self.degree().map_or(0.0, |d| self.coeffs[d])
    }

    /// `(p(t), p'(t), p''(t))` by a Horner pass.
    pub fn eval3(&self, t: f64) -> (f64, f64, f64) {
        let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            d2 = d2 * t + 2.0 * d1;
            d1 = d1 * t + p;
            p = p * t + c;
        }
        (p, d1, d2)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval3(t).0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

type CustomFn = dyn Fn(&DVector<f64>) -> Result<PotentialEval> + Send + Sync;

/// Black-box potential. The evaluator is called concurrently from parallel
/// sweeps and must be reentrant.
#[derive(Clone)]
pub struct CustomPotential {
    dim: usize,
    label: String,
    f: Arc<CustomFn>,
}

impl CustomPotential {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        f: impl Fn(&DVector<f64>) -> Result<PotentialEval> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, label: label.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum PotentialField {
    /// `½ (x − c)ᵀ Q (x − c) + k` with `Q` symmetric.
    Quadratic { q: DMatrix<f64>, center: DVector<f64>, constant: f64 },
    /// `f(x_1 + … + x_n)`.
    SumComposed { f: Polynomial },
    /// `Σ_i p_i(x_i)`.
    Separable { terms: Vec<Polynomial> },
    Custom(CustomPotential),
}

impl PotentialField {
    pub fn quadratic(q: DMatrix<f64>, center: DVector<f64>, constant: f64) -> Result<Self> {
        let n = center.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.nrows() });
        }
        if (&q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
            return Err(Error::InvalidArgument("quadratic form must be symmetric".into()));
        }
        Ok(Self::Quadratic { q, center, constant })
    }

    /// `½|x − c|²`.
    pub fn isotropic(center: &[f64]) -> Self {
        let n = center.len();
        Self::Quadratic {
            q: DMatrix::identity(n, n),
            center: DVector::from_row_slice(center),
            constant: 0.0,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::Quadratic { q: DMatrix::zeros(n, n), center: DVector::zeros(n), constant: 0.0 }
    }

    /// Dimension fixed by the family, if any (`SumComposed` works in any).
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Quadratic { center, .. } => Some(center.len()),
            Self::SumComposed { .. } => None,
            Self::Separable { terms } => Some(terms.len()),
            Self::Custom(c) => Some(c.dim),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, n),
            None => Ok(()),
        }
    }

    pub fn v_eval(&self, x: &DVector<f64>) -> Result<PotentialEval> {
        self.check_dim(x.len())?;
        let n = x.len();
        match self {
            Self::Quadratic { q, center, constant } => {
                let dx = x - center;
                let grad = q * &dx;
                Ok(PotentialEval { value: 0.5 * dx.dot(&grad) + constant, grad, hess: q.clone() })
            }
            Self::SumComposed { f } => {
                let (p, d1, d2) = f.eval3(x.sum());
                Ok(PotentialEval {
                    value: p,
                    grad: DVector::from_element(n, d1),
                    hess: DMatrix::from_element(n, n, d2),
                })
            }
            Self::Separable { terms } => {
                let mut out = PotentialEval {
                    value: 0.0,
                    grad: DVector::zeros(n),
                    hess: DMatrix::zeros(n, n),
                };
                for (i, t) in terms.iter().enumerate() {
                    let (p, d1, d2) = t.eval3(x[i]);
                    out.value += p;
                    out.grad[i] = d1;
                    out.hess[(i, i)] = d2;
                }
                Ok(out)
            }
            Self::Custom(c) => {
                let out = (c.f)(x)?;
                check_dim(n, out.grad.len())?;
                Ok(out)
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.v_eval(x).map(|e| e.value)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |tag: &str, xs: &[f64]| {
            h.update(tag.as_bytes());
            for x in xs {
                h.update(x.to_bits().to_le_bytes());
            }
        };
        match self {
            Self::Quadratic { q, center, constant } => {
                put("quadratic", q.as_slice());
                put("center", center.as_slice());
                put("const", &[*constant]);
            }
            Self::SumComposed { f } => put("sum_composed", f.coeffs()),
            Self::Separable { terms } => {
                for t in terms {
                    put("separable", t.coeffs());
                }
            }
            Self::Custom(c) => put(&format!("custom:{}", c.label), &[]),
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One sampled hypothesis check. Positive margin means the condition holds
/// at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisEntry {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: DVector<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HypothesisReport {
    pub checked: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub const NOTE: &'static str = "certificate over the sampled points only";

    pub fn push(&mut self, entry: HypothesisEntry) {
        self.checked.push(entry);
    }

    pub fn all_pass(&self) -> bool {
        self.checked.iter().all(|e| e.pass)
    }
}

/// Tracks the worst margin with lowest-index tie-breaking.
pub(crate) struct Worst {
    margin: f64,
    witness: Option<DVector<f64>>,
    samples: usize,
}

impl Worst {
    pub(crate) fn new() -> Self {
        Self { margin: f64::INFINITY, witness: None, samples: 0 }
    }

    pub(crate) fn offer(&mut self, margin: f64, at: &DVector<f64>) {
        self.samples += 1;
        if margin < self.margin || self.witness.is_none() {
            self.margin = margin;
            self.witness = Some(at.clone());
        }
    }

    pub(crate) fn finish(self, name: &str, pass: impl Fn(f64) -> bool) -> Result<HypothesisEntry> {
        let witness = self
            .witness
            .ok_or_else(|| Error::InvalidArgument(format!("{name}: no sample points")))?;
        Ok(HypothesisEntry {
            name: name.to_string(),
            pass: pass(self.margin),
            worst_margin: self.margin,
            witness,
            samples: self.samples,
        })
    }
}

/// Eigenvalue tolerance relative to the Hessian's size.
fn eig_tol(h: &DMatrix<f64>) -> f64 {
    1e-10 * h.amax().max(1.0)
}

/// Minimum Hessian eigenvalue over the region samples; passes iff it is
/// positive beyond rounding.
pub fn check_strict_convexity(
    v: &PotentialField,
    p: &DelzantPolytope,
    region: &Region,
) -> Result<HypothesisEntry> {
    let mut worst = Worst::new();
    let mut tol: f64 = 0.0;
    for x in region.sample(p)? {
        let h = v.v_eval(&x)?.hess;
        tol = tol.max(eig_tol(&h));
        worst.offer(min_eigenvalue(&h), &x);
    }
    worst.finish("strict_convexity", |m| m > tol)
}

/// Convexity (positive semidefinite Hessian) over the region samples.
pub fn check_convexity(
    v: &PotentialField,
    p: &DelzantPolytope,
    region: &Region,
) -> Result<HypothesisEntry> {
    let mut worst = Worst::new();
    let mut tol: f64 = 0.0;
    for x in region.sample(p)? {
        let h = v.v_eval(&x)?.hess;
        tol = tol.max(eig_tol(&h));
        worst.offer(min_eigenvalue(&h), &x);
    }
    worst.finish("convexity", |m| m >= -tol)
}

/// The gradient sign hypotheses, each checked on the set it names.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignCondition {
    /// Simplex: `∂V/∂x_i < 0` for all `i` on `Σ x_i = ½`.
    SimplexMidSliceDecreasing,
    /// Centered box: `∂V/∂y_i < 0` for all `i` on `0 < y_i < c_i`.
    BoxMonotone,
    /// Centered box: `∂V/∂y_i < 0` on each hyperplane `y_i = 0`.
    BoxHyperplaneDecreasing,
    /// Hirzebruch: `∂V/∂x_2 > 0` on `x_2 = ½`.
    HirzebruchLineIncreasing { n: u32 },
    /// Hirzebruch: `∂V/∂x_i < 0` for all `i` on the critical curve.
    HirzebruchCurveDecreasing { n: u32 },
    /// Orthant: `∂V/∂r_i > 0` for all `i`.
    OrthantIncreasing,
}

impl SignCondition {
    pub const NAMES: [&'static str; 6] = [
        "simplex_mid_slice_decreasing",
        "box_monotone",
        "box_hyperplane_decreasing",
        "hirzebruch_line_increasing",
        "hirzebruch_curve_decreasing",
        "orthant_increasing",
    ];

    /// Parses a condition name; Hirzebruch conditions take the surface index.
    pub fn parse(name: &str, hirzebruch_n: u32) -> Result<Self> {
        Ok(match name {
            "simplex_mid_slice_decreasing" => Self::SimplexMidSliceDecreasing,
            "box_monotone" => Self::BoxMonotone,
            "box_hyperplane_decreasing" => Self::BoxHyperplaneDecreasing,
            "hirzebruch_line_increasing" => Self::HirzebruchLineIncreasing { n: hirzebruch_n },
            "hirzebruch_curve_decreasing" => Self::HirzebruchCurveDecreasing { n: hirzebruch_n },
            "orthant_increasing" => Self::OrthantIncreasing,
            other => return Err(Error::UnknownCondition(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SimplexMidSliceDecreasing => Self::NAMES[0],
            Self::BoxMonotone => Self::NAMES[1],
            Self::BoxHyperplaneDecreasing => Self::NAMES[2],
            Self::HirzebruchLineIncreasing { .. } => Self::NAMES[3],
            Self::HirzebruchCurveDecreasing { .. } => Self::NAMES[4],
            Self::OrthantIncreasing => Self::NAMES[5],
        }
    }
}

/// Samples the set named by `condition` and reports the worst sign margin.
/// `resolution` is the number of samples per free axis.
pub fn check_sign_conditions(
    v: &PotentialField,
    condition: SignCondition,
    p: &DelzantPolytope,
    resolution: usize,
) -> Result<HypothesisEntry> {
    let mut worst = Worst::new();
    match condition {
        SignCondition::SimplexMidSliceDecreasing => {
            for x in region::simplex_slice(p.dim(), 0.5, resolution) {
                let g = v.v_eval(&x)?.grad;
                worst.offer(-g.max(), &x);
            }
        }
        SignCondition::BoxMonotone => {
            let c = region::box_half_widths(p)?;
            let lower = vec![0.0; c.len()];
            for x in region::grid_points(&lower, &c, &vec![resolution; c.len()], true) {
                let g = v.v_eval(&x)?.grad;
                worst.offer(-g.max(), &x);
            }
        }
        SignCondition::BoxHyperplaneDecreasing => {
            let c = region::box_half_widths(p)?;
            for (i, x) in region::box_coordinate_hyperplanes(&c, resolution) {
                let g = v.v_eval(&x)?.grad;
                worst.offer(-g[i], &x);
            }
        }
        SignCondition::HirzebruchLineIncreasing { n } => {
            for x in region::hirzebruch_mid_line(n, resolution) {
                let g = v.v_eval(&x)?.grad;
                worst.offer(g[1], &x);
            }
        }
        SignCondition::HirzebruchCurveDecreasing { n } => {
            for x in region::hirzebruch_critical_curve(n, resolution)? {
                let g = v.v_eval(&x)?.grad;
                worst.offer(-g.max(), &x);
            }
        }
        SignCondition::OrthantIncreasing => {
            for x in Region::full_interior(resolution).sample(p)? {
                let g = v.v_eval(&x)?.grad;
                worst.offer(g.min(), &x);
            }
        }
    }
    worst.finish(condition.name(), |m| m > 0.0)
}

/// `max |V(y) − V(σ∘y)|` over all sign patterns `σ` and grid points of a
/// centered box; passes iff within `1e-12·(1 + |V|)`. The reported margin is
/// `−max deviation`, so zero is the best possible value.
pub fn check_evenness(v: &PotentialField, p: &DelzantPolytope, resolution: usize) -> Result<HypothesisEntry> {
    let c = region::box_half_widths(p)?;
    let n = c.len();
    let lower: Vec<f64> = c.iter().map(|ci| -ci).collect();
    let mut worst = Worst::new();
    let mut tol: f64 = 0.0;
    for y in region::grid_points(&lower, &c, &vec![resolution; n], true) {
        let base = v.value(&y)?;
        tol = tol.max(1e-12 * (1.0 + base.abs()));
        let mut dev: f64 = 0.0;
        for mask in 1u32..(1 << n) {
            let flipped = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -y[i] } else { y[i] });
            dev = dev.max((v.value(&flipped)? - base).abs());
        }
        worst.offer(-dev, &y);
    }
    worst.finish("evenness", |m| m >= -tol)
}

/// Heuristic properness check on an orthant: along `rays` directions in the
/// positive cone, the value must increase between radius `radius` and
/// `2·radius`, `4·radius`. Margin is the smallest increase.
pub fn check_properness(
    v: &PotentialField,
    p: &DelzantPolytope,
    radius: f64,
    resolution: usize,
) -> Result<HypothesisEntry> {
    if !p.is_orthant() {
        return Err(Error::InvalidArgument("properness check needs an orthant".into()));
    }
    let mut worst = Worst::new();
    for dir in region::simplex_slice(p.dim(), 1.0, resolution) {
        let dir = dir.normalize();
        let mut prev = v.value(&(&dir * radius))?;
        for k in 1..=2 {
            let at = &dir * (radius * f64::from(1 << k));
            let val = v.value(&at)?;
            worst.offer(val - prev, &at);
            prev = val;
        }
    }
    worst.finish("properness", |m| m > 0.0)
}
