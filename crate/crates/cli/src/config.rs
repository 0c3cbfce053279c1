//! JSON run configuration and its translation into library objects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use toric_legendre::polytope::DelzantPolytope;
use toric_legendre::potential::{Polynomial, PotentialField};
use toric_legendre::region::{AlphaBox, NamedRegion, Region, DEFAULT_RESOLUTION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<PolytopeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_box: Option<AlphaBoxSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeSpec {
    Builtin(Builtin),
    Explicit { normals: Vec<Vec<i64>>, offsets: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", content = "params", rename_all = "lowercase", deny_unknown_fields)]
pub enum Builtin {
    Simplex { n: usize },
    Box { c: Vec<f64> },
    Hirzebruch { n: u32 },
    Orthant { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `½(x − c)ᵀQ(x − c) + const`.
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        center: Vec<f64>,
        #[serde(rename = "const", default)]
        constant: f64,
    },
    Isotropic { center: Vec<f64> },
    Zero,
    /// `f(Σx)` with `f` given by ascending coefficients.
    SumComposed { coeffs: Vec<f64> },
    /// `Σ p_i(x_i)`, one coefficient list per coordinate.
    Separable { terms: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaBoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    FullInterior {
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    /// `simplex_upper`, `hirzebruch` or `positive_coordinates`.
    Predicate {
        name: String,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// `w-eval`: explicit evaluation points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PointSpec>>,
    /// `w-eval`: number of seeded random points when `points` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `forward`: re-solve from perturbed starts and flag disagreement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<bool>,
    /// `invert`: forward CSV to differentiate instead of the exact oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    /// `invert`: fixes the additive constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorSpec>,
    /// `invert`: first Newton start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// `certify`: which check to run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    /// `certify`: boundary piece or sign condition name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// `certify`: samples per free axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// `certify near_vertex`: vertex index in enumeration order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    /// `certify properness`: inner radius of the radial test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// `spectral-check`: `V(s)` by ascending coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbars: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npts: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub alpha_index: usize,
    pub value: f64,
}

pub type ConfigResult<T> = std::result::Result<T, String>;

impl RunConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn polytope(&self) -> ConfigResult<DelzantPolytope> {
        let spec = self.polytope.as_ref().ok_or("config needs a \"polytope\"")?;
        let p = match spec {
            PolytopeSpec::Builtin(Builtin::Simplex { n }) => DelzantPolytope::simplex(*n),
            PolytopeSpec::Builtin(Builtin::Box { c }) => DelzantPolytope::centered_box(c),
            PolytopeSpec::Builtin(Builtin::Hirzebruch { n }) => DelzantPolytope::hirzebruch(*n),
            PolytopeSpec::Builtin(Builtin::Orthant { n }) => DelzantPolytope::orthant(*n),
            PolytopeSpec::Explicit { normals, offsets } => DelzantPolytope::new(normals.clone(), offsets.clone()),
        };
        p.map_err(|e| format!("polytope: {e}"))
    }

    /// Surface index for Hirzebruch-specific names; 0 otherwise.
    pub fn hirzebruch_n(&self) -> u32 {
        match self.polytope {
            Some(PolytopeSpec::Builtin(Builtin::Hirzebruch { n })) => n,
            _ => 0,
        }
    }

    pub fn potential(&self, dim: usize) -> ConfigResult<PotentialField> {
        let spec = self.potential.as_ref().ok_or("config needs a \"potential\"")?;
        let poly = |c: &[f64]| Polynomial::new(c.to_vec()).map_err(|e| format!("potential: {e}"));
        let v = match spec {
            PotentialSpec::Quadratic { q, center, constant } => {
                if q.iter().any(|row| row.len() != center.len()) || q.len() != center.len() {
                    return Err("potential: Q must be square and match the center".into());
                }
                let n = center.len();
                let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
                PotentialField::quadratic(m, DVector::from_vec(center.clone()), *constant)
                    .map_err(|e| format!("potential: {e}"))?
            }
            PotentialSpec::Isotropic { center } => PotentialField::isotropic(center),
            PotentialSpec::Zero => PotentialField::zero(dim),
            PotentialSpec::SumComposed { coeffs } => PotentialField::SumComposed { f: poly(coeffs)? },
            PotentialSpec::Separable { terms } => PotentialField::Separable {
                terms: terms.iter().map(|t| poly(t)).collect::<ConfigResult<_>>()?,
            },
        };
        v.check_dim(dim).map_err(|e| format!("potential: {e}"))?;
        Ok(v)
    }

    pub fn alpha_box(&self, dim: usize) -> ConfigResult<AlphaBox> {
        let spec = self.alpha_box.as_ref().ok_or("config needs an \"alpha_box\"")?;
        let b = AlphaBox::new(spec.lower.clone(), spec.upper.clone(), spec.resolution.clone())
            .map_err(|e| format!("alpha_box: {e}"))?;
        if b.dim() != dim {
            return Err(format!("alpha_box has dimension {}, polytope has {dim}", b.dim()));
        }
        Ok(b)
    }

    pub fn region(&self) -> ConfigResult<Option<Region>> {
        let Some(spec) = &self.region else { return Ok(None) };
        let r = match spec {
            RegionSpec::FullInterior { resolution } => Region::full_interior(*resolution),
            RegionSpec::Box { lower, upper, resolution } => {
                Region::boxed(lower.clone(), upper.clone(), *resolution).map_err(|e| format!("region: {e}"))?
            }
            RegionSpec::Predicate { name, resolution } => Region::predicate(
                NamedRegion::parse(name, self.hirzebruch_n()).map_err(|e| format!("region: {e}"))?,
                *resolution,
            ),
        };
        Ok(Some(r))
    }
}
