//! Delzant polytopes given by facet inequalities `l_i(x) = <ℓ_i, x> + l_i⁰ > 0`.
//!
//! Normals are stored as exact integers so the smoothness test (unimodular
//! normals at each vertex) is decided by integer determinants. Offsets are
//! reals.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{int_cross, int_det};
use crate::newton::{self, Objective, Settings, Status};

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct DelzantPolytope {
    dim: usize,
    normals: Vec<Vec<i64>>,
    offsets: Vec<f64>,
    bounded: bool,
    interior_point: DVector<f64>,
    center: Option<DVector<f64>>,
}

/// A vertex together with the facets that vanish there.
#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub point: DVector<f64>,
    pub active_facets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelzantFailure {
    Unbounded,
    NotSimple { vertex: Vec<f64>, active: Vec<usize> },
    NotSmooth { vertex: Vec<f64>, active: Vec<usize>, det: i128 },
}

impl std::fmt::Display for DelzantFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DelzantFailure::Unbounded => write!(f, "polytope is unbounded; vertex test refused"),
            DelzantFailure::NotSimple { vertex, active } => {
                write!(f, "vertex {vertex:?} has {} active facets {active:?}", active.len())
            }
            DelzantFailure::NotSmooth { vertex, active, det } => {
                write!(f, "vertex {vertex:?}: normals of facets {active:?} have determinant {det}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelzantReport {
    pub simple: bool,
    pub smooth: bool,
    pub failures: Vec<DelzantFailure>,
}

impl DelzantReport {
    pub fn is_delzant(&self) -> bool {
        self.simple && self.smooth && self.failures.is_empty()
    }
}

fn active_tolerance(offset: f64) -> f64 {
    1e-12 * (1.0 + offset.abs())
}

impl DelzantPolytope {
    /// Builds a polytope from a facet system, checking primitivity of the
    /// normals, that they span ℝⁿ, and that the interior is nonempty.
    pub fn new(normals: Vec<Vec<i64>>, offsets: Vec<f64>) -> Result<Self> {
        let d = normals.len();
        if d == 0 {
            return Err(Error::InvalidPolytope("no facets".into()));
        }
        let dim = normals[0].len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidPolytope(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        check_dim(d, offsets.len())?;
        for (i, row) in normals.iter().enumerate() {
            check_dim(dim, row.len())?;
            let g = row.iter().fold(0i64, |acc, &v| acc.gcd(&v));
            if g != 1 {
                return Err(Error::InvalidPolytope(format!(
                    "normal {i} = {row:?} is not primitive (gcd {g})"
                )));
            }
        }
        if offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidPolytope("non-finite offset".into()));
        }
        let mut p = Self {
            dim,
            normals,
            offsets,
            bounded: false,
            interior_point: DVector::zeros(dim),
            center: None,
        };
        let full_rank = (0..d)
            .combinations(dim)
            .any(|s| p.subset_det(&s) != 0);
        if !full_rank {
            return Err(Error::InvalidPolytope("facet normals do not span the space".into()));
        }
        let rays = p.extreme_rays();
        p.bounded = rays.is_empty();
        let vertices = p.vertices_unchecked();
        if vertices.is_empty() {
            return Err(Error::InvalidPolytope("empty interior".into()));
        }
        // mean(vertices) + Σ rays lies in the relative interior of the polyhedron.
        let mut interior = DVector::zeros(dim);
        for v in &vertices {
            interior += &v.point;
        }
        interior /= vertices.len() as f64;
        for r in &rays {
            interior += r;
        }
        if !p.contains_interior(&interior) {
            return Err(Error::InvalidPolytope("empty interior".into()));
        }
        p.interior_point = interior;
        if p.bounded {
            p.center = Some(p.compute_analytic_center()?);
        }
        Ok(p)
    }

    /// The n-simplex `x_i > 0, 1 - Σ x_i > 0` (moment polytope of CPⁿ).
    pub fn simplex(n: usize) -> Result<Self> {
        let mut normals: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
        normals.push(vec![-1; n]);
        let mut offsets = vec![0.0; n];
        offsets.push(1.0);
        Self::new(normals, offsets)
    }

    /// Centered box `(-c_1, c_1) × … × (-c_n, c_n)` (products of CP¹).
    pub fn centered_box(c: &[f64]) -> Result<Self> {
        if c.iter().any(|&ci| !(ci > 0.0)) {
            return Err(Error::InvalidArgument("box half-widths must be positive".into()));
        }
        let n = c.len();
        let mut normals = Vec::with_capacity(2 * n);
        let mut offsets = Vec::with_capacity(2 * n);
        for (i, &ci) in c.iter().enumerate() {
            let e: Vec<i64> = (0..n).map(|j| i64::from(i == j)).collect();
            normals.push(e.clone());
            offsets.push(ci);
            normals.push(e.iter().map(|v| -v).collect());
            offsets.push(ci);
        }
        Self::new(normals, offsets)
    }

    /// Hirzebruch polytope `x_1 > 0, x_2 > 0, 1 - x_2 > 0, n + 1 - x_1 - n x_2 > 0`.
    pub fn hirzebruch(n: u32) -> Result<Self> {
        let n = i64::from(n);
        Self::new(
            vec![vec![1, 0], vec![0, 1], vec![0, -1], vec![-1, -n]],
            vec![0.0, 0.0, 1.0, (n + 1) as f64],
        )
    }

    /// Positive orthant `x_i > 0` (the ℝ²ⁿ example).
    pub fn orthant(n: usize) -> Result<Self> {
        let normals = (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
        Self::new(normals, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facet_count(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec<i64>] {
        &self.normals
    }

    pub fn normal(&self, i: usize) -> &[i64] {
        &self.normals[i]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    /// A strictly interior point fixed at construction.
    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior_point
    }

    /// Whether every facet is a coordinate hyperplane `x_i = 0`.
    pub fn is_orthant(&self) -> bool {
        self.offsets.iter().all(|&o| o == 0.0)
            && self.normals.iter().all(|r| r.iter().filter(|&&v| v != 0).count() == 1 && r.iter().sum::<i64>() == 1)
    }

    /// `(l_1(x), …, l_d(x))`.
    pub fn facet_values(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.facet_values_unchecked(x))
    }

    pub(crate) fn facet_values_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.normals.len(),
            self.normals
                .iter()
                .zip(&self.offsets)
                .map(|(row, &off)| self.pair(row, x) + off),
        )
    }

    /// `<ℓ, v>` for an integer normal and a real vector.
    pub(crate) fn pair(&self, row: &[i64], v: &DVector<f64>) -> f64 {
        row.iter().zip(v.iter()).map(|(&a, &b)| a as f64 * b).sum()
    }

    pub fn contains_interior(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim && self.facet_values_unchecked(x).iter().all(|&v| v > 0.0)
    }

    /// Errors with the first violated facet when `x` is not interior.
    pub fn require_interior(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim, x.len())?;
        let l = self.facet_values_unchecked(x);
        match l.iter().position(|&v| !(v > 0.0)) {
            None => Ok(()),
            Some(facet) => Err(Error::OutsideDomain { facet, value: l[facet] }),
        }
    }

    pub fn min_facet_value(&self, x: &DVector<f64>) -> f64 {
        self.facet_values_unchecked(x).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `t` with `l_i(x + t d) >= 0` for all facets (infinite when no
    /// facet decreases along `d`).
    pub fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let l = self.facet_values_unchecked(x);
        self.normals
            .iter()
            .zip(l.iter())
            .filter_map(|(row, &li)| {
                let rate = self.pair(row, d);
                (rate < 0.0).then(|| li / -rate)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Vertices of a bounded polytope.
    pub fn enumerate_vertices(&self) -> Result<Vec<Vertex>> {
        if !self.bounded {
            return Err(Error::Unbounded);
        }
        Ok(self.vertices_unchecked())
    }

    /// Simplicity and smoothness at every vertex.
    pub fn verify_delzant(&self) -> DelzantReport {
        if !self.bounded {
            return DelzantReport {
                simple: false,
                smooth: false,
                failures: vec![DelzantFailure::Unbounded],
            };
        }
        let mut report = DelzantReport { simple: true, smooth: true, failures: Vec::new() };
        for v in self.vertices_unchecked() {
            let point: Vec<f64> = v.point.iter().copied().collect();
            if v.active_facets.len() != self.dim {
                report.simple = false;
                report.smooth = false;
                report.failures.push(DelzantFailure::NotSimple {
                    vertex: point,
                    active: v.active_facets,
                });
                continue;
            }
            let det = self.subset_det(&v.active_facets);
            if det.abs() != 1 {
                report.smooth = false;
                report.failures.push(DelzantFailure::NotSmooth {
                    vertex: point,
                    active: v.active_facets,
                    det,
                });
            }
        }
        report
    }

    /// Maximizer of `Σ log l_i(x)` over a bounded polytope.
    pub fn analytic_center(&self) -> Result<DVector<f64>> {
        self.center.clone().ok_or(Error::Unbounded)
    }

    /// SHA-256 over the facet system, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (row, off) in self.normals.iter().zip(&self.offsets) {
            for v in row {
                h.update(v.to_le_bytes());
            }
            h.update(off.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn subset_det(&self, subset: &[usize]) -> i128 {
        let rows: Vec<&[i64]> = subset.iter().map(|&i| self.normals[i].as_slice()).collect();
        int_det(&rows)
    }

    /// Extreme rays of the recession cone `{v : <ℓ_i, v> >= 0}`; empty iff bounded.
    fn extreme_rays(&self) -> Vec<DVector<f64>> {
        let n = self.dim;
        let d = self.normals.len();
        let mut candidates: Vec<Vec<i128>> = Vec::new();
        if n == 1 {
            candidates.push(vec![1]);
        } else {
            for subset in (0..d).combinations(n - 1) {
                let rows: Vec<&[i64]> = subset.iter().map(|&i| self.normals[i].as_slice()).collect();
                let v = int_cross(&rows, n);
                if v.iter().any(|&c| c != 0) {
                    candidates.push(v);
                }
            }
        }
        let mut rays: Vec<Vec<i128>> = Vec::new();
        for v in candidates {
            for sign in [1i128, -1] {
                let w: Vec<i128> = v.iter().map(|c| c * sign).collect();
                let ok = self
                    .normals
                    .iter()
                    .all(|row| row.iter().zip(&w).map(|(&a, &b)| a as i128 * b).sum::<i128>() >= 0);
                if ok {
                    let g = w.iter().fold(0i128, |acc, &c| acc.gcd(&c));
                    let w: Vec<i128> = w.iter().map(|c| c / g).collect();
                    if !rays.contains(&w) {
                        rays.push(w);
                    }
                }
            }
        }
        rays.into_iter()
            .map(|w| {
                let v = DVector::from_iterator(n, w.iter().map(|&c| c as f64));
                let norm = v.norm();
                v / norm
            })
            .collect()
    }

    /// All basic feasible points, deduplicated, with every facet active there.
    fn vertices_unchecked(&self) -> Vec<Vertex> {
        let n = self.dim;
        let d = self.normals.len();
        let mut out: Vec<Vertex> = Vec::new();
        for subset in (0..d).combinations(n) {
            if self.subset_det(&subset) == 0 {
                continue;
            }
            let a = DMatrix::from_fn(n, n, |r, c| self.normals[subset[r]][c] as f64);
            let b = DVector::from_iterator(n, subset.iter().map(|&i| -self.offsets[i]));
            let Some(point) = a.lu().solve(&b) else { continue };
            let l = self.facet_values_unchecked(&point);
            let feasible = l
                .iter()
                .zip(&self.offsets)
                .all(|(&v, &off)| v >= -active_tolerance(off));
            if !feasible {
                continue;
            }
            let scale = 1.0 + point.amax();
            if out.iter().any(|v| (&v.point - &point).amax() <= 1e-9 * scale) {
                continue;
            }
            let active_facets = l
                .iter()
                .zip(&self.offsets)
                .enumerate()
                .filter(|(_, (&v, &off))| v.abs() <= active_tolerance(off))
                .map(|(i, _)| i)
                .collect();
            out.push(Vertex { point, active_facets });
        }
        out
    }

    fn compute_analytic_center(&self) -> Result<DVector<f64>> {
        let settings = Settings {
            max_iter: 100,
            grad_tol: 1e-10,
            relative: false,
            ..Settings::default()
        };
        let out = newton::minimize(&LogBarrier(self), Some(self), self.interior_point.clone(), &settings)?;
        if out.status != Status::Converged {
            return Err(Error::NonConvergence { what: "analytic center", iterations: out.iterations });
        }
        Ok(out.x)
    }
}

/// `-Σ log l_i(x)`.
struct LogBarrier<'a>(&'a DelzantPolytope);

impl Objective for LogBarrier<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = self.0;
        p.require_interior(x)?;
        let l = p.facet_values_unchecked(x);
        let n = p.dim;
        let mut f = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for (row, &li) in p.normals.iter().zip(l.iter()) {
            f -= li.ln();
            for k in 0..n {
                g[k] -= row[k] as f64 / li;
                for m in 0..n {
                    h[(k, m)] += (row[k] * row[m]) as f64 / (li * li);
                }
            }
        }
        Ok((f, g, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn assert_close(a: &DVector<f64>, b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn facet_values_examples() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        assert_close(&cp2.facet_values(&v(&[0.0, 0.0])).unwrap(), &[0.0, 0.0, 1.0], 0.0);
        assert_close(&cp2.facet_values(&v(&[0.4, 0.4])).unwrap(), &[0.4, 0.4, 0.2], 1e-15);
        let h1 = DelzantPolytope::hirzebruch(1).unwrap();
        assert_close(&h1.facet_values(&v(&[0.5, 0.25])).unwrap(), &[0.5, 0.25, 0.75, 1.25], 1e-15);
        assert!(matches!(
            cp2.facet_values(&v(&[0.1])),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn interior_membership() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        assert!(cp2.contains_interior(&v(&[0.4, 0.4])));
        assert!(!cp2.contains_interior(&v(&[0.0, 0.0])));
        assert!(!cp2.contains_interior(&v(&[0.6, 0.6])));
        let err = cp2.require_interior(&v(&[0.6, 0.6])).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { facet: 2, .. }));
    }

    #[test]
    fn constructors_produce_stated_facets() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        assert_eq!(cp2.normals(), &[vec![1, 0], vec![0, 1], vec![-1, -1]]);
        assert_eq!(cp2.offsets(), &[0.0, 0.0, 1.0]);
        let h1 = DelzantPolytope::hirzebruch(1).unwrap();
        assert_eq!(h1.normals(), &[vec![1, 0], vec![0, 1], vec![0, -1], vec![-1, -1]]);
        assert_eq!(h1.offsets(), &[0.0, 0.0, 1.0, 2.0]);
        let o1 = DelzantPolytope::orthant(1).unwrap();
        assert_eq!(o1.normals(), &[vec![1]]);
        assert_eq!(o1.offsets(), &[0.0]);
        assert!(!o1.is_bounded());
        assert!(o1.is_orthant());
        assert!(cp2.is_bounded());
    }

    #[test]
    fn rejects_bad_facet_systems() {
        assert!(matches!(
            DelzantPolytope::new(vec![vec![2, 0], vec![0, 1]], vec![0.0, 0.0]),
            Err(Error::InvalidPolytope(_))
        ));
        // x > 0 and -x > 1 cannot both hold.
        assert!(DelzantPolytope::new(vec![vec![1], vec![-1]], vec![0.0, -1.0]).is_err());
        // Flat: x > 0 and -x > 0.
        assert!(DelzantPolytope::new(vec![vec![1], vec![-1]], vec![0.0, 0.0]).is_err());
        // Normals only span a line.
        assert!(DelzantPolytope::new(vec![vec![1, 0], vec![-1, 0]], vec![0.0, 1.0]).is_err());
    }

    fn sorted_points(vs: &[Vertex]) -> Vec<Vec<f64>> {
        let mut pts: Vec<Vec<f64>> = vs.iter().map(|v| v.point.iter().copied().collect()).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts
    }

    #[test]
    fn vertex_enumeration() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        assert_eq!(
            sorted_points(&cp2.enumerate_vertices().unwrap()),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]
        );
        let h1 = DelzantPolytope::hirzebruch(1).unwrap();
        assert_eq!(
            sorted_points(&h1.enumerate_vertices().unwrap()),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 0.0]]
        );
        let b = DelzantPolytope::centered_box(&[1.0]).unwrap();
        assert_eq!(sorted_points(&b.enumerate_vertices().unwrap()), vec![vec![-1.0], vec![1.0]]);
        assert_eq!(DelzantPolytope::orthant(2).unwrap().enumerate_vertices(), Err(Error::Unbounded));
    }

    #[test]
    fn delzant_verification() {
        for n in 1..=4 {
            assert!(DelzantPolytope::simplex(n).unwrap().verify_delzant().is_delzant());
        }
        for n in 0..=3 {
            assert!(DelzantPolytope::hirzebruch(n).unwrap().verify_delzant().is_delzant());
        }
        assert!(DelzantPolytope::centered_box(&[1.0, 2.0, 0.5]).unwrap().verify_delzant().is_delzant());
        let skew = DelzantPolytope::new(
            vec![vec![2, 1], vec![0, 1], vec![-1, 0], vec![0, -1]],
            vec![0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let report = skew.verify_delzant();
        assert!(report.simple);
        assert!(!report.smooth);
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, DelzantFailure::NotSmooth { det, .. } if det.abs() == 2)));
        let orth = DelzantPolytope::orthant(2).unwrap().verify_delzant();
        assert_eq!(orth.failures, vec![DelzantFailure::Unbounded]);
    }

    #[test]
    fn non_simple_vertex_is_reported() {
        // Square pyramid: four facets meet at the apex.
        let p = DelzantPolytope::new(
            vec![vec![0, 0, 1], vec![1, 0, -1], vec![-1, 0, -1], vec![0, 1, -1], vec![0, -1, -1]],
            vec![0.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let report = p.verify_delzant();
        assert!(!report.simple);
        assert!(report.failures.iter().any(|f| matches!(f, DelzantFailure::NotSimple { active, .. } if active.len() == 4)));
    }

    #[test]
    fn analytic_centers() {
        let c1 = DelzantPolytope::simplex(1).unwrap().analytic_center().unwrap();
        assert_close(&c1, &[0.5], 1e-12);
        let c2 = DelzantPolytope::simplex(2).unwrap().analytic_center().unwrap();
        assert_close(&c2, &[1.0 / 3.0, 1.0 / 3.0], 1e-12);
        let cb = DelzantPolytope::centered_box(&[1.0]).unwrap().analytic_center().unwrap();
        assert_close(&cb, &[0.0], 1e-12);
        assert_eq!(DelzantPolytope::orthant(1).unwrap().analytic_center(), Err(Error::Unbounded));
    }

    #[test]
    fn analytic_center_is_stationary() {
        let p = DelzantPolytope::hirzebruch(2).unwrap();
        let c = p.analytic_center().unwrap();
        assert!(p.contains_interior(&c));
        let (_, g, _) = LogBarrier(&p).eval(&c).unwrap();
        assert!(g.norm() <= 1e-10);
    }

    #[test]
    fn fingerprints_distinguish_polytopes() {
        let a = DelzantPolytope::hirzebruch(1).unwrap().fingerprint();
        let b = DelzantPolytope::hirzebruch(2).unwrap().fingerprint();
        assert_eq!(a.len(), 64);
        assert_ne!(a, b);
        assert_eq!(a, DelzantPolytope::hirzebruch(1).unwrap().fingerprint());
    }

    #[test]
    fn max_step_reaches_boundary() {
        let cp2 = DelzantPolytope::simplex(2).unwrap();
        let t = cp2.max_step(&v(&[0.25, 0.25]), &v(&[1.0, 1.0]));
        assert!((t - 0.25).abs() < 1e-15);
        let o = DelzantPolytope::orthant(1).unwrap();
        assert!(o.max_step(&v(&[1.0]), &v(&[1.0])).is_infinite());
    }
}
