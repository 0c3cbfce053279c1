//! Sampled regions in polytope interiors and axis-aligned weight grids.
//!
//! Grids are row-major: the last axis varies fastest.

use nalgebra::DVector;

use crate::certify::{hirzebruch_region_contains, hirzebruch_xstar};
use crate::error::{check_dim, Error, Result};
use crate::polytope::DelzantPolytope;

pub const DEFAULT_RESOLUTION: usize = 32;

/// Named subsets of a polytope interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NamedRegion {
    /// `Σ x_i > ½` inside the simplex, where the mixed Hessian stays regular.
    SimplexUpper,
    /// The part of a Hirzebruch polytope beyond the critical curve with `x_2 < ½`.
    Hirzebruch { n: u32 },
    /// `y_i > 0` for all `i`.
    PositiveCoordinates,
}

impl NamedRegion {
    pub fn parse(name: &str, hirzebruch_n: u32) -> Result<Self> {
        Ok(match name {
            "simplex_upper" => Self::SimplexUpper,
            "hirzebruch" => Self::Hirzebruch { n: hirzebruch_n },
            "positive_coordinates" => Self::PositiveCoordinates,
            other => return Err(Error::InvalidArgument(format!("unknown region predicate {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SimplexUpper => "simplex_upper",
            Self::Hirzebruch { .. } => "hirzebruch",
            Self::PositiveCoordinates => "positive_coordinates",
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match *self {
            Self::SimplexUpper => x.sum() > 0.5,
            Self::Hirzebruch { n } => x.len() == 2 && hirzebruch_region_contains(n, x[0], x[1]),
            Self::PositiveCoordinates => x.iter().all(|&v| v > 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegionKind {
    FullInterior,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Predicate(NamedRegion),
}

/// A subset of the polytope interior with its sampling grid. A single
/// resolution entry applies to every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub kind: RegionKind,
    pub resolution: Vec<usize>,
}

impl Region {
    pub fn full_interior(resolution: usize) -> Self {
        Self { kind: RegionKind::FullInterior, resolution: vec![resolution] }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("region box needs lower <= upper".into()));
        }
        Ok(Self { kind: RegionKind::Box { lower, upper }, resolution: vec![resolution] })
    }

    pub fn predicate(name: NamedRegion, resolution: usize) -> Self {
        Self { kind: RegionKind::Predicate(name), resolution: vec![resolution] }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            RegionKind::FullInterior => "full_interior".into(),
            RegionKind::Box { lower, upper } => format!("box {lower:?}..{upper:?}"),
            RegionKind::Predicate(p) => p.name().into(),
        }
    }

    pub fn axis_resolution(&self, n: usize) -> Result<Vec<usize>> {
        match self.resolution.len() {
            1 => Ok(vec![self.resolution[0]; n]),
            k if k == n => Ok(self.resolution.clone()),
            k => Err(Error::DimensionMismatch { expected: n, got: k }),
        }
    }

    pub fn contains(&self, p: &DelzantPolytope, x: &DVector<f64>) -> bool {
        if x.len() != p.dim() || !p.contains_interior(x) {
            return false;
        }
        match &self.kind {
            RegionKind::FullInterior => true,
            RegionKind::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| *a <= *v && *v <= *b)
            }
            RegionKind::Predicate(named) => named.contains(x),
        }
    }

    /// Grid points of the region, all strictly inside the polytope. Boxes use
    /// node grids including their endpoints; the other kinds use cell-centered
    /// grids over the polytope's bounding box.
    pub fn sample(&self, p: &DelzantPolytope) -> Result<Vec<DVector<f64>>> {
        let res = self.axis_resolution(p.dim())?;
        let points = match &self.kind {
            RegionKind::Box { lower, upper } => {
                check_dim(p.dim(), lower.len())?;
                grid_points(lower, upper, &res, false)
            }
            _ => {
                let (lo, hi) = bounding_box(p)?;
                grid_points(&lo, &hi, &res, true)
            }
        };
        Ok(points.into_iter().filter(|x| self.contains(p, x)).collect())
    }
}

/// Coordinate-wise bounds of a bounded polytope.
pub fn bounding_box(p: &DelzantPolytope) -> Result<(Vec<f64>, Vec<f64>)> {
    let vertices = p.enumerate_vertices()?;
    let n = p.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for v in &vertices {
        for i in 0..n {
            lo[i] = lo[i].min(v.point[i]);
            hi[i] = hi[i].max(v.point[i]);
        }
    }
    Ok((lo, hi))
}

fn axis_points(lo: f64, hi: f64, k: usize, open: bool) -> Vec<f64> {
    if open {
        let h = (hi - lo) / k as f64;
        (0..k).map(|j| lo + (j as f64 + 0.5) * h).collect()
    } else if k <= 1 {
        vec![lo]
    } else {
        let h = (hi - lo) / (k - 1) as f64;
        (0..k).map(|j| if j + 1 == k { hi } else { lo + j as f64 * h }).collect()
    }
}

/// Tensor grid over `[lower, upper]`. With `open`, points are cell centers
/// and never touch the faces of the box.
pub fn grid_points(lower: &[f64], upper: &[f64], res: &[usize], open: bool) -> Vec<DVector<f64>> {
    let axes: Vec<Vec<f64>> = (0..lower.len())
        .map(|i| axis_points(lower[i], upper[i], res[i], open))
        .collect();
    tensor(&axes)
}

fn tensor(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let n = axes.len();
    if axes.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(DVector::from_fn(n, |i, _| axes[i][idx[i]]));
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}

/// Points `s·k/K` with `k` a composition of `K = resolution + n − 1` into
/// `n` positive parts: a lattice on the open slice `{x_i > 0, Σ x_i = s}`.
pub fn simplex_slice(n: usize, s: f64, resolution: usize) -> Vec<DVector<f64>> {
    let big_k = resolution + n - 1;
    let mut out = Vec::new();
    let mut parts = vec![0usize; n];
    compositions(big_k, n, 0, &mut parts, &mut |k| {
        out.push(DVector::from_fn(n, |i, _| s * k[i] as f64 / big_k as f64));
    });
    out
}

fn compositions(rest: usize, n: usize, i: usize, parts: &mut [usize], emit: &mut impl FnMut(&[usize])) {
    if i + 1 == n {
        if rest >= 1 {
            parts[i] = rest;
            emit(parts);
        }
        return;
    }
    let slots_after = n - i - 1;
    for k in 1..=rest.saturating_sub(slots_after) {
        parts[i] = k;
        compositions(rest - k, n, i + 1, parts, emit);
    }
}

/// Half-widths `c` of a centered box `∏(−c_i, c_i)`.
pub fn box_half_widths(p: &DelzantPolytope) -> Result<Vec<f64>> {
    let n = p.dim();
    let not_box = || Error::InvalidArgument("polytope is not a centered box".into());
    if p.facet_count() != 2 * n {
        return Err(not_box());
    }
    let mut c = vec![f64::NAN; n];
    for (row, &off) in p.normals().iter().zip(p.offsets()) {
        let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0).collect();
        if nz.len() != 1 || row[nz[0]].abs() != 1 {
            return Err(not_box());
        }
        let i = nz[0];
        if c[i].is_nan() {
            c[i] = off;
        } else if (c[i] - off).abs() > 1e-12 * (1.0 + off.abs()) {
            return Err(not_box());
        }
    }
    let mut seen = vec![(false, false); n];
    for row in p.normals() {
        let i = row.iter().position(|&v| v != 0).ok_or_else(not_box)?;
        if row[i] > 0 {
            seen[i].0 = true;
        } else {
            seen[i].1 = true;
        }
    }
    if seen.iter().any(|&(a, b)| !(a && b)) {
        return Err(not_box());
    }
    Ok(c)
}

/// Samples of each hyperplane `y_i = 0` of a centered box, tagged with `i`.
pub fn box_coordinate_hyperplanes(c: &[f64], resolution: usize) -> Vec<(usize, DVector<f64>)> {
    let n = c.len();
    let mut out = Vec::new();
    for i in 0..n {
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|j| if j == i { vec![0.0] } else { axis_points(-c[j], c[j], resolution, true) })
            .collect();
        out.extend(tensor(&axes).into_iter().map(|x| (i, x)));
    }
    out
}

/// Open segment `x_2 = ½` of a Hirzebruch polytope.
pub fn hirzebruch_mid_line(n: u32, resolution: usize) -> Vec<DVector<f64>> {
    let top = 1.0 + f64::from(n) / 2.0;
    axis_points(0.0, top, resolution, true)
        .into_iter()
        .map(|x1| DVector::from_vec(vec![x1, 0.5]))
        .collect()
}

/// Points `(x_1^c(x_2), x_2)` of the critical curve for `x_2 ∈ (0, ½)`,
/// keeping those strictly inside the polytope.
pub fn hirzebruch_critical_curve(n: u32, resolution: usize) -> Result<Vec<DVector<f64>>> {
    let p = DelzantPolytope::hirzebruch(n)?;
    let mut out = Vec::new();
    for x2 in axis_points(0.0, 0.5, resolution, true) {
        let x1 = hirzebruch_curve_x1(n, x2)?;
        let x = DVector::from_vec(vec![x1, x2]);
        if x1 > 0.0 && p.contains_interior(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// `x_1` on the critical curve: `(n+1)/2 − (n/2)(x_2 + x_2*)`.
pub fn hirzebruch_curve_x1(n: u32, x2: f64) -> Result<f64> {
    let nf = f64::from(n);
    Ok((nf + 1.0) / 2.0 - nf / 2.0 * (x2 + hirzebruch_xstar(n, x2)?))
}

/// Node-centered weight grid `[lower, upper]` with `resolution[i]` nodes per
/// axis; a single node sits at `lower`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl AlphaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        check_dim(lower.len(), resolution.len())?;
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight bound".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| a > b) {
            return Err(Error::InvalidArgument("weight box needs lower <= upper".into()));
        }
        Ok(Self { lower, upper, resolution })
    }

    pub fn uniform(lower: f64, upper: f64, n: usize, resolution: usize) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n], vec![resolution; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node spacing along `axis` (zero for a single node).
    pub fn spacing(&self, axis: usize) -> f64 {
        let k = self.resolution[axis];
        if k <= 1 {
            0.0
        } else {
            (self.upper[axis] - self.lower[axis]) / (k - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        grid_points(&self.lower, &self.upper, &self.resolution, false)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = flat;
        for i in (0..self.dim()).rev() {
            idx[i] = rest % self.resolution[i];
            rest /= self.resolution[i];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.resolution).fold(0, |acc, (&i, &k)| acc * k + i)
    }
}
