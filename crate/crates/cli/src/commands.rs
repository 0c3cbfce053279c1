//! One function per subcommand. Each validates its whole configuration before
//! computing anything, so configuration errors never leave partial output.

use std::path::Path;

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use toric_legendre::certify::{
    boundary_inward_check, hirzebruch_critical_curve_check, mixed_det_at, mixed_det_scan, near_vertex_certificate,
    BoundaryPiece, CertificateReport, CurveCheck,
};
use toric_legendre::error::Error;
use toric_legendre::forward::{sample_g, ForwardOracle, GTable, MinResult, SampleOptions, TableSource};
use toric_legendre::kinetic::{w_eval, KineticForm};
use toric_legendre::legendre::{reconstruct_v, Anchor, ReconstructOptions, ReconstructionResult};
use toric_legendre::newton::Status;
use toric_legendre::polytope::DelzantPolytope;
use toric_legendre::potential::{
    check_convexity, check_evenness, check_properness, check_sign_conditions, check_strict_convexity,
    HypothesisEntry, HypothesisReport, Polynomial, SignCondition,
};
use toric_legendre::region::{AlphaBox, Region, DEFAULT_RESOLUTION};
use toric_legendre::spectral1d::{semiclassical_limit_check, RadialProblem, DEFAULT_POINTS};

use crate::config::{Builtin, PolytopeSpec, RunConfig};
use crate::output::{csv_document, Artifact, Exit};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Config(e)
    }
}

pub type Outcome = Result<Artifact, Failure>;

/// Wraps a library error raised while validating configuration.
fn cfg<T>(what: &str, r: toric_legendre::error::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(format!("{what}: {e}")))
}

fn vector(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn polytope_verify(c: &RunConfig, provenance: &str) -> Outcome {
    let p = c.polytope()?;
    let report = p.verify_delzant();
    let vertices: Vec<Value> = if p.is_bounded() {
        p.enumerate_vertices()?
            .iter()
            .map(|v| json!({"point": v.point.as_slice(), "active_facets": v.active_facets}))
            .collect()
    } else {
        Vec::new()
    };
    let center = if p.is_bounded() { Some(p.analytic_center()?.as_slice().to_vec()) } else { None };
    let pass = report.is_delzant();
    let body = json!({
        "provenance": provenance,
        "dim": p.dim(),
        "facets": p.facet_count(),
        "normals": (0..p.facet_count()).map(|i| p.normal(i).to_vec()).collect::<Vec<_>>(),
        "offsets": p.offsets(),
        "bounded": p.is_bounded(),
        "delzant": pass,
        "simple": report.simple,
        "smooth": report.smooth,
        "failures": report.failures.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "vertices": vertices,
        "analytic_center": center,
        "fingerprint": p.fingerprint(),
    });
    Ok(Artifact::json(body, if pass { Exit::Success } else { Exit::Certificate }))
}

/// Random interior point: convex combination of vertices, or positive
/// coordinates below 2 on an unbounded polytope.
fn random_interior(p: &DelzantPolytope, rng: &mut StdRng) -> toric_legendre::error::Result<DVector<f64>> {
    if !p.is_bounded() {
        loop {
            let x = DVector::from_fn(p.dim(), |_, _| rng.random_range(0.0..2.0));
            if p.contains_interior(&x) {
                return Ok(x);
            }
        }
    }
    let verts = p.enumerate_vertices()?;
    let w: Vec<f64> = verts.iter().map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    Ok(verts.iter().zip(&w).fold(DVector::zeros(p.dim()), |acc, (v, wi)| acc + &v.point * (wi / total)))
}

pub fn w_eval_cmd(c: &RunConfig, provenance: &str) -> Outcome {
    let p = c.polytope()?;
    let n = p.dim();
    let points: Vec<(DVector<f64>, DVector<f64>)> = match &c.options.points {
        Some(pts) => pts
            .iter()
            .map(|pt| {
                if pt.x.len() != n || pt.alpha.len() != n {
                    return Err(Failure::Config(format!("points must have dimension {n}")));
                }
                let x = vector(&pt.x);
                cfg("point", p.require_interior(&x))?;
                Ok((x, vector(&pt.alpha)))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let b = c.alpha_box(n)?;
            let mut rng = StdRng::seed_from_u64(c.seed);
            (0..c.options.samples.unwrap_or(16))
                .map(|_| {
                    let x = random_interior(&p, &mut rng)?;
                    let a = DVector::from_fn(n, |i, _| rng.random_range(b.lower[i]..=b.upper[i]));
                    Ok((x, a))
                })
                .collect::<Result<_, Failure>>()?
        }
    };
    let mut header = names("x", n);
    header.extend(names("alpha", n));
    header.push("w".into());
    header.extend(names("dw_dx", n));
    header.extend(names("dw_dalpha", n));
    header.push("mixed_det".into());
    let mut rows = Vec::with_capacity(points.len());
    for (x, a) in &points {
        let e = w_eval(&p, x, a)?;
        let mut row: Vec<f64> = x.iter().chain(a.iter()).copied().collect();
        row.push(e.value);
        row.extend(e.grad_x.iter());
        row.extend(e.grad_alpha.iter());
        row.push(mixed_det_at(&p, x, a)?);
        rows.push(row);
    }
    Ok(Artifact::csv(csv_document(provenance, &[], &header, &rows, &[]), Exit::Success))
}

fn forward_header(n: usize) -> Vec<String> {
    let mut h = names("alpha", n);
    h.push("g".into());
    h.extend(names("x", n));
    h.push("grad_norm".into());
    h.push("status".into());
    h
}

pub fn forward(c: &RunConfig, provenance: &str, threads: usize) -> Outcome {
    let p = c.polytope()?;
    let v = c.potential(p.dim())?;
    let b = c.alpha_box(p.dim())?;
    let opts = SampleOptions { threads, multistart: c.options.multistart.unwrap_or(false) };
    let table = sample_g(&p, &v, &b, &opts)?;
    let rows: Vec<Vec<f64>> = table
        .results
        .iter()
        .map(|r| {
            let mut row: Vec<f64> = r.alpha.iter().copied().collect();
            row.push(r.g_value);
            row.extend(r.x_star.iter());
            row.push(r.grad_norm);
            row
        })
        .collect();
    let status: Vec<&str> = table.results.iter().map(|r| r.status.as_str()).collect();
    let comments = [format!("partial={} non_unique={}", table.partial, table.non_unique)];
    let body = csv_document(provenance, &comments, &forward_header(p.dim()), &rows, &status);
    let exit = if table.partial {
        Exit::Solver
    } else if table.non_unique {
        Exit::Certificate
    } else {
        Exit::Success
    };
    Ok(Artifact::csv(body, exit))
}

/// Reads a forward CSV back into a table on `b`, checking the grid matches.
fn read_table(path: &Path, p: &DelzantPolytope, b: &AlphaBox) -> Result<GTable, Failure> {
    let bad = |m: String| Failure::Config(format!("table {}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let n = p.dim();
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected = forward_header(n);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(format!("expected columns {}", expected.join(","))));
    }
    let grid = b.points();
    let mut results = Vec::with_capacity(grid.len());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("row {k}: {e}")));
        let alpha = DVector::from_iterator(n, (0..n).map(num).collect::<Result<Vec<_>, _>>()?);
        let x_star = DVector::from_iterator(n, (n + 1..2 * n + 1).map(num).collect::<Result<Vec<_>, _>>()?);
        let status = Status::parse(&rec[2 * n + 2]).ok_or_else(|| bad(format!("row {k}: unknown status")))?;
        match grid.get(k) {
            Some(node) if (node - &alpha).amax() <= 1e-12 * (1.0 + node.amax()) => {}
            _ => return Err(bad(format!("row {k} is not node {k} of the alpha_box"))),
        }
        results.push(MinResult {
            alpha,
            x_star,
            g_value: num(n)?,
            grad_norm: num(2 * n + 1)?,
            hess_min_eig: f64::NAN,
            iterations: 0,
            status,
        });
    }
    if results.len() != grid.len() {
        return Err(bad(format!("{} rows for {} grid nodes", results.len(), grid.len())));
    }
    let partial = results.iter().any(|r| !r.converged());
    Ok(GTable {
        alpha_box: Some(b.clone()),
        grid,
        results,
        polytope_fingerprint: p.fingerprint(),
        potential_fingerprint: String::new(),
        partial,
        non_unique: false,
    })
}

pub fn invert(c: &RunConfig, provenance: &str, config_dir: &Path) -> Outcome {
    let p = c.polytope()?;
    let n = p.dim();
    let b = c.alpha_box(n)?;
    let region = c.region()?;
    let start = match &c.options.start {
        Some(s) if s.len() != n => return Err(Failure::Config(format!("start must have dimension {n}"))),
        Some(s) => Some(vector(s)),
        None => None,
    };
    let anchor = c.options.anchor.as_ref().map(|a| Anchor { alpha_index: a.alpha_index, value: a.value });
    let opts = ReconstructOptions { anchor, start, region };
    let gf = KineticForm::new(&p);
    let (result, mode) = match &c.options.table {
        Some(t) => {
            let table = read_table(&config_dir.join(t), &p, &b)?;
            let source = cfg("table", TableSource::new(&table))?;
            // Central differences need both neighbours on every axis.
            let alphas: Vec<DVector<f64>> = (0..b.len())
                .filter(|&k| b.multi_index(k).iter().zip(&b.resolution).all(|(&i, &r)| i > 0 && i + 1 < r))
                .map(|k| table.grid[k].clone())
                .collect();
            if alphas.is_empty() {
                return Err(Failure::Config("alpha_box has no interior nodes for table mode".into()));
            }
            (reconstruct_v(&gf, &source, &alphas, &opts)?, "table")
        }
        None => {
            let v = c.potential(n)?;
            let oracle = ForwardOracle::new(&gf, &v);
            (reconstruct_v(&gf, &oracle, &b.points(), &opts)?, "oracle")
        }
    };
    Ok(invert_artifact(provenance, n, mode, &result))
}

fn invert_artifact(provenance: &str, n: usize, mode: &str, r: &ReconstructionResult) -> Artifact {
    let mut header = names("alpha", n);
    header.extend(names("x", n));
    header.push("v_value".into());
    header.extend(names("v_grad", n));
    header.push("residual".into());
    let rows: Vec<Vec<f64>> = r
        .samples
        .iter()
        .map(|s| {
            let mut row: Vec<f64> = s.alpha.iter().chain(s.x_of_alpha.iter()).copied().collect();
            row.push(s.v_value);
            row.extend(s.v_grad.iter());
            row.push(s.residual);
            row
        })
        .collect();
    let constant = match r.anchor {
        Some(a) => format!("additive constant fixed by sample {} = {:e}", a.alpha_index, a.value),
        None => "additive constant not fixed".to_string(),
    };
    let outside = r.samples.iter().filter(|s| !s.in_region).count();
    let comments = [
        format!("mode={mode} failures={} outside_region={outside}", r.failures.len()),
        constant,
    ];
    for f in &r.failures {
        eprintln!("sample {} at alpha {:?}: {}", f.index, f.alpha.as_slice(), f.error);
    }
    let exit = if r.failures.is_empty() { Exit::Success } else { Exit::Solver };
    Artifact::csv(csv_document(provenance, &comments, &header, &rows, &[]), exit)
}

fn certificate_json(r: &CertificateReport, provenance: &str) -> Value {
    json!({
        "provenance": provenance,
        "condition": r.condition,
        "region": r.region,
        "weight_set": r.weight_set,
        "x_grid": r.x_grid,
        "alpha_grid": r.alpha_grid,
        "pass": r.pass,
        "worst_margin": r.worst_margin,
        "witness": {"x": r.witness.x.as_slice(), "alpha": r.witness.alpha.as_slice()},
        "samples": r.samples,
        "sub_checks": r.sub_checks.iter().map(|s| json!({
            "name": s.name, "pass": s.pass, "margin": s.margin, "value": s.value,
        })).collect::<Vec<_>>(),
        "note": CertificateReport::NOTE,
    })
}

fn hypothesis_json(e: &HypothesisEntry, region: &str, provenance: &str) -> Value {
    json!({
        "provenance": provenance,
        "condition": e.name,
        "region": region,
        "pass": e.pass,
        "worst_margin": e.worst_margin,
        "witness": {"x": e.witness.as_slice()},
        "samples": e.samples,
        "note": HypothesisReport::NOTE,
    })
}

fn curve_json(r: &CurveCheck, provenance: &str) -> Value {
    json!({
        "provenance": provenance,
        "condition": "hirzebruch_critical_curve",
        "n": r.n,
        "pass": r.pass(),
        "worst_margin": CurveCheck::TOLERANCE - r.max_residual,
        "max_residual": r.max_residual,
        "tolerance": CurveCheck::TOLERANCE,
        "witness": {"alpha": r.witness_alpha.as_slice()},
        "samples": r.table.len(),
        "note": CertificateReport::NOTE,
    })
}

pub fn certify(c: &RunConfig, provenance: &str) -> Outcome {
    let p = c.polytope()?;
    let n = p.dim();
    let hn = c.hirzebruch_n();
    let res = c.options.resolution.unwrap_or(DEFAULT_RESOLUTION);
    let need_name = || c.options.name.clone().ok_or_else(|| Failure::Config("certify needs options.name".into()));
    let check = c.options.check.as_deref().ok_or_else(|| Failure::Config("certify needs options.check".into()))?;
    let (body, pass) = match check {
        "mixed_det" => {
            let region = c.region()?.ok_or_else(|| Failure::Config("mixed_det needs a region".into()))?;
            let r = mixed_det_scan(&p, &region, &c.alpha_box(n)?)?;
            (certificate_json(&r, provenance), r.pass)
        }
        "critical_curve" => {
            if !matches!(c.polytope, Some(PolytopeSpec::Builtin(Builtin::Hirzebruch { .. }))) {
                return Err(Failure::Config("critical_curve needs a hirzebruch polytope".into()));
            }
            let r = hirzebruch_critical_curve_check(hn, &c.alpha_box(n)?)?;
            (curve_json(&r, provenance), r.pass())
        }
        "boundary" => {
            let piece = cfg("options.name", BoundaryPiece::parse(&need_name()?, hn))?;
            let v = c.potential(n)?;
            let r = boundary_inward_check(&p, &v, piece, &c.alpha_box(n)?, res)?;
            (certificate_json(&r, provenance), r.pass)
        }
        "near_vertex" => {
            let o = &c.options;
            let (Some(k), Some(x0), Some(a0)) = (o.vertex, &o.x0, &o.alpha0) else {
                return Err(Failure::Config("near_vertex needs options.vertex, x0 and alpha0".into()));
            };
            if !p.is_bounded() {
                return Err(Failure::Config("near_vertex needs a bounded polytope".into()));
            }
            let verts = p.enumerate_vertices()?;
            let vert = verts.get(k).ok_or_else(|| Failure::Config(format!("vertex {k} does not exist")))?;
            if x0.len() != n || a0.len() != n {
                return Err(Failure::Config(format!("x0 and alpha0 must have dimension {n}")));
            }
            let x0 = vector(x0);
            cfg("x0", p.require_interior(&x0))?;
            let r = near_vertex_certificate(&p, vert, &x0, &vector(a0))?;
            (certificate_json(&r, provenance), r.pass)
        }
        "sign" => {
            let cond = cfg("options.name", SignCondition::parse(&need_name()?, hn))?;
            let e = check_sign_conditions(&c.potential(n)?, cond, &p, res)?;
            (hypothesis_json(&e, cond.name(), provenance), e.pass)
        }
        "convexity" | "strict_convexity" => {
            let region = c.region()?.unwrap_or_else(|| Region::full_interior(res));
            let v = c.potential(n)?;
            let e = if check == "convexity" {
                check_convexity(&v, &p, &region)?
            } else {
                check_strict_convexity(&v, &p, &region)?
            };
            (hypothesis_json(&e, &region.describe(), provenance), e.pass)
        }
        "evenness" => {
            let e = cfg("evenness", check_evenness(&c.potential(n)?, &p, res))?;
            (hypothesis_json(&e, "centered box", provenance), e.pass)
        }
        "properness" => {
            let radius = c.options.radius.unwrap_or(1.0);
            let e = cfg("properness", check_properness(&c.potential(n)?, &p, radius, res))?;
            (hypothesis_json(&e, "radial rays", provenance), e.pass)
        }
        other => {
            return Err(Failure::Config(format!(
                "unknown check {other:?}; expected mixed_det, critical_curve, boundary, near_vertex, sign, \
                 convexity, strict_convexity, evenness or properness"
            )))
        }
    };
    Ok(Artifact::json(body, if pass { Exit::Success } else { Exit::Certificate }))
}

pub fn spectral_check(c: &RunConfig, provenance: &str) -> Outcome {
    let o = &c.options;
    let v1d = cfg("v1d", Polynomial::new(o.v1d.clone().unwrap_or_else(|| vec![0.0, 1.0])))?;
    let alpha = o.alpha.unwrap_or(1.0);
    let hbars = o.hbars.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025, 0.0125]);
    let npts = o.npts.unwrap_or(DEFAULT_POINTS);
    if hbars.is_empty() || hbars.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Failure::Config("hbars must be a non-empty strictly decreasing list".into()));
    }
    for &h in &hbars {
        cfg("spectral problem", RadialProblem::new(v1d.clone(), alpha, h, None, npts))?;
    }
    let r = semiclassical_limit_check(&v1d, alpha, &hbars, npts)?;
    let header: Vec<String> =
        ["hbar", "lambda_min", "c_alpha", "gap", "gap_over_hbar"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> =
        r.rows.iter().map(|row| vec![row.hbar, row.lambda_min, r.c_alpha, row.gap, row.gap_over_hbar()]).collect();
    let comments = [format!(
        "fit gap = slope*hbar + intercept: slope={:e} intercept={:e} monotone={}",
        r.slope,
        r.intercept,
        r.monotone_approach()
    )];
    Ok(Artifact::csv(csv_document(provenance, &comments, &header, &rows, &[]), Exit::Success))
}
