//! Small dense helpers shared by the solvers and certificates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Exact determinant of a square integer matrix by cofactor expansion along
/// the first row. Intended for the n ≤ 8 matrices of facet normals.
pub fn int_det(rows: &[&[i64]]) -> i128 {
    let n = rows.len();
    match n {
        0 => 1,
        1 => rows[0][0] as i128,
        2 => rows[0][0] as i128 * rows[1][1] as i128 - rows[0][1] as i128 * rows[1][0] as i128,
        _ => {
            let mut det = 0i128;
            let cols: Vec<usize> = (0..n).collect();
            for (k, &a) in rows[0].iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let minor = minor_det(&rows[1..], &cols, k);
                let sign = if k % 2 == 0 { 1 } else { -1 };
                det += sign * a as i128 * minor;
            }
            det
        }
    }
}

fn minor_det(rows: &[&[i64]], cols: &[usize], skip: usize) -> i128 {
    let kept: Vec<usize> = cols.iter().copied().filter(|&c| c != skip).collect();
    let sub: Vec<Vec<i64>> = rows
        .iter()
        .map(|r| kept.iter().map(|&c| r[c]).collect())
        .collect();
    let refs: Vec<&[i64]> = sub.iter().map(Vec::as_slice).collect();
    int_det(&refs)
}

/// Integer vector orthogonal to the n-1 given rows of length n
/// (generalized cross product). Zero iff the rows are linearly dependent.
pub fn int_cross(rows: &[&[i64]], n: usize) -> Vec<i128> {
    debug_assert_eq!(rows.len() + 1, n);
    let cols: Vec<usize> = (0..n).collect();
    (0..n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1 } else { -1 };
            sign * minor_det(rows, &cols, k)
        })
        .collect()
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// (smallest, largest) singular values.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().singular_values();
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().copied().fold(0.0, f64::max);
    (lo, hi)
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
