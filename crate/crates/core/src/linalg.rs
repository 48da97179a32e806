//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    sym(m).symmetric_eigenvalues().min()
}

pub fn max_eig(m: &DMatrix<f64>) -> f64 {
    sym(m).symmetric_eigenvalues().max()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Numerical rank with threshold `max(rows, cols) · ε · s_max`, plus the
/// condition number `s_max / s_min` over the smaller dimension.
pub fn rank_and_cond(m: &DMatrix<f64>) -> (usize, f64, DVector<f64>) {
    if m.is_empty() {
        return (0, f64::INFINITY, DVector::zeros(0));
    }
    let mut s = m.singular_values();
    s.as_mut_slice().sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = s[0];
    let thresh = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    let rank = s.iter().filter(|&&x| x > thresh && x > 0.0).count();
    let smin = s[s.len() - 1];
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (rank, cond, s)
}

/// Orthonormal basis (columns) of the null space of `m`, counting singular
/// values at most `rel_tol · s_max` as zero.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let k = m.ncols();
    if m.nrows() == 0 || m.amax() == 0.0 {
        return DMatrix::identity(k, k);
    }
    // zero rows make the SVD return a full right factor
    let mut padded = DMatrix::zeros(m.nrows().max(k), k);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let cols: Vec<_> = (0..k)
        .filter(|&i| svd.singular_values[i] <= rel_tol * smax)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Basis of symmetric k×k matrices: E_ii and E_ij + E_ji for i < j.
pub fn sym_basis(k: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let mut e = DMatrix::zeros(k, k);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

/// Inverse of [`sym_basis`]: reassembles a symmetric matrix from coordinates.
pub fn sym_from_coords(k: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

pub fn sym_to_coords(m: &DMatrix<f64>) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            out.push(0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
