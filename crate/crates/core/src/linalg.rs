//! Small dense helpers. Matrices are row lists (`Vec<Vec<f64>>`) at the API
//! boundary and `nalgebra::DMatrix` internally.

use nalgebra::{DMatrix, DVector};

pub type Rows = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn neg(a: &[f64]) -> Vec<f64> {
    scale(a, -1.0)
}

/// `y += s * x`
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `mᵀ v` for an `r × c` row list and `v` of length `r`.
pub fn mat_t_vec(m: &[Vec<f64>], v: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, vi) in m.iter().zip(v) {
        axpy(&mut out, *vi, row);
    }
    out
}

pub fn to_dmatrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn identity(n: usize) -> Rows {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Orthonormal basis of `{d : rows · d = 0}`.
pub fn nullspace(rows: &[Vec<f64>], dim: usize, tol: f64) -> Rows {
    if rows.is_empty() {
        return identity(dim);
    }
    // Pad with zero rows so that the SVD returns a full right factor.
    let r = rows.len().max(dim);
    let m = DMatrix::from_fn(r, dim, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax.max(1.0);
    let mut basis = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= cutoff {
            basis.push(v_t.row(k).iter().cloned().collect());
        }
    }
    basis
}

pub fn rank(rows: &[Vec<f64>], dim: usize, tol: f64) -> usize {
    dim - nullspace(rows, dim, tol).len()
}

/// Least-squares solution of `min ‖M x − rhs‖` where `M` has the given
/// columns. Returns the minimum-norm solution and the residual norm.
pub fn least_squares_columns(columns: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, f64) {
    let n = rhs.len();
    if columns.is_empty() {
        return (Vec::new(), norm(rhs));
    }
    let m = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(rhs);
    let svd = m.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-13 * svd.singular_values.max().max(1.0))
        .expect("both factors computed");
    let resid = &m * &x - &b;
    (x.iter().cloned().collect(), resid.norm())
}

/// Solve a square system; `None` when singular.
pub fn solve_square(m: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let a = to_dmatrix(m, n);
    let lu = a.full_piv_lu();
    let x = lu.solve(&DVector::from_column_slice(rhs))?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().cloned().collect())
    } else {
        None
    }
}

/// Cholesky-based positive-definiteness test.
pub fn is_positive_definite(m: &[Vec<f64>]) -> bool {
    let n = m.len();
    nalgebra::Cholesky::new(to_dmatrix(m, n)).is_some()
}

pub fn is_symmetric(m: &[Vec<f64>], tol: f64) -> bool {
    let n = m.len();
    m.iter().all(|r| r.len() == n)
        && (0..n).all(|i| (0..i).all(|j| (m[i][j] - m[j][i]).abs() <= tol))
}

pub fn max_eigenvalue_symmetric(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    to_dmatrix(m, n)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Euclidean projection onto `{z ≥ 0, 1ᵀz ≤ 1}`.
pub fn project_capped_simplex(p: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        return clipped;
    }
    // Sort-and-threshold onto {z ≥ 0, 1ᵀz = 1}.
    let mut u = p.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut shift = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            shift = t;
        }
    }
    p.iter().map(|v| (v - shift).max(0.0)).collect()
}

/// Subsets of `items` as sorted vectors, in bitmask order.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    let n = items.len();
    (0..(1usize << n))
        .map(|mask| {
            (0..n)
                .filter(|k| mask & (1 << k) != 0)
                .map(|k| items[k])
                .collect()
        })
        .collect()
}
