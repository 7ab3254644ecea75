//! Linear subspaces of `ℝⁿ` given by basis matrices (columns).

use nalgebra::{DMatrix, DVector};

/// Singular values below `RANK_TOL · max(1, σ_max)` count as zero.
pub const RANK_TOL: f64 = 1e-10;

fn threshold(sv: &DVector<f64>) -> f64 {
    RANK_TOL * sv.iter().copied().fold(1.0, f64::max)
}

/// Orthonormal basis of the column span.
pub fn orthonormalize(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    if basis.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = basis.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let tol = threshold(&svd.singular_values);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let cols: Vec<_> = keep.iter().map(|&i| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub fn rank(basis: &DMatrix<f64>) -> usize {
    orthonormalize(basis).ncols()
}

/// Orthonormal basis of `{v : A v = 0}`.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut padded = DMatrix::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let tol = threshold(&svd.singular_values);
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        orthonormalize(&DMatrix::from_columns(&cols))
    }
}

/// Orthonormal basis of `span(a) + span(b)`.
pub fn sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows().max(b.nrows());
    let mut joined = DMatrix::zeros(n, a.ncols() + b.ncols());
    joined.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    joined.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    orthonormalize(&joined)
}

/// `P = Q Qᵀ` for an orthonormal `Q`.
pub fn projector(q: &DMatrix<f64>) -> DMatrix<f64> {
    q * q.transpose()
}

/// Orthonormal basis of `span(a) ∩ span(b)`.
pub fn intersection(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    if qa.ncols() == 0 || qb.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut stacked = DMatrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&(&eye - projector(&qa)));
    stacked.view_mut((n, 0), (n, n)).copy_from(&(&eye - projector(&qb)));
    null_space(&stacked)
}

/// Orthonormal basis of `span(s) ∩ span(sub)^⊥`.
pub fn complement_within(s: &DMatrix<f64>, sub: &DMatrix<f64>) -> DMatrix<f64> {
    let qs = orthonormalize(s);
    let qsub = orthonormalize(sub);
    if qsub.ncols() == 0 || qs.ncols() == 0 {
        return qs;
    }
    let coeffs = null_space(&(qsub.transpose() * &qs));
    if coeffs.ncols() == 0 {
        return DMatrix::zeros(s.nrows(), 0);
    }
    orthonormalize(&(qs * coeffs))
}

/// Euclidean distance from `v` to `span(q)`, `q` orthonormal.
pub fn residual_norm(q: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    if q.ncols() == 0 {
        return v.norm();
    }
    (v - q * (q.transpose() * v)).norm()
}

pub fn contains(q: &DMatrix<f64>, v: &DVector<f64>, tol: f64) -> bool {
    residual_norm(q, v) <= tol * v.norm().max(1.0)
}

/// Columns from a list of vectors of length `n`.
pub fn from_vectors(n: usize, vectors: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i])
}

pub fn to_vectors(basis: &DMatrix<f64>) -> Vec<Vec<f64>> {
    basis.column_iter().map(|c| c.iter().copied().collect()).collect()
}
