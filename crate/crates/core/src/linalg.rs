//! Small dense kernels on column-major slices.
//!
//! Everything in the pipeline works with `n ≤ 3` state vectors and runs for
//! millions of steps, so the hot paths avoid heap allocation. Matrices are
//! stored column-major: entry `(row, col)` of an `n × m` matrix lives at
//! `row + col * n`.

use nalgebra::{DMatrix, DVector};

/// Smallest R-diagonal accepted before a basis is declared rank deficient.
pub const RANK_FLOOR: f64 = 1e-280;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = A x` for an `n × m` matrix.
pub fn mat_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out[..n].fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        let col = &a[j * n..(j + 1) * n];
        for (o, c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
}

/// `out = Aᵀ x` for an `n × m` matrix.
pub fn mat_t_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(&a[j * n..(j + 1) * n], &x[..n]);
    }
}

/// `out = A B` where `A` is `n × n` and `B` is `n × m`.
pub fn mat_mat(a: &[f64], n: usize, b: &[f64], m: usize, out: &mut [f64]) {
    for j in 0..m {
        mat_vec(a, n, &b[j * n..(j + 1) * n], &mut out[j * n..(j + 1) * n]);
    }
}

/// `out = Aᵀ B` where `A` is `n × n` and `B` is `n × m`.
pub fn mat_t_mat(a: &[f64], n: usize, b: &[f64], m: usize, out: &mut [f64]) {
    for j in 0..m {
        mat_t_vec(a, n, &b[j * n..(j + 1) * n], &mut out[j * n..(j + 1) * n]);
    }
}

/// `out = Q Qᵀ w`, the orthogonal projection onto the span of the columns of
/// an orthonormal `n × m` matrix.
pub fn project(q: &[f64], n: usize, m: usize, w: &[f64], out: &mut [f64]) {
    out[..n].fill(0.0);
    for j in 0..m {
        let col = &q[j * n..(j + 1) * n];
        let c = dot(col, w);
        for (o, qc) in out.iter_mut().zip(col) {
            *o += c * qc;
        }
    }
}

/// Thin QR by Gram–Schmidt with one re-orthogonalization pass, in place.
///
/// On return the columns of `a` are orthonormal and `rdiag` holds the
/// diagonal of `R`, which is positive by construction. Returns the index of the
/// first column whose norm fell below [`RANK_FLOOR`] on failure.
pub fn orthonormalize(a: &mut [f64], n: usize, m: usize, rdiag: &mut [f64]) -> Result<(), usize> {
    for j in 0..m {
        let (done, rest) = a.split_at_mut(j * n);
        let col = &mut rest[..n];
        for _pass in 0..2 {
            for k in 0..j {
                let qk = &done[k * n..(k + 1) * n];
                let c = dot(qk, col);
                for (x, q) in col.iter_mut().zip(qk) {
                    *x -= c * q;
                }
            }
        }
        let r = norm(col);
        if !(r > RANK_FLOOR) || !r.is_finite() {
            rdiag[j] = r;
            return Err(j);
        }
        rdiag[j] = r;
        for x in col.iter_mut() {
            *x /= r;
        }
    }
    Ok(())
}

/// Solves `A x = b` for a square column-major `A`. Returns `None` when `A` is
/// numerically singular.
pub fn solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    if n == 1 {
        return (a[0] != 0.0 && a[0].is_finite()).then(|| vec![b[0] / a[0]]);
    }
    let m = DMatrix::from_column_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

/// Solves `Aᵀ x = b` for a square column-major `A`.
pub fn solve_transpose(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    if n == 1 {
        return solve(a, n, b);
    }
    let m = DMatrix::from_column_slice(n, n, a).transpose();
    let rhs = DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

/// Determinant of a square column-major matrix.
pub fn det(a: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[2] * a[1],
        _ => DMatrix::from_column_slice(n, n, a).determinant(),
    }
}

/// Cosines of the principal angles between the column spans of two
/// orthonormal `n × m` matrices (singular values of `AᵀB`), largest first.
pub fn principal_cosines(a: &[f64], b: &[f64], n: usize, m: usize) -> Vec<f64> {
    let ma = DMatrix::from_column_slice(n, m, a);
    let mb = DMatrix::from_column_slice(n, m, b);
    let mut s: Vec<f64> = (ma.transpose() * mb).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}
