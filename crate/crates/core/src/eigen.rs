//! Cyclic Jacobi eigendecomposition for real symmetric matrices.
//!
//! The sweep visits pairs `(p, q)` in row-major order `p < q`, so identical
//! inputs always produce bit-identical outputs.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAX_SWEEPS: usize = 100;
/// Convergence when the off-diagonal norm falls below this fraction of `‖A‖_F`.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
/// Relative gap under which two eigenvalues are ordered by their eigenvectors.
const TIE_TOLERANCE: f64 = 1e-12;

/// `A = V diag(values) Vᵀ` with eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    pub fn reconstruct(&self) -> Matrix {
        let v = &self.vectors;
        v.matmul(&Matrix::from_diag(&self.values)).matmul(&v.transpose())
    }
}

/// Decomposes a symmetric matrix.
///
/// Eigenvalues are sorted descending; each eigenvector is flipped so that its
/// entry of largest magnitude is positive, and eigenvalues that tie are
/// ordered by their eigenvectors, lexicographically descending.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::NumericFailure("matrix contains non-finite entries".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm();
    let threshold = OFF_DIAGONAL_TOLERANCE * norm;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&m) > threshold {
        return Err(Error::NumericFailure(format!(
            "Jacobi did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let values = m.diagonal();
    let mut vectors: Vec<Vec<f64>> = (0..n).map(|k| v.column(k)).collect();
    for vec in &mut vectors {
        normalize_sign(vec);
    }
    let order = sorted_order(&values, &vectors);

    let mut out = Matrix::zeros(n, n);
    let mut sorted_values = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        sorted_values.push(values[k]);
        for (i, &x) in vectors[k].iter().enumerate() {
            out[(i, col)] = x;
        }
    }
    Ok(SymmetricEigen {
        values: sorted_values,
        vectors: out,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation that annihilates `m[(p, q)]`, accumulating it into `v`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = m.rows();

    for k in 0..n {
        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;

    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Flips `v` so that its entry of largest magnitude (first on ties) is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn sorted_order(values: &[f64], vectors: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = TIE_TOLERANCE * scale;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[start]] - values[order[end]] <= tol {
            end += 1;
        }
        order[start..end].sort_by(|&i, &j| lexicographic_desc(&vectors[i], &vectors[j]));
        start = end;
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_already_decomposed() {
        let a = Matrix::from_diag(&[0.8, 1.2]);
        let e = symmetric_eigen(&a).unwrap();
        assert_eq!(e.values, vec![1.2, 0.8]);
        assert_eq!(e.vector(0), vec![0.0, 1.0]);
        assert_eq!(e.vector(1), vec![1.0, 0.0]);
    }

    #[test]
    fn identity_ties_resolve_to_axis_order() {
        let e = symmetric_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(3));
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let r = 0.5f64.sqrt();
        let v0 = e.vector(0);
        assert!((v0[0] - r).abs() < 1e-14 && (v0[1] - r).abs() < 1e-14);
        // largest-magnitude entry positive; on a tie the first entry wins
        let v1 = e.vector(1);
        assert!(v1[0] > 0.0 && v1[1] < 0.0);
    }

    #[test]
    fn reconstructs_dense_matrix() {
        let a = Matrix::from_rows(&[
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 1.5],
            [-2.0, 0.0, 5.0, -1.0],
            [0.5, 1.5, -1.0, 2.0],
        ])
        .unwrap();
        let e = symmetric_eigen(&a).unwrap();
        let rel = e.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
        assert!(rel < 1e-12);
        let vtv = e.vectors.transpose().matmul(&e.vectors);
        assert!(vtv.max_abs_diff(&Matrix::identity(4)) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(matches!(
            symmetric_eigen(&Matrix::zeros(2, 3)),
            Err(Error::DimMismatch(_))
        ));
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::INFINITY;
        assert!(matches!(symmetric_eigen(&a), Err(Error::NumericFailure(_))));
    }

    #[test]
    fn zero_matrix() {
        let e = symmetric_eigen(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0]);
    }
}
