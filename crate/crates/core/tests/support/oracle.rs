//! Reference implementations used only to check the library: written
//! differently from the production code and kept deliberately naive.
#![allow(dead_code)]

use mibci_core::Matrix;

/// Classical Jacobi: always rotates the largest off-diagonal entry.
/// Returns eigenvalues in ascending order.
pub fn classical_jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _ in 0..(100 * n * n).max(1) {
        let (mut p, mut q, mut best) = (0, 0, 0.0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if best < 1e-300 {
            break;
        }
        let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
        let (s, c) = theta.sin_cos();
        let mut next = m.clone();
        for k in 0..n {
            next[k][p] = c * m[k][p] - s * m[k][q];
            next[k][q] = s * m[k][p] + c * m[k][q];
        }
        let cols = next.clone();
        for k in 0..n {
            next[p][k] = c * cols[p][k] - s * cols[q][k];
            next[q][k] = s * cols[p][k] + c * cols[q][k];
        }
        m = next;
    }
    let mut d: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    d.sort_by(f64::total_cmp);
    d
}

/// `|H(e^{jω})|` by summing cosines and sines of the coefficient series.
pub fn magnitude_response(b: &[f64], a: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq_hz / fs;
    let eval = |c: &[f64]| {
        let re: f64 = c.iter().enumerate().map(|(k, v)| v * (w * k as f64).cos()).sum();
        let im: f64 = c.iter().enumerate().map(|(k, v)| -v * (w * k as f64).sin()).sum();
        re.hypot(im)
    };
    eval(b) / eval(a)
}

pub fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// Count of `(target, prediction)` pairs, indexed by label sign.
pub fn tally(targets: &[i8], predictions: &[i8]) -> [[u64; 2]; 2] {
    let mut c = [[0u64; 2]; 2];
    for k in 0..targets.len() {
        let i = if targets[k] < 0 { 0 } else { 1 };
        let j = if predictions[k] < 0 { 0 } else { 1 };
        c[i][j] += 1;
    }
    c
}

/// Sample variance by the textbook one-pass sum of squares.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (s, ss) = x.iter().fold((0.0, 0.0), |(s, ss), v| (s + v, ss + v * v));
    (ss - s * s / n) / (n - 1.0)
}

/// Triple-loop product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Naive Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[i][n + j];
        }
    }
    out
}

/// Reference hand: five set-points updated by the four protocol bytes.
pub fn reference_hand(bytes: &[u8]) -> [f64; 5] {
    let mut s = [0.0; 5];
    for &b in bytes {
        match b {
            b'q' => s = [180.0; 5],
            b'a' => s = [0.0; 5],
            b'w' => s[0] = 180.0,
            b's' => s[0] = 0.0,
            _ => {}
        }
    }
    s
}
