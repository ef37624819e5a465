//! Small dense linear-algebra kernels: LU factorisation with partial
//! pivoting and a cyclic Jacobi eigensolver for symmetric matrices. Both
//! operate on row-major `Vec<f64>` storage; the problem sizes here (a few
//! hundred) do not justify an external linear-algebra dependency.

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

}

/// Solves `A x = b` in place by LU factorisation with partial pivoting,
/// consuming `a`. Returns the solution and the flop count charged for the
/// factorisation, `(2/3) n^3`.
pub fn lu_solve(mut a: DenseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = a.n_rows;
    assert_eq!(n, a.n_cols, "LU requires a square matrix");
    assert_eq!(n, b.len());
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a.get(col, col).abs();
        for r in col + 1..n {
            let v = a.get(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val == 0.0 {
            return Err(Error::Solver(format!(
                "singular matrix (zero pivot in column {col})"
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot_row, j));
                a.set(pivot_row, j, tmp);
            }
            perm.swap(col, pivot_row);
            x.swap(col, pivot_row);
        }
        let inv_pivot = 1.0 / a.get(col, col);
        for r in col + 1..n {
            let factor = a.get(r, col) * inv_pivot;
            if factor != 0.0 {
                a.set(r, col, factor);
                for j in col + 1..n {
                    let v = a.get(r, j) - factor * a.get(col, j);
                    a.set(r, j, v);
                }
                x[r] -= factor * x[col];
            }
        }
    }

    // Back substitution.
    for col in (0..n).rev() {
        x[col] /= a.get(col, col);
        let xc = x[col];
        for r in 0..col {
            x[r] -= a.get(r, col) * xc;
        }
    }
    let flops = 2.0 / 3.0 * (n as f64).powi(3);
    Ok((x, flops))
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi algorithm.
///
/// Sweeps over all off-diagonal entries until their Frobenius norm drops
/// below `1e-12` times the matrix scale. Early sweeps skip entries below a
/// shrinking threshold (the classical cyclic-with-threshold scheme), and the
/// rotation updates rows contiguously, mirroring into columns by symmetry.
/// Returns eigenvalues (descending) and the matching orthonormal
/// eigenvectors as rows.
pub fn jacobi_eigen_symmetric(mut a: DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.n_rows;
    assert_eq!(n, a.n_cols, "Jacobi requires a square matrix");
    const MAX_SWEEPS: usize = 60;

    // Prescale by a power of two (exact in f64) so squared entries in the
    // off-diagonal norm can neither underflow nor overflow for extreme
    // kernel scales.
    let max_abs = a.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = if max_abs > 0.0 {
        2f64.powi(max_abs.log2().ceil() as i32)
    } else {
        1.0
    };
    for v in a.data.iter_mut() {
        *v /= scale;
    }

    let frobenius: f64 = a.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = 1e-12 * frobenius.max(f64::MIN_POSITIVE);

    // Eigenvectors accumulate as rows of v.
    let mut v = DenseMatrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    let off_frobenius = |m: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let x = m.get(i, j);
                s += 2.0 * x * x;
            }
        }
        s.sqrt()
    };

    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];
    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let off = off_frobenius(&a);
        if off <= target {
            converged = true;
            break;
        }
        // Rotate only entries above a threshold during the first sweeps;
        // afterwards rotate everything that is not negligible.
        let thresh = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let g = 100.0 * apq.abs();
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                if apq == 0.0 || apq.abs() <= thresh {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // New rows p and q of J^T A (contiguous passes).
                {
                    let (ap, aq) = rows_pair(&a.data, n, p, q);
                    for k in 0..n {
                        row_p[k] = c * ap[k] - s * aq[k];
                        row_q[k] = s * ap[k] + c * aq[k];
                    }
                }
                // Finish J^T A J on the 2x2 block analytically.
                let new_pp = c * row_p[p] - s * row_p[q];
                let new_qq = s * row_q[p] + c * row_q[q];
                row_p[p] = new_pp;
                row_p[q] = 0.0;
                row_q[q] = new_qq;
                row_q[p] = 0.0;
                a.data[p * n..(p + 1) * n].copy_from_slice(&row_p);
                a.data[q * n..(q + 1) * n].copy_from_slice(&row_q);
                // Mirror the changed columns from the symmetric rows.
                for k in 0..n {
                    if k != p && k != q {
                        a.data[k * n + p] = row_p[k];
                        a.data[k * n + q] = row_q[k];
                    }
                }

                let (vp, vq) = rows_pair_mut(&mut v.data, n, p, q);
                for k in 0..n {
                    let a = vp[k];
                    let b = vq[k];
                    vp[k] = c * a - s * b;
                    vq[k] = s * a + c * b;
                }
            }
        }
    }
    if !converged && off_frobenius(&a) > target {
        return Err(Error::Solver(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (n = {n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .expect("NaN eigenvalue")
    });
    // Undo the exact prescaling.
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i) * scale).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (row, &src) in order.iter().enumerate() {
        vectors.data[row * n..(row + 1) * n].copy_from_slice(&v.data[src * n..(src + 1) * n]);
    }
    Ok((eigenvalues, vectors))
}

/// Immutable views of rows `p` and `q` (`p < q`).
fn rows_pair(data: &[f64], n: usize, p: usize, q: usize) -> (&[f64], &[f64]) {
    let (head, tail) = data.split_at(q * n);
    (&head[p * n..p * n + n], &tail[..n])
}

/// Mutable views of rows `p` and `q` (`p < q`).
fn rows_pair_mut(data: &mut [f64], n: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    let (head, tail) = data.split_at_mut(q * n);
    (&mut head[p * n..p * n + n], &mut tail[..n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_small_system() {
        let mut a = DenseMatrix::zeros(3, 3);
        let rows = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                a.set(i, j, v);
            }
        }
        let (x, _) = lu_solve(a, &[8.0, -11.0, -3.0]).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn lu_detects_singular() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(lu_solve(a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lu_residual_is_machine_precision() {
        // Seeded random moderately conditioned system.
        let n = 60;
        let stream = crate::rng::Stream::new(9, crate::rng::domain::AUX, 0, 0);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = stream.uniform((i * n + j) as u64) - 0.5;
                a.set(i, j, v + if i == j { 4.0 } else { 0.0 });
            }
        }
        let b: Vec<f64> = (0..n).map(|i| stream.uniform((n * n + i) as u64)).collect();
        let (x, _) = lu_solve(a.clone(), &b).unwrap();
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a.get(i, j) * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-11, "row {i}");
        }
    }

    #[test]
    fn jacobi_diagonalises_known_matrix() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1.
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 2.0);
        let (vals, vecs) = jacobi_eigen_symmetric(a).unwrap();
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
        // Eigenvector rows are orthonormal.
        let dot: f64 = (0..2).map(|k| vecs.get(0, k) * vecs.get(1, k)).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric_matrix() {
        let n = 24;
        let stream = crate::rng::Stream::new(13, crate::rng::domain::AUX, 0, 0);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = stream.uniform((i * n + j) as u64) - 0.5;
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        let (vals, vecs) = jacobi_eigen_symmetric(a.clone()).unwrap();
        // A = V^T diag(vals) V with eigenvectors as rows.
        for i in 0..n {
            for j in 0..n {
                let recon: f64 = (0..n).map(|k| vecs.get(k, i) * vals[k] * vecs.get(k, j)).sum();
                assert!(
                    (recon - a.get(i, j)).abs() < 1e-10,
                    "entry ({i}, {j}): {recon} vs {}",
                    a.get(i, j)
                );
            }
        }
        // Sorted descending.
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }
}
