//! Minimal dense linear algebra for imputation and outlier detection.

/// Cholesky factorisation of a symmetric positive-definite matrix
/// (row-major, n x n). Returns the lower factor, or `None` if the matrix is
/// not numerically positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// Ridge regression `(X^T X + lambda I) beta = X^T y` over rows of `x`
/// (row-major, rows x cols). The caller appends the intercept column.
pub fn ridge(x: &[f64], y: &[f64], rows: usize, cols: usize, lambda: f64) -> Vec<f64> {
    let mut xtx = vec![0.0; cols * cols];
    let mut xty = vec![0.0; cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            xty[i] += row[i] * y[r];
            for j in 0..=i {
                xtx[i * cols + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in (i + 1)..cols {
            xtx[i * cols + j] = xtx[j * cols + i];
        }
        xtx[i * cols + i] += lambda;
    }
    // lambda > 0 keeps this positive definite
    let l = cholesky(&xtx, cols).expect("ridge system is positive definite");
    cholesky_solve(&l, cols, &xty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_known_system() {
        // A = [[4, 2], [2, 3]], b = [8, 7] -> x = [1.2..., ...]
        let a = [4.0, 2.0, 2.0, 3.0];
        let b = [8.0, 7.0];
        let l = cholesky(&a, 2).unwrap();
        let x = cholesky_solve(&l, 2, &b);
        // verify by substitution
        assert!((4.0 * x[0] + 2.0 * x[1] - 8.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn ridge_recovers_a_linear_map() {
        // y = 2 a - b + 3 with intercept column
        let mut x = Vec::new();
        let mut y = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                x.extend_from_slice(&[a as f64, b as f64, 1.0]);
                y.push(2.0 * a as f64 - b as f64 + 3.0);
            }
        }
        let beta = ridge(&x, &y, 25, 3, 1e-9);
        assert!((beta[0] - 2.0).abs() < 1e-6);
        assert!((beta[1] + 1.0).abs() < 1e-6);
        assert!((beta[2] - 3.0).abs() < 1e-6);
    }
}
