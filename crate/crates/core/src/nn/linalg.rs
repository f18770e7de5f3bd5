//! Dense matrix products and a small symmetric solver.

use crate::error::{Error, Result};

/// `c = op(a) · op(b) + beta · c` for row-major operands, where `op(a)` is
/// `m x k` and `op(b)` is `k x n`. With `a_t` set, `a` is stored as `k x m`;
/// with `b_t` set, `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(
        a.len() >= m * k && b.len() >= k * n && c.len() >= m * n,
        "gemm operand sizes"
    );
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above guarantee every index touched by the strides
    // (row < m, col < k for a; row < k, col < n for b; m x n for c) is in bounds,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Solves `a x = b` for a symmetric positive-definite `a` (n x n, row-major)
/// by Cholesky factorisation. Returns `None` if `a` is not numerically
/// positive definite (a pivot below `1e-12` of its diagonal entry).
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !(s > 1e-12 * a[i * n + i]) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|p| l[i * n + p] * y[p]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|p| l[p * n + i] * x[p]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Ordinary least squares via the normal equations. When `XᵀX` is singular
/// the system is retried with a ridge term `ridge · I`; the flag reports it.
pub fn least_squares(
    x: &[f64],
    y: &[f64],
    rows: usize,
    cols: usize,
    ridge: f64,
) -> Result<(Vec<f64>, bool)> {
    if x.len() != rows * cols || y.len() != rows {
        return Err(Error::Shape(format!(
            "design {}x{} vs {} values",
            rows,
            cols,
            y.len()
        )));
    }
    let mut xtx = vec![0.0; cols * cols];
    gemm(cols, rows, cols, x, true, x, false, 0.0, &mut xtx);
    let mut xty = vec![0.0; cols];
    gemm(cols, rows, 1, x, true, y, false, 0.0, &mut xty);
    if let Some(beta) = solve_spd(&xtx, &xty, cols) {
        if beta.iter().all(|v| v.is_finite()) {
            return Ok((beta, false));
        }
    }
    for i in 0..cols {
        xtx[i * cols + i] += ridge;
    }
    solve_spd(&xtx, &xty, cols)
        .map(|b| (b, true))
        .ok_or_else(|| Error::Degenerate("least-squares system is singular even with ridge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        t
    }

    #[test]
    fn gemm_all_transpose_combinations() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, 0.0, &mut c);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spd_solve_and_ridge_fallback() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        // two identical columns
        let design = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let (beta, ridged) = least_squares(&design, &[1.0, 2.0, 3.0], 3, 2, 1e-6).unwrap();
        assert!(ridged);
        assert!((beta[0] + beta[1] - 1.0).abs() < 1e-4);
    }
}
