//! Small dense kernels over row-major `n x n` slices.

/// Lower Cholesky factor `C` with `C C^T = a`, or `None` if `a` is not
/// (numerically) positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= c[i * n + k] * c[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                c[i * n + i] = s.sqrt();
            } else {
                c[i * n + j] = s / c[j * n + j];
            }
        }
    }
    Some(c)
}

pub fn is_positive_definite(a: &[f64], n: usize) -> bool {
    cholesky(a, n).is_some()
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn invert_lower(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i * n + k] * inv[k * n + col];
            }
            inv[i * n + col] = s / l[i * n + i];
        }
    }
    inv
}

/// `M^T M` for a lower-triangular `M`.
pub fn lower_t_times_lower(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            // rows k >= max(i, j) = i contribute
            let s: f64 = (i..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// `L L^T` for a lower-triangular `L`.
pub fn lower_times_lower_t(l: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..=j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let c = cholesky(a, n)?;
    let ci = invert_lower(&c, n);
    let inv = lower_t_times_lower(&ci, n);
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Replaces `a` by `(a + a^T) / 2`.
pub fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
}

/// Log-determinant of an SPD matrix via Cholesky.
pub fn spd_log_det(a: &[f64], n: usize) -> Option<f64> {
    let c = cholesky(a, n)?;
    Some(2.0 * (0..n).map(|i| c[i * n + i].ln()).sum::<f64>())
}
