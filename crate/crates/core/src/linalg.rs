//! Small dense-vector and SPD-solve helpers.
//!
//! The dot product uses four fixed accumulators so the compiler can keep the
//! lanes in registers; the summation order is a compile-time constant, which
//! keeps results bit-identical run to run regardless of threading.

/// Dot product with a fixed 4-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// stored row-major. On success the lower triangle holds L with A = L L^T.
/// Returns the pivot index that failed when the matrix is not SPD.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(j);
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / ljj;
        }
    }
    Ok(())
}

/// Solve `L L^T x = b` given the lower-triangular factor from [`cholesky`].
pub fn chol_solve(l: &[f64], n: usize, b: &mut [f64]) {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

/// `y = L z` for a lower-triangular factor; used to turn iid normals into
/// draws with covariance L L^T.
pub fn lower_matvec(l: &[f64], n: usize, z: &[f64], y: &mut [f64]) {
    debug_assert_eq!(z.len(), n);
    debug_assert_eq!(y.len(), n);
    for i in 0..n {
        let row = &l[i * n..i * n + i + 1];
        y[i] = dot(row, &z[..i + 1]);
    }
}
