//! Fixed-size dense matrix helpers for the 7-state filter.

use crate::scalar::Real;

pub type Mat<T, const R: usize, const C: usize> = [[T; C]; R];

pub fn zeros<T: Real, const R: usize, const C: usize>() -> Mat<T, R, C> {
    [[T::zero(); C]; R]
}

pub fn identity<T: Real, const N: usize>() -> Mat<T, N, N> {
    let mut m = zeros::<T, N, N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn diag<T: Real, const N: usize>(d: &[T; N]) -> Mat<T, N, N> {
    let mut m = zeros::<T, N, N>();
    for i in 0..N {
        m[i][i] = d[i];
    }
    m
}

pub fn matmul<T: Real, const R: usize, const K: usize, const C: usize>(
    a: &Mat<T, R, K>,
    b: &Mat<T, K, C>,
) -> Mat<T, R, C> {
    let mut out = zeros::<T, R, C>();
    for i in 0..R {
        for k in 0..K {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..C {
                out[i][j] = out[i][j] + aik * b[k][j];
            }
        }
    }
    out
}

pub fn transpose<T: Real, const R: usize, const C: usize>(a: &Mat<T, R, C>) -> Mat<T, C, R> {
    let mut out = zeros::<T, C, R>();
    for i in 0..R {
        for j in 0..C {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn add<T: Real, const R: usize, const C: usize>(a: &Mat<T, R, C>, b: &Mat<T, R, C>) -> Mat<T, R, C> {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] = out[i][j] + b[i][j];
        }
    }
    out
}

pub fn sub<T: Real, const R: usize, const C: usize>(a: &Mat<T, R, C>, b: &Mat<T, R, C>) -> Mat<T, R, C> {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] = out[i][j] - b[i][j];
        }
    }
    out
}

pub fn mat_vec<T: Real, const R: usize, const C: usize>(a: &Mat<T, R, C>, x: &[T; C]) -> [T; R] {
    let mut out = [T::zero(); R];
    for i in 0..R {
        out[i] = (0..C).map(|j| a[i][j] * x[j]).sum();
    }
    out
}

pub fn trace<T: Real, const N: usize>(a: &Mat<T, N, N>) -> T {
    (0..N).map(|i| a[i][i]).sum()
}

/// Replaces `a` with `(a + a^T) / 2`.
pub fn symmetrize<T: Real, const N: usize>(a: &mut Mat<T, N, N>) {
    let half = T::lit(0.5);
    for i in 0..N {
        for j in i + 1..N {
            let m = (a[i][j] + a[j][i]) * half;
            a[i][j] = m;
            a[j][i] = m;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real, const N: usize>(a: &Mat<T, N, N>) -> Option<Mat<T, N, N>> {
    let mut l = zeros::<T, N, N>();
    for i in 0..N {
        for j in 0..=i {
            let s: T = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > T::zero()) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse<T: Real, const N: usize>(a: &Mat<T, N, N>) -> Option<Mat<T, N, N>> {
    let l = cholesky(a)?;
    let mut inv = zeros::<T, N, N>();
    for col in 0..N {
        // solve L y = e_col, then L^T x = y
        let mut y = [T::zero(); N];
        for i in 0..N {
            let e = if i == col { T::one() } else { T::zero() };
            let s: T = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = (e - s) / l[i][i];
        }
        let mut x = [T::zero(); N];
        for i in (0..N).rev() {
            let s: T = (i + 1..N).map(|k| l[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i][i];
        }
        for i in 0..N {
            inv[i][col] = x[i];
        }
    }
    Some(inv)
}
