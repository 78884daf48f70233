//! Row-major dense products on top of the `gemm` crate.
//! Single-threaded, so results are bitwise reproducible.

use super::real::Real;

/// `c (m x n) = a (m x k) * w^T + beta c`, with `w` stored `n x k`.
pub fn matmul_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], w: &[T], c: &mut [T], beta: T) {
    assert!(a.len() >= m * k && w.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds asserted above; strides describe row-major layouts.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m x n) = a (m x k) * b (k x n) + beta c`.
pub fn matmul_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], beta: T) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m x n) = a^T * b + beta c`, with `a` stored `k x m` and `b` stored `k x n`.
pub fn matmul_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], beta: T) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
