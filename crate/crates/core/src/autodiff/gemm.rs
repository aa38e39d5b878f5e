use num_complex::Complex64;

/// Strided view of an `rows × cols` matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [Complex64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    /// Row-major with `cols` columns.
    pub fn rows(data: &'a [Complex64], cols: usize) -> Self {
        View { data, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [Complex64], cols: usize) -> Self {
        View { data, rs: 1, cs: cols }
    }

    fn check(&self, rows: usize, cols: usize) {
        if rows > 0 && cols > 0 {
            assert!((rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len(), "gemm view out of bounds");
        }
    }
}

/// `c (m × n, row-major) ← a·b + beta·c` with `beta ∈ {0, 1}`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View<'_>, b: View<'_>, c: &mut [Complex64], accumulate: bool) {
    assert!(c.len() >= m * n, "gemm output too small");
    a.check(m, k);
    b.check(k, n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(Complex64::new(0.0, 0.0));
        }
        return;
    }
    let beta = if accumulate { [1.0, 0.0] } else { [0.0, 0.0] };
    // SAFETY: Complex64 is repr(C) {re, im}, layout-identical to [f64; 2]; all
    // strided accesses were bounds-checked above and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.data.as_ptr() as *const [f64; 2],
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr() as *const [f64; 2],
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr() as *mut [f64; 2],
            n as isize,
            1,
        );
    }
}

pub(crate) fn conj(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|z| z.conj()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut c = vec![Complex64::new(0.0, 0.0); m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_and_transpose() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<_> = (0..m * k).map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i % 4) as f64)).collect();
        let b: Vec<_> = (0..k * n).map(|i| Complex64::new((i % 5) as f64, -0.5 * i as f64)).collect();
        let want = naive(m, k, n, &a, &b);
        let mut c = vec![Complex64::new(9.0, 9.0); m * n];
        gemm(m, k, n, View::rows(&a, k), View::rows(&b, n), &mut c, false);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).norm() < 1e-12);
        }
        // (bᵀ aᵀ)ᵀ = a b
        let mut ct = vec![Complex64::new(0.0, 0.0); n * m];
        gemm(n, k, m, View::transposed(&b, n), View::transposed(&a, k), &mut ct, false);
        for i in 0..m {
            for j in 0..n {
                assert!((ct[j * m + i] - want[i * n + j]).norm() < 1e-12);
            }
        }
        gemm(m, k, n, View::rows(&a, k), View::rows(&b, n), &mut c, true);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - 2.0 * y).norm() < 1e-12);
        }
    }
}
