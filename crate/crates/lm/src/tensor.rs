//! Floating-point scalar abstraction and strided matrix views over slices.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of parameters and activations.
pub trait Scalar:
    Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + DivAssign + Sum + 'static
{
    /// `c = alpha * a b + beta * c` on raw strided storage.
    ///
    /// # Safety
    /// Every addressed element must lie inside the allocations behind the
    /// pointers, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("float converts to f64")
    }

    fn from_f32(x: f32) -> Self {
        Self::of(f64::from(x))
    }

    fn to_bits_f32(self) -> f32 {
        self.as_f64() as f32
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f32(x: f32) -> f32 {
        x
    }

    fn to_bits_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Read-only strided matrix.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, S> {
    data: &'a [S],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

/// Writable strided matrix.
#[derive(Debug)]
pub struct ViewMut<'a, S> {
    data: &'a mut [S],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

impl<'a, S> View<'a, S> {
    /// Row-major `rows × cols` matrix at the start of `data`.
    pub fn new(data: &'a [S], rows: usize, cols: usize) -> View<'a, S> {
        View::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a [S], rows: usize, cols: usize, rs: usize, cs: usize) -> View<'a, S> {
        assert!(extent(rows, cols, rs, cs) <= data.len(), "view exceeds its storage");
        View {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    pub fn t(self) -> View<'a, S> {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    /// Columns `start..start + len`.
    pub fn cols(self, start: usize, len: usize) -> View<'a, S> {
        assert!(start + len <= self.cols);
        let offset = if self.rows == 0 || len == 0 { 0 } else { start * self.cs };
        View::strided(&self.data[offset..], self.rows, len, self.rs, self.cs)
    }
}

impl<'a, S> ViewMut<'a, S> {
    pub fn new(data: &'a mut [S], rows: usize, cols: usize) -> ViewMut<'a, S> {
        ViewMut::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a mut [S], rows: usize, cols: usize, rs: usize, cs: usize) -> ViewMut<'a, S> {
        assert!(extent(rows, cols, rs, cs) <= data.len(), "view exceeds its storage");
        ViewMut {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    /// Columns `start..start + len`.
    pub fn cols(self, start: usize, len: usize) -> ViewMut<'a, S> {
        assert!(start + len <= self.cols);
        let offset = if self.rows == 0 || len == 0 { 0 } else { start * self.cs };
        let (rows, rs, cs) = (self.rows, self.rs, self.cs);
        ViewMut::strided(&mut self.data[offset..], rows, len, rs, cs)
    }
}

/// `c = alpha * a b + beta * c`.
pub fn gemm<S: Scalar>(alpha: S, a: View<'_, S>, b: View<'_, S>, beta: S, c: ViewMut<'_, S>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape differs");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for i in 0..c.rows {
            for j in 0..c.cols {
                let x = &mut c.data[i * c.rs + j * c.cs];
                *x = if beta == S::zero() { S::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: the views were bounds-checked against their slices at
    // construction, and `c` is a unique borrow so it cannot alias.
    unsafe {
        S::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Row-major `out = a (m × k) · b (k × n)`, overwriting `out`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    gemm(
        S::one(),
        View::new(a, m, k),
        View::new(b, k, n),
        S::zero(),
        ViewMut::new(out, m, n),
    );
}

/// Row-major `out += aᵀ b` for `a: m × k`, `b: m × n`.
pub fn matmul_tn_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    gemm(
        S::one(),
        View::new(a, m, k).t(),
        View::new(b, m, n),
        S::one(),
        ViewMut::new(out, k, n),
    );
}

/// Row-major `out (+)= a bᵀ` for `a: m × k`, `b: n × k`.
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize, accumulate: bool) {
    let beta = if accumulate { S::one() } else { S::zero() };
    gemm(
        S::one(),
        View::new(a, m, k),
        View::new(b, n, k).t(),
        beta,
        ViewMut::new(out, m, n),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn products_match_naive_loops() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|x| (x as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|x| (x as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        matmul(&a, &b, &mut c, m, k, n);
        for (x, y) in c.iter().zip(naive(&a, &b, m, k, n)) {
            assert!((x - y).abs() < 1e-12);
        }
        // aᵀ (m × k)ᵀ · c (m × n) against the transposed copy
        let at: Vec<f64> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let mut g = vec![0.0; k * n];
        matmul_tn_acc(&a, &c, &mut g, m, k, n);
        for (x, y) in g.iter().zip(naive(&at, &c, k, m, n)) {
            assert!((x - y).abs() < 1e-12);
        }
        let bt: Vec<f64> = (0..n * k).map(|idx| b[(idx % k) * n + idx / k]).collect();
        let mut d = vec![0.0; m * n];
        matmul_nt(&a, &bt, &mut d, m, k, n, false);
        for (x, y) in d.iter().zip(&c) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn column_blocks() {
        let a: Vec<f32> = (0..12).map(|x| x as f32).collect();
        let v = View::new(&a, 3, 4).cols(1, 2);
        let id = [1.0f32, 0.0, 0.0, 1.0];
        let mut out = vec![0.0f32; 6];
        gemm(1.0, v, View::new(&id, 2, 2), 0.0, ViewMut::new(&mut out, 3, 2));
        assert_eq!(out, vec![1.0, 2.0, 5.0, 6.0, 9.0, 10.0]);
    }
}
