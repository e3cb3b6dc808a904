/// Strided view of a row-major-ish matrix: element `(i, j)` is at
/// `ptr[offset + i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rows(offset: usize, cols: usize) -> Self {
        Self { offset, rs: cols, cs: 1 }
    }

    pub fn transposed(offset: usize, cols: usize) -> Self {
        Self { offset, rs: 1, cs: cols }
    }

    pub fn strided(offset: usize, rs: usize, cs: usize) -> Self {
        Self { offset, rs, cs }
    }
}

/// `c = alpha * a(m x k) · b(k x n) + beta * c`, with bounds checked up front.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    av: View,
    b: &[f32],
    bv: View,
    beta: f32,
    c: &mut [f32],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |v: View, r: usize, q: usize| v.offset + (r - 1) * v.rs + (q - 1) * v.cs;
    assert!(last(cv, m, n) < c.len());
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[cv.offset + i * cv.rs + j * cv.cs];
                *x = if beta == 0.0 { 0.0 } else { *x * beta };
            }
        }
        return;
    }
    assert!(last(av, m, k) < a.len());
    assert!(last(bv, k, n) < b.len());
    // SAFETY: every addressed element was bounds-checked above, and `c` is a
    // unique borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}
