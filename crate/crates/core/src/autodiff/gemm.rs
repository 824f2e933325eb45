//! Thin safe wrapper over faer's sequential matrix product.

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, Par};

/// Row-major or transposed view of a dense matrix stored in a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols, row_stride: cols as isize, col_stride: 1 }
    }

    /// # Safety
    /// `data` must cover every offset reachable through the strides.
    unsafe fn view(self) -> faer::MatRef<'a, f64> {
        faer::MatRef::from_raw_parts(self.data.as_ptr(), self.rows, self.cols, self.row_stride, self.col_stride)
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }
}

/// `c = beta * c + a * b`, with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], beta: f64) {
    assert_eq!(a.cols, b.rows);
    assert_eq!(c.len(), a.rows * b.cols);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let accum = if beta == 0.0 {
        Accum::Replace
    } else {
        if beta != 1.0 {
            c.iter_mut().for_each(|v| *v *= beta);
        }
        Accum::Add
    };
    // SAFETY: the asserts above bound every index reached through the given
    // strides: a is m x k, b is k x n, c is m x n, all within their slices.
    let (a, b) = unsafe { (a.view(), b.view()) };
    let dst = MatMut::from_row_major_slice_mut(c, m, n);
    matmul(dst, accum, a, b, 1.0, Par::Seq);
}
