use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `x · w + b` for `x: rows × inp`, `w: inp × out` (row-major slice), `b: out`.
pub fn affine<T: Real>(x: &Matrix<T>, w: &[T], b: &[T], out: usize) -> Matrix<T> {
    let inp = x.cols;
    debug_assert_eq!(w.len(), inp * out);
    let mut y = Matrix::zeros(x.rows, out);
    for r in 0..x.rows {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        yr.copy_from_slice(b);
        for (k, &xv) in xr.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let wk = &w[k * out..(k + 1) * out];
            for (yv, &wv) in yr.iter_mut().zip(wk) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// Accumulates `xᵀ · dy` into `dw` and the column sums of `dy` into `db`.
pub fn affine_param_grads<T: Real>(x: &Matrix<T>, dy: &Matrix<T>, dw: &mut [T], db: &mut [T]) {
    let out = dy.cols;
    for r in 0..x.rows {
        let dyr = dy.row(r);
        for (g, &d) in db.iter_mut().zip(dyr) {
            *g += d;
        }
        for (k, &xv) in x.row(r).iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let gk = &mut dw[k * out..(k + 1) * out];
            for (g, &d) in gk.iter_mut().zip(dyr) {
                *g += xv * d;
            }
        }
    }
}

/// `dy · wᵀ`: gradient with respect to the affine input.
pub fn affine_input_grad<T: Real>(dy: &Matrix<T>, w: &[T], inp: usize) -> Matrix<T> {
    let out = dy.cols;
    let mut dx = Matrix::zeros(dy.rows, inp);
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for (k, slot) in dxr.iter_mut().enumerate() {
            let wk = &w[k * out..(k + 1) * out];
            let mut acc = T::zero();
            for (&d, &wv) in dyr.iter().zip(wk) {
                acc += d * wv;
            }
            *slot = acc;
        }
    }
    dx
}
