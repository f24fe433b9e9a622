//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{LprError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition numbers above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn condition_number(m: &Mat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a square matrix, refusing ill-conditioned input.
pub fn inverse_checked(m: &Mat, context: &str) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(LprError::Dimension(format!(
            "{context}: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let cond = condition_number(m);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(LprError::singular(context, cond));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| LprError::singular(context, cond))
}

/// Least-squares solve of a tall, full-column-rank system through a
/// Householder QR. Also returns `min |R_ii| / max |R_ii|` so callers can
/// reject degenerate bases.
pub fn lstsq(a: &Mat, b: &Vector) -> Result<(Vector, f64)> {
    let (rows, cols) = a.shape();
    if rows < cols || b.len() != rows {
        return Err(LprError::Dimension(format!(
            "least squares: {rows}x{cols} system with {} right-hand sides",
            b.len()
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    let max = diag.max();
    let rel = if max > 0.0 { diag.min() / max } else { 0.0 };
    if rel == 0.0 {
        return Err(LprError::singular("least squares", f64::INFINITY));
    }
    let qtb = qr.q().transpose() * b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| LprError::singular("least squares", f64::INFINITY))?;
    Ok((x, rel))
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Mat::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn ensure_finite(v: &Vector, context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LprError::NonFinite(context.to_string()))
    }
}

/// Column `j` of the central-difference Jacobian of `f` at `x` is
/// `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn fd_jacobian<F>(f: F, x: &Vector, h: f64) -> Result<Mat>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let f0 = f(x)?;
    let mut jac = Mat::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp)? - f(&xm)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Central-difference directional derivative of a matrix-valued map.
pub fn fd_matrix_partials<F>(f: F, x: &Vector, h: f64) -> Result<Vec<Mat>>
where
    F: Fn(&Vector) -> Result<Mat>,
{
    (0..x.len())
        .map(|j| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            Ok((f(&xp)? - f(&xm)?) / (2.0 * h))
        })
        .collect()
}

/// Dense rank-3 array indexed `[i][j][k]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Tensor3 {
            dims: [n0, n1, n2],
            data: vec![0.0; n0 * n1 * n2],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] += value;
    }

    /// Slice `[i][.][.]` as a matrix.
    pub fn slab(&self, i: usize) -> Mat {
        Mat::from_fn(self.dims[1], self.dims[2], |j, k| self.get(i, j, k))
    }

    /// `out_i = sum_jk T[i][j][k] x_j y_k`.
    pub fn contract(&self, x: &Vector, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dims[0]);
        for i in 0..self.dims[0] {
            let mut s = 0.0;
            for j in 0..self.dims[1] {
                if x[j] == 0.0 {
                    continue;
                }
                for k in 0..self.dims[2] {
                    s += self.get(i, j, k) * x[j] * y[k];
                }
            }
            out[i] = s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_rejects_singular() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            inverse_checked(&m, "test"),
            Err(LprError::Singular { .. })
        ));
    }

    #[test]
    fn fd_jacobian_of_quadratic() {
        let f = |x: &Vector| Ok(Vector::from_vec(vec![x[0] * x[1], x[0] * x[0]]));
        let x = Vector::from_vec(vec![0.7, -1.3]);
        let j = fd_jacobian(f, &x, 1e-5).unwrap();
        let expect = Mat::from_row_slice(2, 2, &[-1.3, 0.7, 1.4, 0.0]);
        assert!(max_abs(&(j - expect)) < 1e-9);
    }

    #[test]
    fn tensor_contract() {
        let mut t = Tensor3::zeros(2, 2, 2);
        t.set(1, 0, 1, 3.0);
        let x = Vector::from_vec(vec![2.0, 0.0]);
        let y = Vector::from_vec(vec![0.0, 5.0]);
        assert_eq!(t.contract(&x, &y)[1], 30.0);
    }

    #[test]
    fn lstsq_overdetermined_consistent() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, rel) = lstsq(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(rel > 0.1);
    }

    #[test]
    fn lstsq_keeps_precision_with_tiny_entries() {
        // Entries near 1e-15 once stalled an SVD-based solve at 1e-5 error.
        let a = Mat::from_row_slice(
            6,
            5,
            &[
                1.0, -1.96e-15, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.3156, 1.0, 0.0, 0.0, //
                0.0, 0.0804, 0.0, 1.0, 0.0, //
                1.27e-15, -0.0687, -0.2045, -0.0521, 1.0, //
                0.0, 1.0, 0.0, 0.0, 0.0,
            ],
        );
        let x = Vector::from_vec(vec![0.2447, 0.0, -0.5082, 0.3237, -0.3628]);
        let (y, _) = lstsq(&a, &(&a * &x)).unwrap();
        assert!((y - x).amax() < 1e-14);
    }
}
