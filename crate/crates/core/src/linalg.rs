//! Dense complex matrices and the handful of vector kernels the simulator needs.
//!
//! Storage is row-major double precision. Diagonal reflecting matrices are never
//! materialized; callers apply them as elementwise scaling of a vector.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    /// Matrix product `self * rhs`.
    ///
    /// Panics on mismatched inner dimensions.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|r| dot_u(self.row(r), x)).collect()
    }

    /// `self^H * x`, without forming the adjoint.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, x.len(), "adjoint_mul_vec dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm_sqr(&self.data).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|z| z * factor)
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Unconjugated sum `Σ a_i b_i`.
pub fn dot_u(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hermitian inner product `Σ conj(a_i) b_i`.
pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

/// Real inner product of complex vectors viewed as real vectors of twice the length.
pub fn real_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn hadamard(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `l_p` norm for `p >= 1`, scaled by the largest modulus to avoid overflow.
pub fn lp_norm(v: &[C64], p: f64) -> f64 {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let sum: f64 = v.iter().map(|z| (z.norm() / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn matrix_4x4() -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 16).prop_map(|v| {
            ComplexMatrix::from_vec(4, 4, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(ComplexMatrix::from_vec(2, 3, vec![c(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn small_product() {
        let a = ComplexMatrix::from_vec(1, 2, vec![c(1.0, 1.0), c(0.0, 2.0)]).unwrap();
        let b = ComplexMatrix::from_vec(2, 1, vec![c(2.0, 0.0), c(1.0, -1.0)]).unwrap();
        // (1+j)2 + 2j(1-j) = 2+2j + 2j + 2
        assert_eq!(a.matmul(&b).as_slice(), &[c(4.0, 4.0)]);
    }

    #[test]
    fn adjoint_mul_vec_matches_explicit_adjoint() {
        let a = ComplexMatrix::from_fn(3, 2, |r, k| c(r as f64 + 0.5, k as f64 - 1.0));
        let x = vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)];
        assert_eq!(a.adjoint().mul_vec(&x), a.adjoint_mul_vec(&x));
    }

    #[test]
    fn lp_norm_limits() {
        let v = vec![c(3.0, 4.0), c(0.0, 1.0)];
        assert!((lp_norm(&v, 2.0) - 26f64.sqrt()).abs() < 1e-12);
        assert!((lp_norm(&v, 400.0) - 5.0).abs() < 1e-3);
        assert_eq!(lp_norm(&[], 4.0), 0.0);
    }

    proptest! {
        #[test]
        fn frobenius_submultiplicative(a in matrix_4x4(), b in matrix_4x4()) {
            let lhs = a.matmul(&b).frobenius_norm();
            prop_assert!(lhs <= a.frobenius_norm() * b.frobenius_norm() * (1.0 + 1e-12));
        }

        #[test]
        fn adjoint_is_an_involution(a in matrix_4x4()) {
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }
    }
}
