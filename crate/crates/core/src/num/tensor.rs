use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

/// Scalar types the numeric core is generic over: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum NumError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("matmul dimension mismatch: {left:?} x {right:?}")]
    MatmulMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { len: usize, shape: Vec<usize> },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("expected a scalar node, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{0}")]
    Invalid(String),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NumError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NumError::BadLength { len: data.len(), shape });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: "construction" });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn full(shape: Vec<usize>, v: T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![v; n] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![], data: vec![v] }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn scalar_value(&self) -> Result<T, NumError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(NumError::NotScalar { shape: self.shape.clone() })
        }
    }

    /// Rows/cols view for 2-D ops; 1-D tensors count as a single row.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let r: usize = self.shape[..self.shape.len() - 1].iter().product();
                (r, self.shape[self.shape.len() - 1])
            }
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, NumError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(NumError::BadLength { len: self.data.len(), shape });
        }
        Ok(Self { shape, data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, NumError> {
        if self.shape != other.shape {
            return Err(NumError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumError> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, NumError> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, NumError> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(NumError::MatmulMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (r, k, c) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                for j in 0..c {
                    out[i * c + j] = out[i * c + j] + a * other.data[p * c + j];
                }
            }
        }
        Ok(Self { shape: vec![r, c], data: out })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn elementwise_multiply() {
        let a = T64::from_vec(vec![1.0, 2.0]);
        let b = T64::from_vec(vec![3.0, 4.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[3.0, 8.0]);
    }

    #[test]
    fn add_zero_identity() {
        let a = T64::from_vec(vec![0.0, 0.0]);
        let b = T64::from_vec(vec![5.0, -5.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[5.0, -5.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = T64::zeros(vec![2]);
        let b = T64::zeros(vec![3]);
        match a.add(&b) {
            Err(NumError::ShapeMismatch { left, right }) => {
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn matmul_identity() {
        let id = T64::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = T64::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(id.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_selector_row() {
        let sel = T64::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let v = T64::new(vec![2, 1], vec![7.0, 9.0]).unwrap();
        assert_eq!(sel.matmul(&v).unwrap().data(), &[7.0]);
    }

    #[test]
    fn matmul_matches_schoolbook_oracle() {
        // Independent triple-loop oracle on a random-ish 3x3 case.
        let a = T64::new(vec![3, 3], vec![0.3, -1.2, 2.0, 0.7, 0.1, -0.4, 1.5, 2.2, -0.9]).unwrap();
        let b = T64::new(vec![3, 3], vec![1.1, 0.2, -0.7, 0.5, -1.3, 0.9, 2.4, 0.6, 0.8]).unwrap();
        let mut expected = [0.0f64; 9];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a.data()[i * 3 + k] * b.data()[k * 3 + j];
                }
                expected[i * 3 + j] = acc;
            }
        }
        let got = a.matmul(&b).unwrap();
        for (g, e) in got.data().iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(T64::new(vec![1], vec![f64::NAN]).is_err());
    }
}
