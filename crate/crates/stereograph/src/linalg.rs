//! Dense vector/matrix helpers over any [`Scalar`] backend.

use crate::autodiff::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|r| S::dot(self.row(r), x)).collect()
    }
}

impl Matrix<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    S::dot(a, b)
}

pub fn norm_sq<S: Scalar>(x: &[S]) -> S {
    S::dot(x, x)
}

/// Euclidean norm with the subgradient-0 convention at the origin: a zero
/// vector yields a constant 0 so no NaN enters the backward pass.
pub fn norm<S: Scalar>(x: &[S]) -> S {
    let sq = norm_sq(x);
    if sq.value() == 0.0 {
        sq.lift(0.0)
    } else {
        sq.sqrt()
    }
}

pub fn scale<S: Scalar>(x: &[S], c: S) -> Vec<S> {
    x.iter().map(|&v| v * c).collect()
}

pub fn scale_f64<S: Scalar>(x: &[S], c: f64) -> Vec<S> {
    x.iter().map(|&v| v * c).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn neg<S: Scalar>(a: &[S]) -> Vec<S> {
    a.iter().map(|&x| -x).collect()
}

/// Mean of equally-shaped vectors. Panics on an empty set.
pub fn mean<S: Scalar>(vs: &[Vec<S>]) -> Vec<S> {
    assert!(!vs.is_empty());
    let d = vs[0].len();
    let inv = 1.0 / vs.len() as f64;
    (0..d)
        .map(|i| {
            let col: Vec<S> = vs.iter().map(|v| v[i]).collect();
            S::sum(&col) * inv
        })
        .collect()
}

pub fn values<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(|v| v.value()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let m = Matrix::identity(3);
        let x = vec![1.0, -2.0, 0.5];
        assert_eq!(m.matvec(&x), x);
    }

    #[test]
    fn norm_zero_vector_is_exact_zero() {
        let z = vec![0.0f64; 4];
        assert_eq!(norm(&z), 0.0);
    }

    #[test]
    fn mean_of_identical_vectors() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(mean(&v), vec![1.0, 2.0]);
    }
}
