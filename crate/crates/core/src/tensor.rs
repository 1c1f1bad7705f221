//! Dense rank-3 arrays indexed by frame indices.

use crate::Real;
use std::ops::{Index, IndexMut};

/// Cubic `r x r x r` array stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim * dim] }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    t[(i, j, k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Largest deviation from antisymmetry in the first two indices.
    pub fn skew_residual_01(&self) -> T {
        let mut res = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    res = res.max((self[(i, j, k)] + self[(j, i, k)]).abs());
                }
            }
        }
        res
    }

    /// Largest deviation from being alternating in all three indices.
    pub fn alternating_residual(&self) -> T {
        let mut res = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    let v = self[(i, j, k)];
                    res = res
                        .max((v + self[(j, i, k)]).abs())
                        .max((v + self[(i, k, j)]).abs())
                        .max((v + self[(k, j, i)]).abs());
                }
            }
        }
        res
    }

    /// Entrywise difference maximum.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }
}

impl<T> Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &T {
        &self.data[(i * self.dim + j) * self.dim + k]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Tensor3<T> {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut T {
        &mut self.data[(i * self.dim + j) * self.dim + k]
    }
}
