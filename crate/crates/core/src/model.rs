use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A point in parameter space, `w ∈ R^M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector<T>(Vec<T>);

impl<T: Scalar> ModelVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn from_vec(coords: Vec<T>) -> Self {
        Self(coords)
    }

    /// Coordinates drawn i.i.d. from `N(0, std^2)`.
    pub fn gaussian<R: Rng + ?Sized>(dim: usize, std: T, rng: &mut R) -> Self {
        Self((0..dim).map(|_| std * T::standard_normal(rng)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn norm_sq(&self) -> T {
        self.0.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(&a, &b)| a * b).sum()
    }

    pub fn dist_sq(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        axpy(&mut self.0, alpha, &other.0);
    }

    pub fn scale(&mut self, alpha: T) {
        self.0.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.0.copy_from_slice(&other.0);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Project onto the L2 ball of radius `bound`; returns whether the vector was shrunk.
    /// An infinite bound disables clipping.
    pub fn clip_norm(&mut self, bound: T) -> bool {
        clip_norm(&mut self.0, bound)
    }
}

impl<T> Index<usize> for ModelVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for ModelVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn clip_norm<T: Scalar>(v: &mut [T], bound: T) -> bool {
    if bound.is_infinite() {
        return false;
    }
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > bound {
        let factor = bound / norm;
        v.iter_mut().for_each(|x| *x *= factor);
        true
    } else {
        false
    }
}
