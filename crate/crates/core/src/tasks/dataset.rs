use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::rng::rng_from_u64;
use crate::scalar::Scalar;

/// Row-major feature matrix with one integer label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, TaskError> {
        if dim == 0 || num_classes == 0 {
            return Err(TaskError::InvalidDataset("zero feature dimension or class count".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(TaskError::InvalidDataset(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        let mut seen = vec![false; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(TaskError::InvalidDataset(format!(
                    "label {y} outside [0, {num_classes})"
                )));
            }
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(TaskError::InvalidDataset(format!("class {missing} has no data points")));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Keep only the first `n` rows (all classes must still be present).
    pub fn truncated(&self, n: usize) -> Result<Self, TaskError> {
        let n = n.min(self.len());
        Self::new(
            self.features[..n * self.dim].to_vec(),
            self.dim,
            self.labels[..n].to_vec(),
            self.num_classes,
        )
    }
}

/// Gaussian class clusters for a linear softmax classifier with one weight
/// block per class, so the feature dimension is `model_dim / num_classes`.
///
/// Class means sit at pairwise distance `separation`; within-class noise has
/// per-coordinate std `1/sqrt(feature_dim)` (unit expected norm).
pub fn make_softmax<T: Scalar>(
    model_dim: usize,
    num_classes: usize,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>, TaskError> {
    if num_classes == 0 || model_dim == 0 || model_dim % num_classes != 0 {
        return Err(TaskError::InvalidDataset(format!(
            "model_dim {model_dim} is not a positive multiple of num_classes {num_classes}"
        )));
    }
    if samples_per_class == 0 {
        return Err(TaskError::InvalidDataset("samples_per_class must be positive".into()));
    }
    let dim = model_dim / num_classes;
    let mut rng = rng_from_u64(seed);
    let radius = separation / std::f64::consts::SQRT_2;

    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            if dim >= num_classes {
                let mut m = vec![0.0; dim];
                m[c] = radius;
                m
            } else {
                let dir: Vec<f64> = (0..dim).map(|_| f64::standard_normal(&mut rng)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.into_iter().map(|x| radius * x / norm).collect()
            }
        })
        .collect();

    let noise_std = 1.0 / (dim as f64).sqrt();
    let n = num_classes * samples_per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..samples_per_class {
            features.extend(
                mean.iter()
                    .map(|&m| T::of(m + noise_std * f64::standard_normal(&mut rng))),
            );
            labels.push(c);
        }
    }
    // Interleave classes so that truncated prefixes stay class-balanced.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut shuffled = Vec::with_capacity(n * dim);
    let mut shuffled_labels = Vec::with_capacity(n);
    for &i in &order {
        shuffled.extend_from_slice(&features[i * dim..(i + 1) * dim]);
        shuffled_labels.push(labels[i]);
    }
    Dataset::new(shuffled, dim, shuffled_labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_dimension_7840_gives_784_features() {
        let d = make_softmax::<f64>(7840, 10, 2, 1.0, 0).unwrap();
        assert_eq!(d.dim(), 784);
        assert_eq!(d.len(), 20);
        assert_eq!(d.class_counts(), vec![2; 10]);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = make_softmax::<f64>(40, 4, 5, 2.0, 11).unwrap();
        let b = make_softmax::<f64>(40, 4, 5, 2.0, 11).unwrap();
        assert_eq!(a, b);
        let c = make_softmax::<f64>(40, 4, 5, 2.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_indivisible_dimension() {
        assert!(make_softmax::<f64>(41, 4, 5, 1.0, 0).is_err());
    }

    #[test]
    fn validates_labels() {
        assert!(Dataset::<f64>::new(vec![0.0; 4], 2, vec![0, 2], 3).is_err());
        assert!(Dataset::<f64>::new(vec![0.0; 4], 2, vec![0, 3], 3).is_err());
        assert!(Dataset::<f64>::new(vec![0.0; 4], 2, vec![0, 1], 2).is_ok());
    }
}
