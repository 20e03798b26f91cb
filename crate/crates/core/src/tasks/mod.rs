//! Learning problems: data, non-i.i.d. partitioning, per-device loss and
//! gradient oracles with norm clipping, and noise-free evaluation.

mod dataset;
mod idx;
mod partition;
mod properties;

pub use dataset::{make_softmax, Dataset};
pub use idx::{encode_idx, load_idx_images, parse_idx};
pub use partition::{partition_iid, partition_noniid};
pub use properties::{estimate_properties, random_probes, Estimate, Provenance, TaskProperties};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{axpy, clip_norm, ModelVector};
use crate::rng::rng_from_u64;
use crate::scalar::Scalar;
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file")]
    TruncatedFile,
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),
    #[error("device {0} has an empty shard")]
    EmptyShard(usize),
    #[error("batch fraction {0} outside (0, 1]")]
    BadBatchFraction(f64),
    #[error("{0} shards for {1} devices")]
    ShardCount(usize, usize),
    #[error("model dimension {got} does not match task dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Quadratic,
    Softmax,
    ImageSoftmax,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Quadratic)
    }
}

#[derive(Debug, Clone)]
enum Objective<T> {
    /// Per-point loss `½‖w − x‖²` shifted so that `F_i(w) = ½‖w − a_i‖²`
    /// with `a_i` the shard mean.
    Quadratic { centers: Vec<ModelVector<T>> },
    /// Multinomial logistic regression, weight matrix `classes × feature_dim`.
    Softmax { classes: usize },
}

/// Full-batch, clip-free, noise-free view of the global objective at a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub loss: T,
    pub grad_norm_sq: T,
    pub accuracy: Option<T>,
}

/// A learning problem distributed over the devices of a topology.
#[derive(Debug, Clone)]
pub struct TaskInstance<T> {
    kind: TaskKind,
    model_dim: usize,
    data: Dataset<T>,
    shards: Vec<Vec<usize>>,
    topology: Topology,
    objective: Objective<T>,
    optimum: Option<ModelVector<T>>,
    grad_bound: T,
}

impl<T: Scalar> TaskInstance<T> {
    /// Quadratic task from explicit per-device points; device `i`'s loss is
    /// `½‖w − a_i‖²` where `a_i` is the mean of its points.
    pub fn quadratic_from_points(
        points: Vec<Vec<ModelVector<T>>>,
        topology: &Topology,
        grad_bound: T,
    ) -> Result<Self, TaskError> {
        if points.len() != topology.num_devices() {
            return Err(TaskError::ShardCount(points.len(), topology.num_devices()));
        }
        let dim = points
            .iter()
            .flatten()
            .map(ModelVector::dim)
            .next()
            .ok_or(TaskError::EmptyShard(0))?;
        let mut features = Vec::new();
        let mut shards = Vec::with_capacity(points.len());
        let mut centers = Vec::with_capacity(points.len());
        let mut next = 0;
        for (i, device_points) in points.iter().enumerate() {
            if device_points.is_empty() {
                return Err(TaskError::EmptyShard(i));
            }
            let mut center = ModelVector::zeros(dim);
            let inv = T::one() / T::of_usize(device_points.len());
            for p in device_points {
                if p.dim() != dim {
                    return Err(TaskError::DimensionMismatch { expected: dim, got: p.dim() });
                }
                features.extend_from_slice(p.as_slice());
                center.axpy(inv, p);
            }
            if device_points.len() == 1 {
                center = device_points[0].clone();
            }
            shards.push((next..next + device_points.len()).collect());
            next += device_points.len();
            centers.push(center);
        }
        let labels = vec![0; next];
        let data = Dataset::new(features, dim, labels, 1)?;
        let mut optimum = ModelVector::zeros(dim);
        for (i, a) in centers.iter().enumerate() {
            optimum.axpy(topology.global_weight(i), a);
        }
        Ok(Self {
            kind: TaskKind::Quadratic,
            model_dim: dim,
            data,
            shards,
            topology: topology.clone(),
            objective: Objective::Quadratic { centers },
            optimum: Some(optimum),
            grad_bound,
        })
    }

    /// Softmax classification over pre-partitioned shards.
    pub fn softmax(
        kind: TaskKind,
        data: Dataset<T>,
        shards: Vec<Vec<usize>>,
        topology: &Topology,
        grad_bound: T,
    ) -> Result<Self, TaskError> {
        if shards.len() != topology.num_devices() {
            return Err(TaskError::ShardCount(shards.len(), topology.num_devices()));
        }
        if let Some(i) = shards.iter().position(Vec::is_empty) {
            return Err(TaskError::EmptyShard(i));
        }
        let classes = data.num_classes();
        Ok(Self {
            kind,
            model_dim: classes * data.dim(),
            data,
            shards,
            topology: topology.clone(),
            objective: Objective::Softmax { classes },
            optimum: None,
            grad_bound,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn dataset(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn shard(&self, device: usize) -> &[usize] {
        &self.shards[device]
    }

    pub fn optimum(&self) -> Option<&ModelVector<T>> {
        self.optimum.as_ref()
    }

    pub fn grad_bound(&self) -> T {
        self.grad_bound
    }

    pub fn with_grad_bound(mut self, grad_bound: T) -> Self {
        self.grad_bound = grad_bound;
        self
    }

    /// Per-device centers `a_i` of a quadratic task.
    pub fn centers(&self) -> Option<&[ModelVector<T>]> {
        match &self.objective {
            Objective::Quadratic { centers } => Some(centers),
            Objective::Softmax { .. } => None,
        }
    }

    /// Minibatch size `⌈q·D_i⌉` used for device `device`.
    pub fn batch_size(&self, device: usize, q: f64) -> Result<usize, TaskError> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(TaskError::BadBatchFraction(q));
        }
        let d = self.shards[device].len();
        if d == 0 {
            return Err(TaskError::EmptyShard(device));
        }
        // Guard against q·D landing a hair above an integer.
        let b = (q * d as f64 - 1e-9).ceil().max(1.0) as usize;
        Ok(b.min(d))
    }

    /// Largest realized sampling fraction `⌈q·D_i⌉ / D_i` over all devices.
    pub fn realized_fraction(&self, q: f64) -> Result<f64, TaskError> {
        let mut worst: f64 = 0.0;
        for i in 0..self.shards.len() {
            let b = self.batch_size(i, q)?;
            worst = worst.max(b as f64 / self.shards[i].len() as f64);
        }
        Ok(worst)
    }

    fn check_dim(&self, model: &ModelVector<T>) -> Result<(), TaskError> {
        if model.dim() != self.model_dim {
            return Err(TaskError::DimensionMismatch {
                expected: self.model_dim,
                got: model.dim(),
            });
        }
        Ok(())
    }

    /// Minibatch gradient of `F_i` at `model`, clipped to norm `G`.
    ///
    /// The batch is `⌈q·D_i⌉` points drawn uniformly without replacement;
    /// `q = 1` uses the whole shard in order and consumes no randomness.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        device: usize,
        model: &ModelVector<T>,
        q: f64,
        rng: &mut R,
    ) -> Result<ModelVector<T>, TaskError> {
        self.check_dim(model)?;
        let mut out = ModelVector::zeros(self.model_dim);
        self.stochastic_gradient_into(device, model.as_slice(), q, rng, out.as_mut_slice())?;
        Ok(out)
    }

    pub(crate) fn stochastic_gradient_into<R: Rng + ?Sized>(
        &self,
        device: usize,
        model: &[T],
        q: f64,
        rng: &mut R,
        out: &mut [T],
    ) -> Result<(), TaskError> {
        let b = self.batch_size(device, q)?;
        let shard = &self.shards[device];
        if b == shard.len() {
            self.batch_gradient(shard.iter().copied(), b, model, out);
        } else {
            let picks = rand::seq::index::sample(rng, shard.len(), b);
            self.batch_gradient(picks.iter().map(|p| shard[p]), b, model, out);
        }
        clip_norm(out, self.grad_bound);
        Ok(())
    }

    /// Average per-point gradient over `rows` (no clipping).
    fn batch_gradient(&self, rows: impl Iterator<Item = usize>, count: usize, w: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        let inv = T::one() / T::of_usize(count);
        match &self.objective {
            Objective::Quadratic { .. } => {
                // mean(w − x) = w − mean(x)
                for r in rows {
                    axpy(out, -inv, self.data.row(r));
                }
                axpy(out, T::one(), w);
            }
            Objective::Softmax { classes } => {
                let mut probs = vec![T::zero(); *classes];
                for r in rows {
                    let x = self.data.row(r);
                    let lse = logits(w, x, &mut probs);
                    probs.iter_mut().for_each(|z| *z = (*z - lse).exp());
                    probs[self.data.label(r)] -= T::one();
                    let dim = x.len();
                    for (k, &pk) in probs.iter().enumerate() {
                        axpy(&mut out[k * dim..(k + 1) * dim], pk * inv, x);
                    }
                }
            }
        }
    }

    /// Exact `∇F_i(w)` over the full shard, unclipped.
    pub fn local_gradient(&self, device: usize, model: &ModelVector<T>) -> ModelVector<T> {
        let mut out = ModelVector::zeros(self.model_dim);
        match &self.objective {
            Objective::Quadratic { centers } => {
                out.copy_from(model);
                out.axpy(-T::one(), &centers[device]);
            }
            Objective::Softmax { .. } => {
                let shard = &self.shards[device];
                self.batch_gradient(shard.iter().copied(), shard.len(), model.as_slice(), out.as_mut_slice());
            }
        }
        out
    }

    /// `F_i(w)` over the full shard.
    pub fn local_loss(&self, device: usize, model: &ModelVector<T>) -> T {
        match &self.objective {
            Objective::Quadratic { centers } => T::of(0.5) * model.dist_sq(&centers[device]),
            Objective::Softmax { classes } => {
                let shard = &self.shards[device];
                let mut probs = vec![T::zero(); *classes];
                let total: T = shard
                    .iter()
                    .map(|&r| {
                        let lse = logits(model.as_slice(), self.data.row(r), &mut probs);
                        lse - probs[self.data.label(r)]
                    })
                    .sum();
                total / T::of_usize(shard.len())
            }
        }
    }

    /// `∇F̄_c(w) = Σ_{i∈S_c} ρ_{i,c} ∇F_i(w)`.
    pub fn subnet_gradient(&self, subnet: usize, model: &ModelVector<T>) -> ModelVector<T> {
        let members = self.topology.members(subnet);
        let rho = T::one() / T::of_usize(members.len());
        let mut out = ModelVector::zeros(self.model_dim);
        for i in members {
            out.axpy(rho, &self.local_gradient(i, model));
        }
        out
    }

    /// `∇F(w) = Σ_c ϱ_c ∇F̄_c(w)`.
    pub fn global_gradient(&self, model: &ModelVector<T>) -> ModelVector<T> {
        let mut out = ModelVector::zeros(self.model_dim);
        for i in 0..self.topology.num_devices() {
            out.axpy(self.topology.global_weight(i), &self.local_gradient(i, model));
        }
        out
    }

    /// Global loss, squared gradient norm, and (classification only) accuracy
    /// over every device's shard.
    pub fn evaluate(&self, model: &ModelVector<T>) -> Evaluation<T> {
        match &self.objective {
            Objective::Quadratic { centers } => {
                let mut loss = T::zero();
                for (i, a) in centers.iter().enumerate() {
                    loss += self.topology.global_weight::<T>(i) * T::of(0.5) * model.dist_sq(a);
                }
                let grad = self.global_gradient(model);
                Evaluation { loss, grad_norm_sq: grad.norm_sq(), accuracy: None }
            }
            Objective::Softmax { classes } => {
                let mut loss = T::zero();
                let mut grad = ModelVector::zeros(self.model_dim);
                let mut scratch = ModelVector::zeros(self.model_dim);
                let mut probs = vec![T::zero(); *classes];
                let mut correct = 0usize;
                let mut total = 0usize;
                for (i, shard) in self.shards.iter().enumerate() {
                    let weight = self.topology.global_weight::<T>(i);
                    let mut shard_loss = T::zero();
                    for &r in shard {
                        let x = self.data.row(r);
                        let lse = logits(model.as_slice(), x, &mut probs);
                        let y = self.data.label(r);
                        shard_loss += lse - probs[y];
                        if argmax(&probs) == y {
                            correct += 1;
                        }
                    }
                    total += shard.len();
                    loss += weight * shard_loss / T::of_usize(shard.len());
                    self.batch_gradient(shard.iter().copied(), shard.len(), model.as_slice(), scratch.as_mut_slice());
                    grad.axpy(weight, &scratch);
                }
                Evaluation {
                    loss,
                    grad_norm_sq: grad.norm_sq(),
                    accuracy: Some(T::of_usize(correct) / T::of_usize(total)),
                }
            }
        }
    }

    /// Accuracy and mean cross-entropy of a softmax model on held-out data.
    pub fn evaluate_heldout(&self, model: &ModelVector<T>, data: &Dataset<T>) -> Option<(T, T)> {
        let Objective::Softmax { classes } = &self.objective else {
            return None;
        };
        let mut probs = vec![T::zero(); *classes];
        let mut loss = T::zero();
        let mut correct = 0usize;
        for r in 0..data.len() {
            let lse = logits(model.as_slice(), data.row(r), &mut probs);
            loss += lse - probs[data.label(r)];
            if argmax(&probs) == data.label(r) {
                correct += 1;
            }
        }
        let n = T::of_usize(data.len());
        Some((loss / n, T::of_usize(correct) / n))
    }
}

/// Writes the logits `W x` into `out` and returns their log-sum-exp.
fn logits<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) -> T {
    let dim = x.len();
    for (k, z) in out.iter_mut().enumerate() {
        *z = w[k * dim..(k + 1) * dim].iter().zip(x).map(|(&a, &b)| a * b).sum();
    }
    let max = out.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = out.iter().map(|&z| (z - max).exp()).sum();
    max + sum.ln()
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Desk-scale strongly convex testbed.
///
/// A common center `c₀ ~ N(0, I)` is drawn, each device center `a_i` sits
/// within distance `heterogeneity` of it, and each device holds
/// `points_per_device` points around `a_i` whose empirical mean is exactly
/// `a_i` (typical distance `spread`). `spread = 0` gives exact gradients.
pub fn make_quadratic<T: Scalar>(
    model_dim: usize,
    topology: &Topology,
    heterogeneity: f64,
    spread: f64,
    points_per_device: usize,
    grad_bound: T,
    seed: u64,
) -> Result<TaskInstance<T>, TaskError> {
    if model_dim == 0 {
        return Err(TaskError::InvalidDataset("model_dim must be positive".into()));
    }
    if points_per_device == 0 {
        return Err(TaskError::EmptyShard(0));
    }
    let mut rng = rng_from_u64(seed);
    let common: Vec<f64> = (0..model_dim).map(|_| f64::standard_normal(&mut rng)).collect();
    let scale = 1.0 / (model_dim as f64).sqrt();
    let mut points = Vec::with_capacity(topology.num_devices());
    for _ in 0..topology.num_devices() {
        let dir: Vec<f64> = (0..model_dim).map(|_| f64::standard_normal(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let radius = heterogeneity * rng.random::<f64>();
        let center: Vec<f64> = common
            .iter()
            .zip(&dir)
            .map(|(&c, &d)| c + radius * d / norm)
            .collect();

        let mut offsets: Vec<Vec<f64>> = (0..points_per_device)
            .map(|_| (0..model_dim).map(|_| spread * scale * f64::standard_normal(&mut rng)).collect())
            .collect();
        for j in 0..model_dim {
            let mean = offsets.iter().map(|o| o[j]).sum::<f64>() / points_per_device as f64;
            offsets.iter_mut().for_each(|o| o[j] -= mean);
        }
        if spread == 0.0 || points_per_device == 1 {
            offsets.iter_mut().for_each(|o| o.iter_mut().for_each(|x| *x = 0.0));
        }
        points.push(
            offsets
                .into_iter()
                .map(|o| {
                    ModelVector::from_vec(
                        center.iter().zip(o).map(|(&c, d)| T::of(c + d)).collect(),
                    )
                })
                .collect(),
        );
    }
    let mut task = TaskInstance::quadratic_from_points(points, topology, grad_bound)?;
    // Centers were generated exactly; recentering removes the rounding of the
    // point mean so homogeneous instances have identical centers.
    if spread == 0.0 || points_per_device == 1 {
        return Ok(task);
    }
    if let Objective::Quadratic { centers } = &mut task.objective {
        for (i, c) in centers.iter_mut().enumerate() {
            let shard = &task.shards[i];
            let inv = T::one() / T::of_usize(shard.len());
            let mut mean = ModelVector::zeros(model_dim);
            for &r in shard {
                axpy(mean.as_mut_slice(), inv, task.data.row(r));
            }
            *c = mean;
        }
        let mut optimum = ModelVector::zeros(model_dim);
        for (i, a) in centers.iter().enumerate() {
            optimum.axpy(task.topology.global_weight(i), a);
        }
        task.optimum = Some(optimum);
    }
    Ok(task)
}

/// Softmax task on synthetic clusters with a label-shard partition.
pub fn make_softmax_task<T: Scalar>(
    topology: &Topology,
    model_dim: usize,
    num_classes: usize,
    samples_per_class: usize,
    separation: f64,
    labels_per_device: usize,
    grad_bound: T,
    data_seed: u64,
    partition_seed: u64,
) -> Result<TaskInstance<T>, TaskError> {
    let data = make_softmax(model_dim, num_classes, samples_per_class, separation, data_seed)?;
    let shards = partition_noniid(&data, topology, labels_per_device, partition_seed)?;
    TaskInstance::softmax(TaskKind::Softmax, data, shards, topology, grad_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_u64;
    use crate::topology::{build_topology, TrustPolicy};

    fn two_device_quadratic() -> TaskInstance<f64> {
        let topo = build_topology(1, &[2], &TrustPolicy::all(true, 1)).unwrap();
        TaskInstance::quadratic_from_points(
            vec![
                vec![ModelVector::from_vec(vec![0.0, 0.0])],
                vec![ModelVector::from_vec(vec![2.0, 0.0])],
            ],
            &topo,
            f64::INFINITY,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_optimum_is_weighted_mean() {
        let task = two_device_quadratic();
        assert_eq!(task.optimum().unwrap().as_slice(), &[1.0, 0.0]);
        let eval = task.evaluate(task.optimum().unwrap());
        assert!(eval.grad_norm_sq < 1e-20);
    }

    #[test]
    fn homogeneous_quadratic_loss_and_optimum() {
        let topo = Topology::uniform(2, 3, &TrustPolicy::all(false, 2)).unwrap();
        let task = make_quadratic::<f64>(4, &topo, 0.0, 0.0, 1, f64::INFINITY, 5).unwrap();
        let centers = task.centers().unwrap();
        assert!(centers.iter().all(|c| c == &centers[0]));
        let w_star = task.optimum().unwrap().clone();
        let at_opt = task.evaluate(&w_star);
        assert!(at_opt.loss.abs() < 1e-20);
        assert!(at_opt.grad_norm_sq < 1e-20);

        let mut w = w_star.clone();
        w[0] += 3.0;
        w[2] -= 4.0;
        let eval = task.evaluate(&w);
        assert!((eval.loss - 12.5).abs() < 1e-12);
    }

    #[test]
    fn heterogeneous_optimum_has_zero_gradient() {
        let topo = build_topology(3, &[2, 4, 1], &TrustPolicy::all(false, 3)).unwrap();
        let task = make_quadratic::<f64>(6, &topo, 2.0, 0.5, 7, 1.0, 3).unwrap();
        let eval = task.evaluate(task.optimum().unwrap());
        assert!(eval.grad_norm_sq.sqrt() < 1e-10);
    }

    #[test]
    fn full_batch_gradient_is_exact_and_clipped() {
        let task = two_device_quadratic().with_grad_bound(1.0);
        let w = ModelVector::from_vec(vec![3.0, 0.0]);
        let mut rng = rng_from_u64(0);
        let g = task.stochastic_gradient(0, &w, 1.0, &mut rng).unwrap();
        assert_eq!(g.norm(), 1.0);
        assert_eq!(g.as_slice(), &[1.0, 0.0]);

        let small = ModelVector::from_vec(vec![0.3, 0.4]);
        let g = task.stochastic_gradient(0, &small, 1.0, &mut rng).unwrap();
        assert_eq!(g.as_slice(), &[0.3, 0.4]);
    }

    #[test]
    fn uniform_zero_softmax_loss_is_log_classes() {
        let topo = Topology::uniform(2, 2, &TrustPolicy::all(false, 2)).unwrap();
        let task = make_softmax_task::<f64>(&topo, 50, 5, 20, 1.0, 2, 1.0, 1, 2).unwrap();
        let eval = task.evaluate(&ModelVector::zeros(50));
        assert!((eval.loss - 5f64.ln()).abs() < 1e-9);
        assert!(eval.accuracy.is_some());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let topo = Topology::uniform(1, 2, &TrustPolicy::all(false, 1)).unwrap();
        let task = make_softmax_task::<f64>(&topo, 12, 3, 6, 2.0, 3, f64::INFINITY, 4, 5).unwrap();
        let mut rng = rng_from_u64(9);
        let w = ModelVector::gaussian(12, 0.5, &mut rng);
        let g = task.local_gradient(1, &w);
        let h = 1e-6;
        for j in 0..12 {
            let mut plus = w.clone();
            plus[j] += h;
            let mut minus = w.clone();
            minus[j] -= h;
            let fd = (task.local_loss(1, &plus) - task.local_loss(1, &minus)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "coord {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn batch_size_rounding() {
        let topo = Topology::uniform(1, 1, &TrustPolicy::all(false, 1)).unwrap();
        let task = make_quadratic::<f64>(2, &topo, 0.0, 1.0, 50, 1.0, 0).unwrap();
        assert_eq!(task.batch_size(0, 0.1).unwrap(), 5);
        assert_eq!(task.batch_size(0, 0.101).unwrap(), 6);
        assert_eq!(task.batch_size(0, 0.001).unwrap(), 1);
        assert!(task.batch_size(0, 0.0).is_err());
        assert!(task.batch_size(0, 1.5).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let topo = Topology::uniform(1, 2, &TrustPolicy::all(true, 1)).unwrap();
        let task = make_quadratic::<f32>(3, &topo, 1.0, 0.0, 1, f32::INFINITY, 2).unwrap();
        let eval = task.evaluate(task.optimum().unwrap());
        assert!(eval.grad_norm_sq < 1e-10);
    }
}
