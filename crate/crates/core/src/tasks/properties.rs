use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, TaskInstance};
use crate::model::ModelVector;
use crate::rng::rng_from_u64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Analytic,
    /// Maximum over `probes` evaluations; a lower bound on the true constant.
    Estimated { probes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub value: T,
    pub provenance: Provenance,
}

impl<T> Estimate<T> {
    pub fn analytic(value: T) -> Self {
        Self { value, provenance: Provenance::Analytic }
    }

    pub fn estimated(value: T, probes: usize) -> Self {
        Self { value, provenance: Provenance::Estimated { probes } }
    }
}

/// Smoothness, gradient-diversity and SGD-noise constants of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProperties<T> {
    pub beta: Estimate<T>,
    pub zeta: Estimate<T>,
    pub zeta_c: Vec<Estimate<T>>,
    pub sigma_sgd: Estimate<T>,
}

impl<T: Scalar> TaskProperties<T> {
    pub fn max_zeta_c(&self) -> T {
        self.zeta_c.iter().map(|e| e.value).fold(T::zero(), T::max)
    }
}

/// Constants of `task`. Quadratic tasks return closed forms; other kinds
/// take maxima over the probe models.
///
/// `beta` uses `probe_pairs` random pairs per probe model, `sigma_sgd` draws
/// `probe_pairs` minibatches of fraction `q` per device per probe.
pub fn estimate_properties<T: Scalar>(
    task: &TaskInstance<T>,
    probe_models: &[ModelVector<T>],
    probe_pairs: usize,
    q: f64,
    seed: u64,
) -> TaskProperties<T> {
    if let Objective::Quadratic { centers } = &task.objective {
        return quadratic_properties(task, centers);
    }
    assert!(!probe_models.is_empty(), "at least one probe model is required");
    let topo = task.topology();
    let mut rng = rng_from_u64(seed);
    let dim = task.model_dim();

    let mut beta = T::zero();
    let mut beta_probes = 0;
    let mut zeta = T::zero();
    let mut zeta_c = vec![T::zero(); topo.num_subnets()];
    let mut sigma = T::zero();
    let mut sigma_probes = 0;

    for w in probe_models {
        let local: Vec<ModelVector<T>> =
            (0..topo.num_devices()).map(|i| task.local_gradient(i, w)).collect();
        let global = task.global_gradient(w);
        for c in 0..topo.num_subnets() {
            let members = topo.members(c);
            let rho = T::one() / T::of_usize(members.len());
            let mut subnet = ModelVector::zeros(dim);
            for i in members.clone() {
                subnet.axpy(rho, &local[i]);
            }
            zeta = zeta.max(subnet.dist_sq(&global).sqrt());
            for i in members {
                zeta_c[c] = zeta_c[c].max(local[i].dist_sq(&subnet).sqrt());
            }
        }

        let scale = T::of(1e-2) * (T::one() + w.norm()) / T::of_usize(dim).sqrt();
        for _ in 0..probe_pairs {
            let mut other = ModelVector::gaussian(dim, scale, &mut rng);
            other.axpy(T::one(), w);
            let gap = w.dist_sq(&other).sqrt();
            if gap == T::zero() {
                continue;
            }
            for (i, g) in local.iter().enumerate() {
                let ratio = g.dist_sq(&task.local_gradient(i, &other)).sqrt() / gap;
                beta = beta.max(ratio);
            }
            beta_probes += 1;

            for (i, g) in local.iter().enumerate() {
                if let Ok(sample) = task.stochastic_gradient(i, w, q, &mut rng) {
                    sigma = sigma.max(sample.dist_sq(g).sqrt());
                    sigma_probes += 1;
                }
            }
        }
    }
    let probes = probe_models.len();
    TaskProperties {
        beta: Estimate::estimated(beta, beta_probes),
        zeta: Estimate::estimated(zeta, probes),
        zeta_c: zeta_c.into_iter().map(|z| Estimate::estimated(z, probes)).collect(),
        sigma_sgd: Estimate::estimated(sigma, sigma_probes),
    }
}

fn quadratic_properties<T: Scalar>(
    task: &TaskInstance<T>,
    centers: &[ModelVector<T>],
) -> TaskProperties<T> {
    let topo = task.topology();
    let n = topo.num_subnets();
    // Gradient differences are constant: ∇F_i − ∇F̄_c = ā_c − a_i.
    // Writing ā_c − a_i = Σ_j ρ_j (a_j − a_i) keeps identical centers exactly zero.
    let offset_from = |members: std::ops::Range<usize>, anchor: &ModelVector<T>| {
        let rho = T::one() / T::of_usize(members.len());
        let mut out = ModelVector::zeros(anchor.dim());
        for j in members {
            for (o, (&a, &b)) in out.as_mut_slice().iter_mut().zip(centers[j].iter().zip(anchor.iter())) {
                *o += rho * (a - b);
            }
        }
        out
    };

    let zeta_c: Vec<Estimate<T>> = (0..n)
        .map(|c| {
            let worst = topo
                .members(c)
                .map(|i| offset_from(topo.members(c), &centers[i]).norm())
                .fold(T::zero(), T::max);
            Estimate::analytic(worst)
        })
        .collect();

    // ∇F̄_c − ∇F = ā − ā_c = Σ_d ϱ_d (ā_d − ā_c).
    let subnet_means: Vec<ModelVector<T>> = (0..n)
        .map(|c| {
            let anchor = &centers[topo.members(c).start];
            let mut m = offset_from(topo.members(c), anchor);
            m.axpy(T::one(), anchor);
            m
        })
        .collect();
    let inv_n = T::one() / T::of_usize(n);
    let mut zeta = T::zero();
    for c in 0..n {
        let mut diff = ModelVector::zeros(task.model_dim());
        for d in 0..n {
            for (o, (&a, &b)) in diff
                .as_mut_slice()
                .iter_mut()
                .zip(subnet_means[d].iter().zip(subnet_means[c].iter()))
            {
                *o += inv_n * (a - b);
            }
        }
        zeta = zeta.max(diff.norm());
    }

    // A minibatch mean lies in the convex hull of the shard, so
    // ‖ĝ − ∇F_i‖ = ‖mean(batch) − a_i‖ ≤ max_j ‖x_j − a_i‖.
    let mut sigma = T::zero();
    for (i, a) in centers.iter().enumerate() {
        for &r in task.shard(i) {
            let d: T = task
                .dataset()
                .row(r)
                .iter()
                .zip(a.iter())
                .map(|(&x, &c)| (x - c) * (x - c))
                .sum();
            sigma = sigma.max(d.sqrt());
        }
    }

    TaskProperties {
        beta: Estimate::analytic(T::one()),
        zeta: Estimate::analytic(zeta),
        zeta_c,
        sigma_sgd: Estimate::analytic(sigma),
    }
}

/// Random probe models around the origin with coordinate std `scale`.
pub fn random_probes<T: Scalar, R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    scale: T,
    rng: &mut R,
) -> Vec<ModelVector<T>> {
    (0..count).map(|_| ModelVector::gaussian(dim, scale, rng)).collect()
}
