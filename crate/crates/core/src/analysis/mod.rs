//! Theoretical quantities (model dispersion, dispersion bounds, convergence
//! bound terms) and their comparison against recorded runs.

mod bounds;
mod theorem;

pub use bounds::{bound_constants, check_dispersion_bounds, BoundConstants, BoundInputs, DispersionReport};
pub use theorem::{term_a1, term_a2, term_b, theorem_report, FStar, TheoremReport};

use serde::{Deserialize, Serialize};

use crate::model::{axpy, ModelVector};
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Intra-subnet (`z1`) and inter-subnet (`z2`) dispersion at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub t: usize,
    pub z1: f64,
    pub z2: f64,
}

/// `Z₁ = Σ_c ϱ_c Σ_j ρ_j ‖w_j − w̄_c‖²` and `Z₂ = Σ_c ϱ_c ‖w̄_c − w̄‖²`, where
/// `w̄_c = Σ_j ρ_j w_j` and `w̄ = Σ_c ϱ_c w̄_c` are the auxiliary averages of
/// the device models at one instant.
pub fn measure_dispersion<T: Scalar>(topology: &Topology, devices: &[ModelVector<T>], t: usize) -> DispersionSample {
    let n = topology.num_subnets();
    let dim = devices.first().map_or(0, ModelVector::dim);
    let varrho = T::one() / T::of_usize(n);
    let mut global = vec![T::zero(); dim];
    let mut subnet_means = Vec::with_capacity(n);
    let mut z1 = T::zero();
    for c in 0..n {
        let members = topology.members(c);
        let rho = T::one() / T::of_usize(members.len());
        let mut mean = vec![T::zero(); dim];
        for j in members.clone() {
            axpy(&mut mean, rho, devices[j].as_slice());
        }
        let mut spread = T::zero();
        for j in members {
            spread += rho * sq_dist(devices[j].as_slice(), &mean);
        }
        z1 += varrho * spread;
        axpy(&mut global, varrho, &mean);
        subnet_means.push(mean);
    }
    let z2 = subnet_means.iter().map(|m| varrho * sq_dist(m, &global)).sum::<T>();
    DispersionSample { t, z1: z1.to_f64_lossy(), z2: z2.to_f64_lossy() }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}
