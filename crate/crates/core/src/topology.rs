//! Three-tier hierarchy: devices grouped into subnets, each subnet served by
//! one edge server that is either trusted or semi-honest, and a cloud server
//! on top.

use std::ops::Range;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_u64;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("expected {expected} subnet sizes, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("expected {expected} trust flags, got {got}")]
    TrustMismatch { expected: usize, got: usize },
    #[error("subnet {0} has size 0")]
    EmptySubnet(usize),
    #[error("at least one subnet is required")]
    NoSubnets,
    #[error("trust probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// How edge servers are classified as trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustPolicy {
    Explicit(Vec<bool>),
    /// Each subnet is trusted independently with probability `p`, sampled once.
    Probabilistic { p: f64, seed: u64 },
}

impl TrustPolicy {
    pub fn all(trusted: bool, num_subnets: usize) -> Self {
        TrustPolicy::Explicit(vec![trusted; num_subnets])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub size: usize,
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    num_devices: usize,
    subnets: Vec<SubnetSpec>,
    device_to_subnet: Vec<usize>,
    offsets: Vec<usize>,
}

pub fn build_topology(
    num_subnets: usize,
    subnet_sizes: &[usize],
    trust: &TrustPolicy,
) -> Result<Topology, TopologyError> {
    if num_subnets == 0 {
        return Err(TopologyError::NoSubnets);
    }
    if subnet_sizes.len() != num_subnets {
        return Err(TopologyError::SizeMismatch {
            expected: num_subnets,
            got: subnet_sizes.len(),
        });
    }
    if let Some(c) = subnet_sizes.iter().position(|&s| s == 0) {
        return Err(TopologyError::EmptySubnet(c));
    }
    let trusted = match trust {
        TrustPolicy::Explicit(flags) => {
            if flags.len() != num_subnets {
                return Err(TopologyError::TrustMismatch {
                    expected: num_subnets,
                    got: flags.len(),
                });
            }
            flags.clone()
        }
        TrustPolicy::Probabilistic { p, seed } => {
            if !(0.0..=1.0).contains(p) {
                return Err(TopologyError::BadProbability(*p));
            }
            let mut rng = rng_from_u64(*seed);
            (0..num_subnets).map(|_| rng.random_bool(*p)).collect()
        }
    };

    let subnets: Vec<SubnetSpec> = subnet_sizes
        .iter()
        .zip(trusted)
        .map(|(&size, trusted)| SubnetSpec { size, trusted })
        .collect();
    let mut offsets = Vec::with_capacity(num_subnets + 1);
    offsets.push(0);
    let mut device_to_subnet = Vec::new();
    for (c, s) in subnets.iter().enumerate() {
        device_to_subnet.extend(std::iter::repeat_n(c, s.size));
        offsets.push(device_to_subnet.len());
    }
    Ok(Topology {
        num_devices: device_to_subnet.len(),
        subnets,
        device_to_subnet,
        offsets,
    })
}

impl Topology {
    /// `num_subnets` subnets of equal size.
    pub fn uniform(
        num_subnets: usize,
        subnet_size: usize,
        trust: &TrustPolicy,
    ) -> Result<Self, TopologyError> {
        build_topology(num_subnets, &vec![subnet_size; num_subnets], trust)
    }

    pub fn num_devices(&self) -> usize {
        self.num_devices
    }

    pub fn num_subnets(&self) -> usize {
        self.subnets.len()
    }

    pub fn subnets(&self) -> &[SubnetSpec] {
        &self.subnets
    }

    pub fn subnet_size(&self, c: usize) -> usize {
        self.subnets[c].size
    }

    pub fn is_trusted(&self, c: usize) -> bool {
        self.subnets[c].trusted
    }

    pub fn subnet_of(&self, device: usize) -> usize {
        self.device_to_subnet[device]
    }

    /// Global device indices of subnet `c` (contiguous block).
    pub fn members(&self, c: usize) -> Range<usize> {
        self.offsets[c]..self.offsets[c + 1]
    }

    pub fn trusted_fraction(&self) -> f64 {
        self.subnets.iter().filter(|s| s.trusted).count() as f64 / self.num_subnets() as f64
    }

    pub fn trust_flags(&self) -> Vec<bool> {
        self.subnets.iter().map(|s| s.trusted).collect()
    }

    /// Weight `ϱ_c ρ_{i,c}` of device `i` in the global objective.
    pub fn global_weight<T: Scalar>(&self, device: usize) -> T {
        let s = self.subnet_size(self.subnet_of(device));
        T::one() / (T::of_usize(self.num_subnets()) * T::of_usize(s))
    }
}

/// Aggregation weights, kept exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Weights {
    device: Vec<Ratio<u64>>,
    subnet: Vec<Ratio<u64>>,
}

pub fn weights_of(topology: &Topology) -> Weights {
    let n = topology.num_subnets() as u64;
    Weights {
        device: (0..topology.num_devices())
            .map(|i| Ratio::new(1, topology.subnet_size(topology.subnet_of(i)) as u64))
            .collect(),
        subnet: vec![Ratio::new(1, n); topology.num_subnets()],
    }
}

impl Weights {
    /// `ρ_{i,c}` as an exact rational.
    pub fn device_ratio(&self, device: usize) -> Ratio<u64> {
        self.device[device]
    }

    /// `ϱ_c` as an exact rational.
    pub fn subnet_ratio(&self, c: usize) -> Ratio<u64> {
        self.subnet[c]
    }

    pub fn device_weight<T: Scalar>(&self, device: usize) -> T {
        ratio_to_scalar(self.device[device])
    }

    pub fn subnet_weight<T: Scalar>(&self, c: usize) -> T {
        ratio_to_scalar(self.subnet[c])
    }
}

fn ratio_to_scalar<T: Scalar>(r: Ratio<u64>) -> T {
    T::of(*r.numer() as f64) / T::of(*r.denom() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};

    #[test]
    fn fifty_device_topology() {
        let t = Topology::uniform(10, 5, &TrustPolicy::all(false, 10)).unwrap();
        assert_eq!(t.num_devices(), 50);
        assert_eq!(t.num_subnets(), 10);
        let w = weights_of(&t);
        assert_eq!(w.device_weight::<f64>(17), 0.2);
        assert_eq!(w.subnet_weight::<f64>(3), 0.1);
    }

    #[test]
    fn degenerate_hierarchy() {
        let t = build_topology(1, &[1], &TrustPolicy::Explicit(vec![true])).unwrap();
        assert_eq!(t.num_devices(), 1);
        let w = weights_of(&t);
        assert!(w.device_ratio(0).is_one());
        assert!(w.subnet_ratio(0).is_one());
    }

    #[test]
    fn probability_one_trusts_everyone() {
        let t = build_topology(2, &[5, 25], &TrustPolicy::Probabilistic { p: 1.0, seed: 7 }).unwrap();
        assert!(t.is_trusted(0) && t.is_trusted(1));
        let w = weights_of(&t);
        assert_eq!(w.device_weight::<f64>(0), 0.2);
        assert_eq!(w.device_weight::<f64>(10), 0.04);
        assert_eq!(w.subnet_weight::<f64>(0), 0.5);
        assert_eq!(w.subnet_weight::<f64>(1), 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        let none = TrustPolicy::all(false, 2);
        assert_eq!(
            build_topology(2, &[5], &none),
            Err(TopologyError::SizeMismatch { expected: 2, got: 1 })
        );
        assert_eq!(build_topology(2, &[5, 0], &none), Err(TopologyError::EmptySubnet(1)));
        assert_eq!(
            build_topology(1, &[5], &TrustPolicy::Probabilistic { p: 1.5, seed: 0 }),
            Err(TopologyError::BadProbability(1.5))
        );
        assert_eq!(build_topology(0, &[], &none), Err(TopologyError::NoSubnets));
    }

    #[test]
    fn weights_are_exact() {
        let t = build_topology(3, &[3, 7, 1], &TrustPolicy::all(true, 3)).unwrap();
        let w = weights_of(&t);
        for c in 0..3 {
            let total: Ratio<u64> = t.members(c).map(|i| w.device_ratio(i)).sum();
            assert!(total.is_one());
        }
        let total: Ratio<u64> = (0..3).map(|c| w.subnet_ratio(c)).sum();
        assert!((total - Ratio::one()).is_zero());
    }

    #[test]
    fn contiguous_membership() {
        let t = build_topology(3, &[2, 3, 1], &TrustPolicy::all(false, 3)).unwrap();
        assert_eq!(t.members(1), 2..5);
        assert_eq!(t.subnet_of(5), 2);
    }
}
