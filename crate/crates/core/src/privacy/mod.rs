//! Gaussian-mechanism calibration for hierarchical releases.
//!
//! Every release is an accumulated, step-size-scaled sum of clipped gradients.
//! Its L2 sensitivity is `2 η τ G` for a single device and `2 η τ G / s_c`
//! for a subnet average, and the noise standard deviation for `L` composed
//! releases is `c · q · Δ · √(L ln(1/δ)) / ε`.
//!
//! The mechanism constants `c₁, c₂, v₁, v₂` default to 1. They preserve every
//! scaling relation but are not a tight accountant; do not use the defaults
//! for deployment-grade guarantees.

mod calibration;
mod ledger;

pub use calibration::{calibrate, NoisePlan, SubnetNoise};
pub use ledger::{Entity, EventKind, PrivacyLedger, Release, Tier};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelVector;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PrivacyError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("sampling probability q must lie in (0, 1], got {0}")]
    BadSamplingRate(f64),
    #[error("mechanism constant {name} must be positive, got {value}")]
    BadConstant { name: &'static str, value: f64 },
    #[error("DP requires a finite gradient bound, got {0}")]
    UnboundedGradient(f64),
    #[error("no releases planned (L = 0) but a privacy budget was requested")]
    NoReleases,
    #[error("ε ≥ c₁qL: epsilon {epsilon} is not below {constant}·{q}·{releases} = {bound}")]
    BudgetTooLarge { epsilon: f64, constant: f64, q: f64, releases: usize, bound: f64 },
    #[error("over-budget release: {entity} already made {planned} planned {event} releases")]
    OverBudget { entity: Entity, event: EventKind, planned: usize },
}

/// `(ε, δ)` target, sampling probability, clipping bound and mechanism constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub v1: f64,
    pub v2: f64,
    pub grad_bound: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64, q: f64, grad_bound: f64) -> Self {
        Self { epsilon, delta, q, c1: 1.0, c2: 1.0, v1: 1.0, v2: 1.0, grad_bound }
    }

    pub fn check(&self) -> Result<(), PrivacyError> {
        if !(self.epsilon > 0.0) {
            return Err(PrivacyError::NonPositiveEpsilon(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PrivacyError::BadDelta(self.delta));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(PrivacyError::BadSamplingRate(self.q));
        }
        for (name, value) in [("c1", self.c1), ("c2", self.c2), ("v1", self.v1), ("v2", self.v2)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PrivacyError::BadConstant { name, value });
            }
        }
        Ok(())
    }
}

/// L2 sensitivities of one subnet's releases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySet<T> {
    pub edge_local: T,
    pub device_local: T,
    pub edge_global: T,
    pub device_global: T,
}

/// Sensitivity of `η Σ_{ℓ} ĝ` over an interval of `tau` clipped steps.
pub fn sensitivities<T: Scalar>(eta: T, tau: usize, grad_bound: T, subnet_size: usize) -> SensitivitySet<T> {
    let device = T::of(2.0) * eta * T::of_usize(tau) * grad_bound;
    let edge = device / T::of_usize(subnet_size);
    SensitivitySet {
        edge_local: edge,
        device_local: device,
        edge_global: edge,
        device_global: device,
    }
}

/// `constant · q · Δ · √(L ln(1/δ)) / ε`.
pub fn noise_std<T: Scalar>(
    constant: T,
    q: T,
    sensitivity: T,
    releases: usize,
    delta: T,
    epsilon: T,
) -> Result<T, PrivacyError> {
    if !(epsilon > T::zero()) {
        return Err(PrivacyError::NonPositiveEpsilon(epsilon.to_f64_lossy()));
    }
    if sensitivity == T::zero() {
        return Ok(T::zero());
    }
    let composed = (T::of_usize(releases) * (T::one() / delta).ln()).sqrt();
    Ok(constant * q * sensitivity * composed / epsilon)
}

/// Ok iff `ε < c₁ q L`.
pub fn validate_budget(spec: &PrivacySpec, releases: usize) -> Result<(), PrivacyError> {
    validate_with(spec.epsilon, spec.c1, spec.q, releases)
}

pub(crate) fn validate_with(epsilon: f64, constant: f64, q: f64, releases: usize) -> Result<(), PrivacyError> {
    if releases == 0 {
        return Err(PrivacyError::NoReleases);
    }
    let bound = constant * q * releases as f64;
    if epsilon < bound {
        Ok(())
    } else {
        Err(PrivacyError::BudgetTooLarge { epsilon, constant, q, releases, bound })
    }
}

/// Single-release Gaussian-mechanism condition `Δ² ≤ 2 ln(1.25/δ) / ε²`
/// for a unit-variance mechanism. Informational; calibration uses
/// [`noise_std`].
pub fn single_release_condition(sensitivity: f64, epsilon: f64, delta: f64) -> bool {
    sensitivity * sensitivity <= 2.0 * (1.25 / delta).ln() / (epsilon * epsilon)
}

/// `N(0, σ² I_M)`; a zero σ returns the zero vector without consuming randomness.
pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(sigma: T, dim: usize, rng: &mut R) -> ModelVector<T> {
    if sigma == T::zero() {
        return ModelVector::zeros(dim);
    }
    ModelVector::gaussian(dim, sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_u64;

    // 0.1·0.08·√(40 ln 10⁵) and 0.1·0.4·√(40 ln 10⁵), evaluated at 50 digits.
    const EDGE_GOLDEN: f64 = 0.171_677_282_103_147_78;
    const DEVICE_GOLDEN: f64 = 0.858_386_410_515_738_9;

    #[test]
    fn sensitivity_formula() {
        let s = sensitivities(0.01_f64, 20, 1.0, 5);
        assert!((s.device_local - 0.4).abs() < 1e-15);
        assert!((s.edge_local - 0.08).abs() < 1e-15);
        assert_eq!(s.edge_global, s.device_global / 5.0);

        let single = sensitivities(0.3_f64, 7, 2.0, 1);
        assert_eq!(single.edge_local, single.device_local);
    }

    #[test]
    fn noise_std_goldens() {
        let edge = noise_std(1.0, 0.1, 0.08, 40, 1e-5, 1.0).unwrap();
        assert!((edge - EDGE_GOLDEN).abs() / EDGE_GOLDEN < 1e-12);
        let device = noise_std(1.0, 0.1, 0.4, 40, 1e-5, 1.0).unwrap();
        assert!((device - DEVICE_GOLDEN).abs() / DEVICE_GOLDEN < 1e-12);
    }

    #[test]
    fn noise_std_edge_cases() {
        assert_eq!(noise_std(1.0, 0.1, 0.0, 40, 1e-5, 1.0).unwrap(), 0.0);
        let one = noise_std(1.0, 0.1, 0.3, 40, 1e-5, 1.0).unwrap();
        let two = noise_std(1.0, 0.1, 0.3, 40, 1e-5, 2.0).unwrap();
        assert_eq!(two, one / 2.0);
        assert!(noise_std(1.0, 0.1, 0.3, 40, 1e-5, 0.0).is_err());
        assert!(noise_std(1.0, 0.1, 0.3, 40, 1e-5, -1.0).is_err());
        assert_eq!(noise_std(1.0, 0.1, 0.3, 40, 1e-5, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn budget_validation() {
        let mut spec = PrivacySpec::new(1.0, 1e-5, 0.1, 1.0);
        assert!(validate_budget(&spec, 40).is_ok());
        spec.epsilon = 5.0;
        let err = validate_budget(&spec, 40).unwrap_err();
        assert!(err.to_string().starts_with("ε ≥ c₁qL"));
        spec.epsilon = 1.0;
        assert_eq!(validate_budget(&spec, 0), Err(PrivacyError::NoReleases));
    }

    #[test]
    fn spec_checks() {
        assert!(PrivacySpec::new(1.0, 1e-5, 0.1, 1.0).check().is_ok());
        assert!(PrivacySpec::new(0.0, 1e-5, 0.1, 1.0).check().is_err());
        assert!(PrivacySpec::new(1.0, 1.0, 0.1, 1.0).check().is_err());
        assert!(PrivacySpec::new(1.0, 1e-5, 0.0, 1.0).check().is_err());
    }

    #[test]
    fn zero_sigma_noise_is_zero() {
        let mut rng = rng_from_u64(1);
        assert!(sample_noise(0.0_f64, 7, &mut rng).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_moments() {
        let mut rng = rng_from_u64(42);
        let m = 10_000;
        let draws = 100;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let n = sample_noise(1.0_f64, m, &mut rng);
            sum += n.iter().sum::<f64>();
            sum_sq += n.norm_sq();
        }
        let count = (m * draws) as f64;
        let mean = sum / count;
        let var = sum_sq / count - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn expected_squared_norm() {
        let mut rng = rng_from_u64(7);
        let (m, sigma, draws) = (50, 0.7_f64, 1000);
        let mean_sq: f64 = (0..draws).map(|_| sample_noise(sigma, m, &mut rng).norm_sq()).sum::<f64>()
            / draws as f64;
        let expected = m as f64 * sigma * sigma;
        assert!((mean_sq - expected).abs() / expected < 0.03);
    }

    #[test]
    fn gaussian_condition_helper() {
        assert!(single_release_condition(1.0, 1.0, 1e-5));
        assert!(!single_release_condition(10.0, 1.0, 1e-5));
    }
}
