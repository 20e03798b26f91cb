use serde::{Deserialize, Serialize};

use super::{noise_std, sensitivities, validate_with, PrivacyError, PrivacySpec, SensitivitySet};
use crate::engine::{Schedule, StepSizeSchedule};
use crate::topology::Topology;

/// Noise scales of one subnet's four release classes, with the sensitivities
/// they were calibrated against (maxima over intervals).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubnetNoise {
    pub sigma_edge_local: f64,
    pub sigma_device_local: f64,
    pub sigma_edge_global: f64,
    pub sigma_device_global: f64,
    pub sensitivity: SensitivitySet<f64>,
}

/// Per-subnet noise plan plus the release counts it was composed over.
///
/// The plan is trust-agnostic: both edge and device scales are always
/// computed, and the engine consumes whichever matches the subnet's server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub dp_enabled: bool,
    /// `ε`, or `None` when DP is disabled.
    pub epsilon: Option<f64>,
    pub delta: f64,
    /// Sampling fraction the scales were calibrated with.
    pub q: f64,
    pub subnets: Vec<SubnetNoise>,
    /// `ℓ_c`, identical for every subnet.
    pub local_events: usize,
    /// `K_g`.
    pub global_events: usize,
}

impl NoisePlan {
    /// DP switched off: every scale is zero, releases are still counted.
    pub fn disabled(topology: &Topology, schedule: &Schedule) -> Self {
        let zero = SubnetNoise {
            sigma_edge_local: 0.0,
            sigma_device_local: 0.0,
            sigma_edge_global: 0.0,
            sigma_device_global: 0.0,
            sensitivity: SensitivitySet {
                edge_local: 0.0,
                device_local: 0.0,
                edge_global: 0.0,
                device_global: 0.0,
            },
        };
        Self {
            dp_enabled: false,
            epsilon: None,
            delta: 0.0,
            q: 0.0,
            subnets: vec![zero; topology.num_subnets()],
            local_events: schedule.total_local(),
            global_events: schedule.global_rounds(),
        }
    }

    pub fn subnet(&self, c: usize) -> &SubnetNoise {
        &self.subnets[c]
    }
}

/// Calibrate every subnet's four noise scales.
///
/// Sensitivities use the per-interval `η_k τ_k`; the stored σ is the maximum
/// over intervals. Local scales compose over `ℓ_c` releases, global scales
/// over `K_g`. An infinite `ε` yields the disabled plan.
pub fn calibrate(
    spec: &PrivacySpec,
    topology: &Topology,
    schedule: &Schedule,
    steps: &StepSizeSchedule,
) -> Result<NoisePlan, PrivacyError> {
    spec.check()?;
    if spec.epsilon.is_infinite() {
        return Ok(NoisePlan::disabled(topology, schedule));
    }
    if !(spec.grad_bound > 0.0 && spec.grad_bound.is_finite()) {
        return Err(PrivacyError::UnboundedGradient(spec.grad_bound));
    }
    let local_events = schedule.total_local();
    let global_events = schedule.global_rounds();

    let any_untrusted = (0..topology.num_subnets()).any(|c| !topology.is_trusted(c));
    if local_events > 0 {
        validate_with(spec.epsilon, spec.c1, spec.q, local_events)?;
        if any_untrusted {
            validate_with(spec.epsilon, spec.v1, spec.q, local_events)?;
        }
    }
    validate_with(spec.epsilon, spec.c1, spec.q, global_events)?;
    if any_untrusted {
        validate_with(spec.epsilon, spec.v1, spec.q, global_events)?;
    }

    let subnets = (0..topology.num_subnets())
        .map(|c| {
            let s_c = topology.subnet_size(c);
            let mut out = SubnetNoise {
                sigma_edge_local: 0.0,
                sigma_device_local: 0.0,
                sigma_edge_global: 0.0,
                sigma_device_global: 0.0,
                sensitivity: SensitivitySet {
                    edge_local: 0.0,
                    device_local: 0.0,
                    edge_global: 0.0,
                    device_global: 0.0,
                },
            };
            for k in 0..global_events {
                let eta: f64 = steps.step_size(k);
                let sens = sensitivities(eta, schedule.tau(k), spec.grad_bound, s_c);
                let std = |constant, delta_s, releases| {
                    noise_std(constant, spec.q, delta_s, releases, spec.delta, spec.epsilon)
                };
                if schedule.local_count(k) > 0 {
                    out.sigma_edge_local = out.sigma_edge_local.max(std(spec.c2, sens.edge_local, local_events)?);
                    out.sigma_device_local =
                        out.sigma_device_local.max(std(spec.v2, sens.device_local, local_events)?);
                    out.sensitivity.edge_local = out.sensitivity.edge_local.max(sens.edge_local);
                    out.sensitivity.device_local = out.sensitivity.device_local.max(sens.device_local);
                }
                out.sigma_edge_global = out.sigma_edge_global.max(std(spec.c2, sens.edge_global, global_events)?);
                out.sigma_device_global =
                    out.sigma_device_global.max(std(spec.v2, sens.device_global, global_events)?);
                out.sensitivity.edge_global = out.sensitivity.edge_global.max(sens.edge_global);
                out.sensitivity.device_global = out.sensitivity.device_global.max(sens.device_global);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, PrivacyError>>()?;

    Ok(NoisePlan {
        dp_enabled: true,
        epsilon: Some(spec.epsilon),
        delta: spec.delta,
        q: spec.q,
        subnets,
        local_events,
        global_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::make_schedule;
    use crate::topology::TrustPolicy;

    const EDGE_GOLDEN: f64 = 0.171_677_282_103_147_78;
    const DEVICE_GOLDEN: f64 = 0.858_386_410_515_738_9;

    fn topo(trusted: bool) -> Topology {
        Topology::uniform(2, 5, &TrustPolicy::all(trusted, 2)).unwrap()
    }

    #[test]
    fn global_scales_hit_goldens() {
        // η_0 = 0.01 carries the largest sensitivity, 2·0.01·20 = 0.4.
        let schedule = make_schedule(40, 20, 20).unwrap();
        let steps = StepSizeSchedule::uncapped(0.01);
        let spec = PrivacySpec::new(1.0, 1e-5, 0.1, 1.0);
        let plan = calibrate(&spec, &topo(false), &schedule, &steps).unwrap();
        let s = plan.subnet(0);
        assert!((s.sigma_edge_global - EDGE_GOLDEN).abs() / EDGE_GOLDEN < 1e-12);
        assert!((s.sigma_device_global - DEVICE_GOLDEN).abs() / DEVICE_GOLDEN < 1e-12);
        assert_eq!(plan.local_events, 0);
        assert_eq!(s.sigma_edge_local, 0.0);
    }

    #[test]
    fn edge_is_device_over_subnet_size() {
        let schedule = make_schedule(20, 20, 5).unwrap();
        let steps = StepSizeSchedule::uncapped(0.01);
        let spec = PrivacySpec::new(1.0, 1e-5, 0.1, 1.0);
        let plan = calibrate(&spec, &topo(true), &schedule, &steps).unwrap();
        assert_eq!(plan.local_events, 60);
        for s in &plan.subnets {
            assert!((s.sigma_edge_local * 5.0 - s.sigma_device_local).abs() < 1e-15);
            assert!(s.sigma_device_global > 0.0);
        }
    }

    #[test]
    fn infinite_epsilon_disables() {
        let schedule = make_schedule(3, 4, 2).unwrap();
        let steps = StepSizeSchedule::uncapped(0.1);
        let spec = PrivacySpec::new(f64::INFINITY, 1e-5, 0.1, f64::INFINITY);
        let plan = calibrate(&spec, &topo(false), &schedule, &steps).unwrap();
        assert!(!plan.dp_enabled);
        assert!(plan.subnets.iter().all(|s| s.sigma_device_local == 0.0 && s.sigma_edge_global == 0.0));
    }

    #[test]
    fn oversized_budget_is_rejected() {
        let schedule = make_schedule(3, 4, 2).unwrap();
        let steps = StepSizeSchedule::uncapped(0.1);
        let spec = PrivacySpec::new(1.0, 1e-5, 0.1, 1.0);
        assert!(matches!(
            calibrate(&spec, &topo(false), &schedule, &steps),
            Err(PrivacyError::BudgetTooLarge { .. })
        ));
    }

    #[test]
    fn unbounded_gradient_rejected_when_enabled() {
        let schedule = make_schedule(40, 4, 2).unwrap();
        let steps = StepSizeSchedule::uncapped(0.1);
        let spec = PrivacySpec::new(1.0, 1e-5, 0.1, f64::INFINITY);
        assert!(calibrate(&spec, &topo(false), &schedule, &steps).is_err());
    }
}
