use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{axpy, ModelVector};
use crate::privacy::{sample_noise, EventKind, NoisePlan, PrivacyError, PrivacyLedger, Release, Tier};
use crate::scalar::Scalar;
use crate::tasks::{TaskError, TaskInstance};
use crate::topology::{weights_of, Topology, Weights};

/// One Gaussian draw injected at an aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NoiseDraw<T> {
    pub t: usize,
    pub event: EventKind,
    pub subnet: usize,
    /// `None` for an edge-server draw.
    pub device: Option<usize>,
    pub vector: ModelVector<T>,
}

/// Noise one subnet contributed to an aggregation.
#[derive(Debug, Clone)]
pub struct AggregateOutcome<T> {
    /// Net noise added to the subnet model: the edge draw, or `Σ_j ρ_j n_j`.
    pub noise: ModelVector<T>,
    /// Individual draws, kept only when capture is on.
    pub draws: Vec<NoiseDraw<T>>,
}

/// Models and accumulated updates of every entity.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub devices: Vec<ModelVector<T>>,
    /// `η Σ ĝ` since the device's last transmission.
    pub buffers: Vec<ModelVector<T>>,
    /// `w̄_c` as of the subnet's last aggregation.
    pub subnet_models: Vec<ModelVector<T>>,
    /// `t'`, time of each subnet's last aggregation.
    pub last_sync: Vec<usize>,
    pub global: ModelVector<T>,
    pub t: usize,
    pub k: usize,
    /// Keep every individual noise draw in aggregation outcomes.
    pub capture_noise: bool,
    weights: Weights,
    gradient: Vec<T>,
}

impl<T: Scalar> TrainState<T> {
    /// Every entity starts from the broadcast `init`.
    pub fn new(topology: &Topology, init: ModelVector<T>) -> Self {
        let dim = init.dim();
        Self {
            devices: vec![init.clone(); topology.num_devices()],
            buffers: vec![ModelVector::zeros(dim); topology.num_devices()],
            subnet_models: vec![init.clone(); topology.num_subnets()],
            last_sync: vec![0; topology.num_subnets()],
            global: init,
            t: 0,
            k: 0,
            capture_noise: false,
            weights: weights_of(topology),
            gradient: vec![T::zero(); dim],
        }
    }

    /// Clipped minibatch gradient of the most recent local step.
    pub fn last_gradient(&self) -> &[T] {
        &self.gradient
    }

    /// `w_i ← w_i − η ĝ`, `buffer_i ← buffer_i + η ĝ`.
    pub fn local_sgd_step<R: Rng + ?Sized>(
        &mut self,
        task: &TaskInstance<T>,
        device: usize,
        eta: T,
        q: f64,
        rng: &mut R,
    ) -> Result<(), TaskError> {
        task.stochastic_gradient_into(device, self.devices[device].as_slice(), q, rng, &mut self.gradient)?;
        axpy(self.devices[device].as_mut_slice(), -eta, &self.gradient);
        axpy(self.buffers[device].as_mut_slice(), eta, &self.gradient);
        Ok(())
    }

    /// Edge-server aggregation of subnet `c` at the current `t`, followed by
    /// synchronization of its devices.
    pub fn local_aggregate<R: Rng + ?Sized>(
        &mut self,
        topology: &Topology,
        c: usize,
        plan: &NoisePlan,
        ledger: &mut PrivacyLedger,
        rng: &mut R,
    ) -> Result<AggregateOutcome<T>, PrivacyError> {
        let out = self.absorb(topology, c, EventKind::Local, plan, ledger, rng)?;
        let members = topology.members(c);
        for i in members {
            self.devices[i].copy_from(&self.subnet_models[c]);
        }
        self.last_sync[c] = self.t;
        Ok(out)
    }

    /// Cloud aggregation: each subnet forms its noisy candidate, the cloud
    /// averages them and broadcasts. Errors carry the failing subnet.
    pub fn global_aggregate<R: Rng + ?Sized>(
        &mut self,
        topology: &Topology,
        plan: &NoisePlan,
        ledger: &mut PrivacyLedger,
        rng: &mut R,
    ) -> Result<Vec<AggregateOutcome<T>>, (usize, PrivacyError)> {
        let mut outcomes = Vec::with_capacity(topology.num_subnets());
        for c in 0..topology.num_subnets() {
            outcomes.push(self.absorb(topology, c, EventKind::Global, plan, ledger, rng).map_err(|e| (c, e))?);
        }
        self.global.fill_zero();
        for c in 0..topology.num_subnets() {
            let w = self.weights.subnet_weight::<T>(c);
            axpy(self.global.as_mut_slice(), w, self.subnet_models[c].as_slice());
        }
        for m in self.subnet_models.iter_mut().chain(self.devices.iter_mut()) {
            m.copy_from(&self.global);
        }
        for c in 0..topology.num_subnets() {
            self.last_sync[c] = self.t;
        }
        Ok(outcomes)
    }

    /// `w̄_c ← w̄_c − Σ_j ρ_j buffer_j + noise`, clearing the buffers.
    ///
    /// A trusted server adds one draw at the edge scale. Under an untrusted
    /// server each device perturbs its own transmission, which nets to
    /// `Σ_j ρ_j n_j` on the subnet model.
    fn absorb<R: Rng + ?Sized>(
        &mut self,
        topology: &Topology,
        c: usize,
        event: EventKind,
        plan: &NoisePlan,
        ledger: &mut PrivacyLedger,
        rng: &mut R,
    ) -> Result<AggregateOutcome<T>, PrivacyError> {
        let dim = self.global.dim();
        let scales = plan.subnet(c);
        let (edge_sigma, device_sigma, edge_sens, device_sens) = match event {
            EventKind::Local => (
                scales.sigma_edge_local,
                scales.sigma_device_local,
                scales.sensitivity.edge_local,
                scales.sensitivity.device_local,
            ),
            EventKind::Global => (
                scales.sigma_edge_global,
                scales.sigma_device_global,
                scales.sensitivity.edge_global,
                scales.sensitivity.device_global,
            ),
        };
        let base = Release {
            t: self.t,
            k: self.k,
            tier: Tier::Edge,
            event,
            subnet: c,
            device: None,
            sigma: edge_sigma,
            sensitivity: edge_sens,
        };

        let mut draws = Vec::new();
        let noise = if topology.is_trusted(c) {
            ledger.record(base)?;
            let n = sample_noise(T::of(edge_sigma), dim, rng);
            if self.capture_noise {
                draws.push(NoiseDraw { t: self.t, event, subnet: c, device: None, vector: n.clone() });
            }
            n
        } else {
            let mut net = ModelVector::zeros(dim);
            for j in topology.members(c) {
                ledger.record(Release {
                    tier: Tier::Device,
                    device: Some(j),
                    sigma: device_sigma,
                    sensitivity: device_sens,
                    ..base
                })?;
                let n = sample_noise(T::of(device_sigma), dim, rng);
                net.axpy(self.weights.device_weight(j), &n);
                if self.capture_noise {
                    draws.push(NoiseDraw { t: self.t, event, subnet: c, device: Some(j), vector: n });
                }
            }
            net
        };

        let subnet = self.subnet_models[c].as_mut_slice();
        for j in topology.members(c) {
            axpy(subnet, -self.weights.device_weight::<T>(j), self.buffers[j].as_slice());
            self.buffers[j].fill_zero();
        }
        axpy(subnet, T::one(), noise.as_slice());
        Ok(AggregateOutcome { noise, draws })
    }

    /// After a local aggregation: every device of `c` equals `w̄_c` and holds
    /// an empty buffer.
    pub fn check_subnet_synced(&self, topology: &Topology, c: usize) -> Result<(), String> {
        for i in topology.members(c) {
            if self.devices[i] != self.subnet_models[c] {
                return Err(format!("device {i} differs from its subnet model"));
            }
            if self.buffers[i].iter().any(|&x| x != T::zero()) {
                return Err(format!("device {i} buffer not cleared"));
            }
        }
        Ok(())
    }

    /// After a global aggregation: every model equals `w̄`, every buffer is empty.
    pub fn check_all_synced(&self) -> Result<(), String> {
        if let Some(c) = self.subnet_models.iter().position(|m| *m != self.global) {
            return Err(format!("subnet {c} differs from the global model"));
        }
        if let Some(i) = self.devices.iter().position(|m| *m != self.global) {
            return Err(format!("device {i} differs from the global model"));
        }
        if let Some(i) = self.buffers.iter().position(|b| b.iter().any(|&x| x != T::zero())) {
            return Err(format!("device {i} buffer not cleared"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::make_schedule;
    use crate::privacy::{calibrate, PrivacySpec};
    use crate::rng::rng_from_u64;
    use crate::topology::TrustPolicy;

    fn scalar_task(points: Vec<f64>, topo: &Topology) -> TaskInstance<f64> {
        let pts = points.into_iter().map(|x| vec![ModelVector::from_vec(vec![x])]).collect();
        TaskInstance::quadratic_from_points(pts, topo, f64::INFINITY).unwrap()
    }

    #[test]
    fn zero_step_changes_nothing() {
        let topo = Topology::uniform(1, 1, &TrustPolicy::all(true, 1)).unwrap();
        let task = scalar_task(vec![3.0], &topo);
        let mut s = TrainState::new(&topo, ModelVector::from_vec(vec![1.0]));
        s.local_sgd_step(&task, 0, 0.0, 1.0, &mut rng_from_u64(0)).unwrap();
        assert_eq!(s.devices[0][0], 1.0);
        assert_eq!(s.buffers[0][0], 0.0);
    }

    #[test]
    fn unit_step_lands_on_center() {
        let topo = Topology::uniform(1, 1, &TrustPolicy::all(true, 1)).unwrap();
        let task = scalar_task(vec![3.5], &topo);
        let mut s = TrainState::new(&topo, ModelVector::from_vec(vec![1.25]));
        s.local_sgd_step(&task, 0, 1.0, 1.0, &mut rng_from_u64(0)).unwrap();
        assert_eq!(s.devices[0][0], 3.5);
    }

    #[test]
    fn buffer_accumulates_scaled_gradients() {
        let topo = Topology::uniform(1, 1, &TrustPolicy::all(true, 1)).unwrap();
        let task = scalar_task(vec![2.0], &topo);
        let mut s = TrainState::new(&topo, ModelVector::from_vec(vec![0.0]));
        let eta = 0.1;
        let mut expected = 0.0;
        for _ in 0..5 {
            s.local_sgd_step(&task, 0, eta, 1.0, &mut rng_from_u64(0)).unwrap();
            expected += eta * s.last_gradient()[0];
        }
        assert!((s.buffers[0][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_free_local_average() {
        let topo = Topology::uniform(1, 2, &TrustPolicy::all(false, 1)).unwrap();
        let schedule = make_schedule(1, 2, 1).unwrap();
        let plan = NoisePlan::disabled(&topo, &schedule);
        let mut ledger = PrivacyLedger::new(plan.local_events, plan.global_events);
        let mut s = TrainState::new(&topo, ModelVector::from_vec(vec![0.0]));
        // Buffers that move the devices to 1 and 3.
        s.devices[0][0] = 1.0;
        s.buffers[0][0] = -1.0;
        s.devices[1][0] = 3.0;
        s.buffers[1][0] = -3.0;
        s.t = 1;
        let out = s.local_aggregate(&topo, 0, &plan, &mut ledger, &mut rng_from_u64(0)).unwrap();
        assert_eq!(out.noise[0], 0.0);
        assert_eq!(s.subnet_models[0][0], 2.0);
        assert_eq!(s.devices[0][0], 2.0);
        assert_eq!(s.devices[1][0], 2.0);
        assert!(s.check_subnet_synced(&topo, 0).is_ok());
        assert_eq!(s.last_sync[0], 1);
        assert_eq!(ledger.len(), 2);
    }

    #[test]
    fn untrusted_subnet_records_device_releases() {
        let topo = Topology::uniform(2, 3, &TrustPolicy::Explicit(vec![true, false])).unwrap();
        let schedule = make_schedule(10, 4, 2).unwrap();
        let steps = crate::engine::StepSizeSchedule::uncapped(0.1);
        let plan = calibrate(&PrivacySpec::new(0.5, 1e-5, 0.5, 1.0), &topo, &schedule, &steps).unwrap();
        let mut ledger = PrivacyLedger::new(plan.local_events, plan.global_events);
        let mut s = TrainState::new(&topo, ModelVector::zeros(4));
        s.capture_noise = true;
        s.t = 2;
        let mut rng = rng_from_u64(1);
        let trusted = s.local_aggregate(&topo, 0, &plan, &mut ledger, &mut rng).unwrap();
        let untrusted = s.local_aggregate(&topo, 1, &plan, &mut ledger, &mut rng).unwrap();
        assert_eq!(trusted.draws.len(), 1);
        assert_eq!(untrusted.draws.len(), 3);
        assert_eq!(ledger.len(), 4);
        assert_eq!(ledger.event_count(1, EventKind::Local), 1);
        let mut net = ModelVector::zeros(4);
        for d in &untrusted.draws {
            net.axpy(1.0 / 3.0, &d.vector);
        }
        assert!(net.max_abs_diff(&untrusted.noise) < 1e-15);
    }

    #[test]
    fn global_aggregate_synchronizes_everything() {
        let topo = Topology::uniform(2, 2, &TrustPolicy::all(true, 2)).unwrap();
        let schedule = make_schedule(1, 1, 1).unwrap();
        let plan = NoisePlan::disabled(&topo, &schedule);
        let mut ledger = PrivacyLedger::new(plan.local_events, plan.global_events);
        let mut s = TrainState::new(&topo, ModelVector::from_vec(vec![0.0]));
        for (i, b) in [1.0, 2.0, 3.0, 6.0].into_iter().enumerate() {
            s.buffers[i][0] = b;
            s.devices[i][0] = -b;
        }
        s.t = 1;
        s.global_aggregate(&topo, &plan, &mut ledger, &mut rng_from_u64(0)).unwrap();
        assert_eq!(s.global[0], -3.0);
        assert!(s.check_all_synced().is_ok());
    }
}
