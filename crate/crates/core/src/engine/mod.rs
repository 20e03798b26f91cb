//! Hierarchical training loop: local SGD on devices, trust-dependent local
//! aggregation at edge servers, and global aggregation at the cloud.

mod schedule;
mod state;
mod trace;

pub use schedule::{make_schedule, Interval, Schedule, ScheduleError, StepSizeSchedule};
pub use state::{AggregateOutcome, NoiseDraw, TrainState};
pub use trace::{AggregationRecord, AuditRound, RoundRecord, RunEcho, TrainTrace, ROUND_COLUMNS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::measure_dispersion;
use crate::model::{axpy, ModelVector};
use crate::privacy::{calibrate, EventKind, NoisePlan, PrivacyError, PrivacyLedger, PrivacySpec};
use crate::rng::{rng_from_u64, SeedBook, Stream};
use crate::scalar::Scalar;
use crate::tasks::{TaskError, TaskInstance};
use crate::topology::weights_of;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("privacy calibration: {0}")]
    Calibration(PrivacyError),
    #[error("at t={t}, k={k}, subnet {subnet}: {source}")]
    Privacy { t: usize, k: usize, subnet: usize, source: PrivacyError },
    #[error("task: {0}")]
    Task(#[from] TaskError),
    #[error("at t={t}, k={k}: non-finite model")]
    NonFinite { t: usize, k: usize },
    #[error("at t={t}, k={k}, subnet {subnet}: invariant violated: {what}")]
    Invariant { t: usize, k: usize, subnet: usize, what: String },
}

/// Privacy treatment of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DpMode {
    Off,
    On(PrivacySpec),
}

/// Starting global model `w̄⁽⁰⁾`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    Zero,
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    /// Minibatch fraction `q`; batches have `⌈q·D_i⌉` points.
    pub batch_fraction: f64,
    pub init: Init,
    pub seeds: SeedBook,
    /// Assert synchronization invariants after every aggregation.
    pub debug_invariants: bool,
    /// Keep per-interval gradient sums and every noise draw.
    pub audit: bool,
    /// Record `Z₁, Z₂` after every time step.
    pub record_dispersion: bool,
    /// Seed the noise stream directly instead of from `seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
}

impl RunOptions {
    pub fn new(batch_fraction: f64, master_seed: u64) -> Self {
        Self {
            batch_fraction,
            init: Init::Zero,
            seeds: SeedBook::new(master_seed, 0),
            debug_invariants: false,
            audit: false,
            record_dispersion: true,
            noise_seed: None,
        }
    }
}

/// Calibrate the noise plan a run will use. With DP on, the sampling
/// fraction is replaced by the realized `max_i ⌈q·D_i⌉/D_i` and the gradient
/// bound by the task's.
pub fn plan_for<T: Scalar>(
    task: &TaskInstance<T>,
    schedule: &Schedule,
    steps: &StepSizeSchedule,
    dp: &DpMode,
    batch_fraction: f64,
) -> Result<NoisePlan, EngineError> {
    match dp {
        DpMode::Off => Ok(NoisePlan::disabled(task.topology(), schedule)),
        DpMode::On(spec) => {
            let mut spec = *spec;
            spec.q = task.realized_fraction(batch_fraction)?;
            spec.grad_bound = task.grad_bound().to_f64_lossy();
            calibrate(&spec, task.topology(), schedule, steps).map_err(EngineError::Calibration)
        }
    }
}

/// Run the full procedure and return its trace.
///
/// Randomness comes from named streams of `options.seeds`: minibatches draw
/// from one stream in fixed device order, noise from another, so changing
/// one never perturbs the other.
pub fn run<T: Scalar>(
    task: &TaskInstance<T>,
    schedule: &Schedule,
    steps: &StepSizeSchedule,
    dp: &DpMode,
    options: &RunOptions,
) -> Result<TrainTrace<T>, EngineError> {
    steps.validate(schedule)?;
    let topo = task.topology();
    let plan = plan_for(task, schedule, steps, dp, options.batch_fraction)?;
    let mut ledger = PrivacyLedger::new(plan.local_events, plan.global_events);

    let dim = task.model_dim();
    let init = match options.init {
        Init::Zero => ModelVector::zeros(dim),
        Init::Gaussian { std } => ModelVector::gaussian(dim, T::of(std), &mut options.seeds.rng(Stream::Init)),
    };
    let mut state = TrainState::new(topo, init);
    state.capture_noise = options.audit;
    let mut batch_rng = options.seeds.rng(Stream::Minibatch);
    let mut noise_rng = match options.noise_seed {
        Some(seed) => rng_from_u64(seed),
        None => options.seeds.rng(Stream::Noise),
    };

    let weights = weights_of(topo);
    let kg = schedule.global_rounds();
    let mut rounds = Vec::with_capacity(kg);
    let mut events = Vec::new();
    let mut dispersion = Vec::new();
    let mut audit = Vec::new();

    for k in 0..kg {
        let eta: T = steps.step_size(k);
        let eval = task.evaluate(&state.global);
        let mut round = RoundRecord {
            k,
            t_k: schedule.start(k),
            loss: eval.loss.to_f64_lossy(),
            grad_norm_sq: eval.grad_norm_sq.to_f64_lossy(),
            accuracy: eval.accuracy.map(|a| a.to_f64_lossy()),
            eta: eta.to_f64_lossy(),
            noise_l2_local_mean: 0.0,
            noise_l2_global: 0.0,
            model_digest: trace::digest(&state.global),
        };
        let mut audit_round = options.audit.then(|| AuditRound {
            k,
            start_model: state.global.clone(),
            gradient_sums: vec![ModelVector::zeros(dim); topo.num_devices()],
            noises: Vec::new(),
            end_model: ModelVector::zeros(dim),
        });
        let mut local_norm_sum = 0.0;
        let mut local_norm_count = 0usize;

        for t in schedule.start(k) + 1..=schedule.start(k + 1) {
            for i in 0..topo.num_devices() {
                state.local_sgd_step(task, i, eta, options.batch_fraction, &mut batch_rng)?;
                if let Some(a) = audit_round.as_mut() {
                    axpy(a.gradient_sums[i].as_mut_slice(), eta, state.last_gradient());
                }
            }
            state.t = t;

            let is_global = t == schedule.start(k + 1);
            if !is_global && schedule.is_local_instant(t) {
                for c in 0..topo.num_subnets() {
                    let out = state
                        .local_aggregate(topo, c, &plan, &mut ledger, &mut noise_rng)
                        .map_err(|source| EngineError::Privacy { t, k, subnet: c, source })?;
                    let norm = out.noise.norm().to_f64_lossy();
                    local_norm_sum += norm;
                    local_norm_count += 1;
                    events.push(AggregationRecord {
                        t,
                        k,
                        event: EventKind::Local,
                        subnet: c,
                        trusted: topo.is_trusted(c),
                        noise_l2: norm,
                    });
                    if let Some(a) = audit_round.as_mut() {
                        a.noises.extend(out.draws);
                    }
                    if options.debug_invariants {
                        state.check_subnet_synced(topo, c).map_err(|what| EngineError::Invariant {
                            t,
                            k,
                            subnet: c,
                            what,
                        })?;
                    }
                }
            }
            if is_global {
                let outcomes = state
                    .global_aggregate(topo, &plan, &mut ledger, &mut noise_rng)
                    .map_err(|(subnet, source)| EngineError::Privacy { t, k, subnet, source })?;
                let mut combined = ModelVector::zeros(dim);
                for (c, out) in outcomes.into_iter().enumerate() {
                    combined.axpy(weights.subnet_weight(c), &out.noise);
                    events.push(AggregationRecord {
                        t,
                        k,
                        event: EventKind::Global,
                        subnet: c,
                        trusted: topo.is_trusted(c),
                        noise_l2: out.noise.norm().to_f64_lossy(),
                    });
                    if let Some(a) = audit_round.as_mut() {
                        a.noises.extend(out.draws);
                    }
                }
                round.noise_l2_global = combined.norm().to_f64_lossy();
                if options.debug_invariants {
                    state.check_all_synced().map_err(|what| EngineError::Invariant { t, k, subnet: 0, what })?;
                }
                state.k = k + 1;
            }
            if !state.global.is_finite() || !state.devices.iter().all(|w| w.is_finite()) {
                return Err(EngineError::NonFinite { t, k });
            }
            if options.record_dispersion {
                dispersion.push(measure_dispersion(topo, &state.devices, t));
            }
        }

        if local_norm_count > 0 {
            round.noise_l2_local_mean = local_norm_sum / local_norm_count as f64;
        }
        if let Some(mut a) = audit_round {
            a.end_model = state.global.clone();
            audit.push(a);
        }
        rounds.push(round);
    }

    let final_eval = task.evaluate(&state.global);
    Ok(TrainTrace {
        echo: RunEcho {
            task_kind: task.kind(),
            model_dim: dim,
            topology: topo.clone(),
            schedule: schedule.clone(),
            steps: *steps,
            dp: *dp,
            options: options.clone(),
            grad_bound: task.grad_bound().to_f64_lossy(),
        },
        plan,
        ledger,
        rounds,
        final_loss: final_eval.loss.to_f64_lossy(),
        final_grad_norm_sq: final_eval.grad_norm_sq.to_f64_lossy(),
        final_accuracy: final_eval.accuracy.map(|a| a.to_f64_lossy()),
        final_digest: trace::digest(&state.global),
        events,
        dispersion,
        audit,
        final_model: state.global,
    })
}
