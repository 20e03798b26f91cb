//! Configuration, run execution, scenario sweeps and artifact emission.

mod artifacts;
mod config;
mod scenario;
mod summary;

pub use artifacts::{commit_dir, read_run_dir, write_run_files};
pub use config::{
    parse_config, AnalysisConfig, PrivacyConfig, RunConfig, ScheduleConfig, StepSizeConfig, TaskConfig,
    TopologyConfig,
};
pub use scenario::{parse_scenario, run_config, run_scenario, Baseline, NetworkPoint, PlannedRun, Scenario, Sweep};
pub use summary::{emit_by_value, emit_summary, SummaryRow, SUMMARY_COLUMNS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    bound_constants, check_dispersion_bounds, theorem_report, BoundConstants, BoundInputs, DispersionReport, FStar,
    TheoremReport,
};
use crate::engine::{run, EngineError, RunOptions, TrainTrace};
use crate::model::ModelVector;
use crate::privacy::PrivacyError;
use crate::rng::{rng_from_u64, SeedBook, Stream};
use crate::tasks::{estimate_properties, random_probes, TaskInstance, TaskKind, TaskProperties};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("budget validation failed: {0}")]
    Budget(PrivacyError),
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(std::path::PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Parse(_) => 2,
            HarnessError::Budget(_) => 3,
            HarnessError::Runtime(_) | HarnessError::Exists(_) | HarnessError::Io(_) => 4,
        }
    }
}

impl From<EngineError> for HarnessError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Calibration(p) => HarnessError::Budget(p),
            EngineError::Schedule(s) => HarnessError::Config { field: "schedule".into(), reason: s.to_string() },
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

/// Execution switches shared by every run of an invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    pub force: bool,
    /// Worker threads for concurrent runs; `0` uses the rayon default.
    pub jobs: usize,
    pub debug_invariants: bool,
}

/// Analysis of one finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub properties: TaskProperties<f64>,
    pub constants: BoundConstants,
    pub theorem: TheoremReport,
    pub dispersion: DispersionReport,
}

/// Build the task for `config` under `seeds` and train on it.
pub fn execute(
    config: &RunConfig,
    seeds: SeedBook,
    debug_invariants: bool,
) -> Result<(TaskInstance<f64>, TrainTrace<f64>), HarnessError> {
    config.validate()?;
    let topology = config.build_topology(&seeds)?;
    let task = config.build_task(&topology, &seeds)?;
    let schedule = config.schedule().map_err(EngineError::from)?;
    let mut options = RunOptions::new(config.task.batch_fraction, seeds.master_seed);
    options.seeds = seeds;
    options.init = config.init();
    options.debug_invariants = debug_invariants;
    let trace = run(&task, &schedule, &config.steps(), &config.dp_mode(), &options)?;
    Ok((task, trace))
}

/// `F*`: closed form for quadratics, otherwise the lowest loss over the trace
/// and a noise-free full-batch reference descent.
pub fn optimal_loss(
    task: &TaskInstance<f64>,
    trace: &TrainTrace<f64>,
    beta: f64,
    reference_steps: usize,
) -> FStar {
    if let Some(w) = task.optimum() {
        return FStar::Exact(task.evaluate(w).loss);
    }
    let mut best = trace.rounds.iter().map(|r| r.loss).fold(trace.final_loss, f64::min);
    let step = if beta > 0.0 { 1.0 / beta } else { 1.0 };
    let mut w = ModelVector::zeros(task.model_dim());
    for s in 0..reference_steps {
        let g = task.global_gradient(&w);
        w.axpy(-step, &g);
        if s % 10 == 9 || s + 1 == reference_steps {
            best = best.min(task.evaluate(&w).loss);
        }
    }
    FStar::Surrogate(best)
}

/// Estimate task constants and evaluate every bound against `trace`.
pub fn analyze(config: &RunConfig, task: &TaskInstance<f64>, trace: &TrainTrace<f64>) -> RunReport {
    let seeds = trace.echo.options.seeds;
    let mut probes = vec![ModelVector::zeros(task.model_dim()), trace.final_model.clone()];
    if task.kind() != TaskKind::Quadratic {
        let scale = (trace.final_model.norm() / (task.model_dim() as f64).sqrt()).max(1e-2);
        let mut rng = rng_from_u64(seeds.seed_u64(Stream::Init) ^ 0x5eed);
        probes.extend(random_probes(task.model_dim(), config.analysis.probes, scale, &mut rng));
    }
    let props = estimate_properties(
        task,
        &probes,
        config.analysis.probe_pairs,
        config.task.batch_fraction,
        seeds.seed_u64(Stream::Minibatch) ^ 0x5eed,
    );
    let q = if trace.plan.dp_enabled {
        trace.plan.q
    } else {
        task.realized_fraction(config.task.batch_fraction).unwrap_or(config.task.batch_fraction)
    };
    let inputs = BoundInputs::from_run(
        &props,
        task.topology(),
        &trace.echo.schedule,
        &trace.echo.steps,
        &trace.echo.dp,
        q,
        task.model_dim(),
        task.grad_bound(),
    );
    let constants = bound_constants(&inputs);
    let f_star = optimal_loss(task, trace, props.beta.value, config.analysis.reference_steps);
    let theorem = theorem_report(trace, &constants, f_star);
    let dispersion = check_dispersion_bounds(&trace.dispersion, &constants, &trace.echo.schedule, &trace.echo.steps);
    RunReport { properties: props, constants, theorem, dispersion }
}
