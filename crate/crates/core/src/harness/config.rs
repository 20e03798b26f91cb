use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::engine::{make_schedule, DpMode, Init, Schedule, StepSizeSchedule};
use crate::privacy::PrivacySpec;
use crate::rng::{SeedBook, Stream};
use crate::tasks::{load_idx_images, make_quadratic, make_softmax_task, partition_noniid, TaskInstance, TaskKind};
use crate::topology::{build_topology, Topology, TrustPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub num_subnets: usize,
    #[serde(default = "default_devices_per_subnet")]
    pub devices_per_subnet: usize,
    /// Overrides `devices_per_subnet` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subnet_sizes: Option<Vec<usize>>,
    /// `p_c`: probability that each edge server is trusted.
    #[serde(default)]
    pub trust_probability: f64,
    /// Explicit per-subnet trust; overrides `trust_probability`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trusted: Option<Vec<bool>>,
}

fn default_devices_per_subnet() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    #[serde(default = "default_model_dim")]
    pub model_dim: usize,
    /// `G`; `inf` disables clipping.
    #[serde(default = "default_grad_bound")]
    pub grad_bound: f64,
    /// `q`.
    #[serde(default = "default_batch_fraction")]
    pub batch_fraction: f64,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_samples_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "default_separation")]
    pub class_separation: f64,
    #[serde(default = "default_labels_per_device")]
    pub labels_per_device: usize,
    /// Quadratic only: radius of the per-device center offsets.
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    /// Quadratic only: spread of points around their center.
    #[serde(default = "default_point_spread")]
    pub point_spread: f64,
    #[serde(default = "default_points_per_device")]
    pub points_per_device: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
}

fn default_model_dim() -> usize {
    7840
}
fn default_grad_bound() -> f64 {
    1.0
}
fn default_batch_fraction() -> f64 {
    0.1
}
fn default_num_classes() -> usize {
    10
}
fn default_samples_per_class() -> usize {
    200
}
fn default_separation() -> f64 {
    3.0
}
fn default_labels_per_device() -> usize {
    3
}
fn default_heterogeneity() -> f64 {
    1.0
}
fn default_point_spread() -> f64 {
    0.5
}
fn default_points_per_device() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// `K_g`.
    pub global_rounds: usize,
    #[serde(default = "default_tau")]
    pub tau_steps: usize,
    #[serde(default = "default_period")]
    pub local_period_steps: usize,
}

fn default_tau() -> usize {
    20
}
fn default_period() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSizeConfig {
    pub gamma: f64,
    #[serde(default = "one")]
    pub beta_estimate: f64,
    /// Run even when `γ` exceeds `min(1/τ, 1/K_g)/β`.
    #[serde(default)]
    pub allow_uncapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "one")]
    pub epsilon_total: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub v1: f64,
    #[serde(default = "one")]
    pub v2: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self { enabled: true, epsilon_total: 1.0, delta: default_delta(), c1: 1.0, c2: 1.0, v1: 1.0, v2: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_delta() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Random probe models for estimated task constants.
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_probe_pairs")]
    pub probe_pairs: usize,
    /// Full-batch noise-free steps used to approximate `F*` when it has no closed form.
    #[serde(default = "default_reference_steps")]
    pub reference_steps: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { probes: default_probes(), probe_pairs: default_probe_pairs(), reference_steps: default_reference_steps() }
    }
}

fn default_probes() -> usize {
    3
}
fn default_probe_pairs() -> usize {
    2
}
fn default_reference_steps() -> usize {
    200
}

/// A complete, validated description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub master_seed: u64,
    /// Independent repetitions, each with its own run index.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Standard deviation of a Gaussian initial model; zero starts at the origin.
    #[serde(default)]
    pub init_std: f64,
    pub topology: TopologyConfig,
    pub task: TaskConfig,
    pub schedule: ScheduleConfig,
    pub step_size: StepSizeConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_name() -> String {
    "run".to_string()
}
fn default_repeats() -> usize {
    1
}

fn invalid(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: field.to_string(), reason: reason.into() }
}

/// Read, parse and validate a run configuration.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("<file>", format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::from_toml(&text)?;
    Ok(config)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let t = &self.topology;
        if t.num_subnets == 0 {
            return Err(invalid("topology.num_subnets", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&t.trust_probability) {
            return Err(invalid(
                "topology.trust_probability",
                format!("p_c = {} is outside [0, 1]", t.trust_probability),
            ));
        }
        if let Some(sizes) = &t.subnet_sizes {
            if sizes.len() != t.num_subnets {
                return Err(invalid("topology.subnet_sizes", "length must equal num_subnets"));
            }
            if sizes.contains(&0) {
                return Err(invalid("topology.subnet_sizes", "every subnet needs at least one device"));
            }
        } else if t.devices_per_subnet == 0 {
            return Err(invalid("topology.devices_per_subnet", "must be at least 1"));
        }
        if let Some(flags) = &t.trusted {
            if flags.len() != t.num_subnets {
                return Err(invalid("topology.trusted", "length must equal num_subnets"));
            }
        }

        let k = &self.task;
        if !(k.batch_fraction > 0.0 && k.batch_fraction <= 1.0) {
            return Err(invalid("task.batch_fraction", format!("q = {} is outside (0, 1]", k.batch_fraction)));
        }
        if !(k.grad_bound > 0.0) {
            return Err(invalid("task.grad_bound", "G must be positive (use inf to disable clipping)"));
        }
        if k.model_dim == 0 {
            return Err(invalid("task.model_dim", "must be positive"));
        }
        if k.kind == TaskKind::ImageSoftmax && (k.images_path.is_none() || k.labels_path.is_none()) {
            return Err(invalid("task.images_path", "image_softmax needs images_path and labels_path"));
        }
        if k.kind == TaskKind::Softmax && k.model_dim % k.num_classes.max(1) != 0 {
            return Err(invalid("task.model_dim", "must be a multiple of num_classes"));
        }

        self.schedule().map_err(|e| invalid("schedule", e.to_string()))?;
        self.steps()
            .validate(&self.schedule().expect("validated above"))
            .map_err(|e| invalid("step_size.gamma", e.to_string()))?;

        let p = &self.privacy;
        if p.enabled {
            if !(p.epsilon_total > 0.0) {
                return Err(invalid("privacy.epsilon_total", "must be positive"));
            }
            if !(p.delta > 0.0 && p.delta < 1.0) {
                return Err(invalid("privacy.delta", format!("delta = {} is outside (0, 1)", p.delta)));
            }
            for (name, v) in [("c1", p.c1), ("c2", p.c2), ("v1", p.v1), ("v2", p.v2)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(&format!("privacy.{name}"), "must be positive and finite"));
                }
            }
            if !self.task.grad_bound.is_finite() && p.epsilon_total.is_finite() {
                return Err(invalid("task.grad_bound", "DP needs a finite gradient bound"));
            }
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be at least 1"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(invalid("init_std", "must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, crate::engine::ScheduleError> {
        make_schedule(self.schedule.global_rounds, self.schedule.tau_steps, self.schedule.local_period_steps)
    }

    pub fn steps(&self) -> StepSizeSchedule {
        StepSizeSchedule {
            gamma: self.step_size.gamma,
            beta_estimate: self.step_size.beta_estimate,
            allow_uncapped: self.step_size.allow_uncapped,
        }
    }

    pub fn dp_mode(&self) -> DpMode {
        let p = &self.privacy;
        if !p.enabled {
            return DpMode::Off;
        }
        DpMode::On(PrivacySpec {
            epsilon: p.epsilon_total,
            delta: p.delta,
            q: self.task.batch_fraction,
            c1: p.c1,
            c2: p.c2,
            v1: p.v1,
            v2: p.v2,
            grad_bound: self.task.grad_bound,
        })
    }

    pub fn init(&self) -> Init {
        if self.init_std > 0.0 {
            Init::Gaussian { std: self.init_std }
        } else {
            Init::Zero
        }
    }

    pub fn subnet_sizes(&self) -> Vec<usize> {
        self.topology
            .subnet_sizes
            .clone()
            .unwrap_or_else(|| vec![self.topology.devices_per_subnet; self.topology.num_subnets])
    }

    pub fn build_topology(&self, seeds: &SeedBook) -> Result<Topology, HarnessError> {
        let policy = match &self.topology.trusted {
            Some(flags) => TrustPolicy::Explicit(flags.clone()),
            None => TrustPolicy::Probabilistic { p: self.topology.trust_probability, seed: seeds.seed_u64(Stream::Trust) },
        };
        build_topology(self.topology.num_subnets, &self.subnet_sizes(), &policy)
            .map_err(|e| invalid("topology", e.to_string()))
    }

    pub fn build_task(&self, topology: &Topology, seeds: &SeedBook) -> Result<TaskInstance<f64>, HarnessError> {
        let k = &self.task;
        let data_seed = seeds.seed_u64(Stream::Data);
        let partition_seed = seeds.seed_u64(Stream::Partition);
        let task = match k.kind {
            TaskKind::Quadratic => make_quadratic(
                k.model_dim,
                topology,
                k.heterogeneity,
                k.point_spread,
                k.points_per_device,
                k.grad_bound,
                data_seed,
            ),
            TaskKind::Softmax => make_softmax_task(
                topology,
                k.model_dim,
                k.num_classes,
                k.samples_per_class,
                k.class_separation,
                k.labels_per_device,
                k.grad_bound,
                data_seed,
                partition_seed,
            ),
            TaskKind::ImageSoftmax => {
                let images = k.images_path.as_ref().expect("validated");
                let labels = k.labels_path.as_ref().expect("validated");
                load_idx_images(images, labels).and_then(|data| {
                    let shards = partition_noniid(&data, topology, k.labels_per_device, partition_seed)?;
                    TaskInstance::softmax(TaskKind::ImageSoftmax, data, shards, topology, k.grad_bound)
                })
            }
        };
        task.map_err(|e| invalid("task", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[topology]
num_subnets = 2

[task]
kind = "quadratic"
model_dim = 4

[schedule]
global_rounds = 40

[step_size]
gamma = 0.025
"#;

    #[test]
    fn minimal_file_gets_every_default() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.topology.devices_per_subnet, 5);
        assert_eq!(c.schedule.tau_steps, 20);
        assert_eq!(c.schedule.local_period_steps, 5);
        assert_eq!(c.privacy.delta, 1e-5);
        let echoed = c.to_toml();
        for key in ["epsilon_total", "tau_steps", "local_period_steps", "batch_fraction", "reference_steps"] {
            assert!(echoed.contains(key), "{key} missing from echo");
        }
        assert_eq!(RunConfig::from_toml(&echoed).unwrap(), c);
    }

    #[test]
    fn trust_probability_out_of_range() {
        let text = MINIMAL.replace("num_subnets = 2", "num_subnets = 2\ntrust_probability = 1.5");
        let err = RunConfig::from_toml(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("topology.trust_probability") && msg.contains("[0, 1]"), "{msg}");
    }

    #[test]
    fn period_longer_than_tau() {
        let text = MINIMAL.replace("global_rounds = 40", "global_rounds = 40\ntau_steps = 3\nlocal_period_steps = 5");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("schedule") && msg.contains("exceeds"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("gamma = 0.025", "gamma = 0.025\ngama = 0.1");
        assert!(matches!(RunConfig::from_toml(&text), Err(HarnessError::Parse(_))));
    }

    #[test]
    fn infinite_grad_bound_parses() {
        let text = MINIMAL.replace("model_dim = 4", "model_dim = 4\ngrad_bound = inf") + "\n[privacy]\nenabled = false\n";
        let c = RunConfig::from_toml(&text).unwrap();
        assert!(c.task.grad_bound.is_infinite());
        assert_eq!(c.dp_mode(), DpMode::Off);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert!(back.task.grad_bound.is_infinite());
    }

    #[test]
    fn step_size_cap_enforced() {
        let text = MINIMAL.replace("gamma = 0.025", "gamma = 0.5");
        assert!(RunConfig::from_toml(&text).unwrap_err().to_string().contains("step_size.gamma"));
        let ok = MINIMAL.replace("gamma = 0.025", "gamma = 0.5\nallow_uncapped = true");
        assert!(RunConfig::from_toml(&ok).is_ok());
    }
}
