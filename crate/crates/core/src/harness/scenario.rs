use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    analyze, commit_dir, emit_by_value, emit_summary, execute, write_run_files, ExecOptions, HarnessError, RunConfig,
    SummaryRow,
};
use crate::rng::SeedBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkPoint {
    pub num_subnets: usize,
    pub devices_per_subnet: usize,
}

/// Comparison points: DP off entirely, every server untrusted, every server trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    DpOff,
    AllUntrusted,
    AllTrusted,
}

/// The single parameter a scenario varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    #[serde(rename = "p_c")]
    TrustProbability(Vec<f64>),
    Epsilon(Vec<f64>),
    NetworkConfig(Vec<NetworkPoint>),
    Baseline(Vec<Baseline>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seeds: Vec<u64>,
    pub sweep: Sweep,
    pub base: RunConfig,
}

/// One member of a scenario's run set.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub axis_value: String,
    pub seed: u64,
    pub config: RunConfig,
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        field: "<file>".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    Scenario::from_toml(&text)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        if s.seeds.is_empty() {
            return Err(HarnessError::Config { field: "seeds".into(), reason: "at least one seed is required".into() });
        }
        let runs = s.runs();
        if runs.is_empty() {
            return Err(HarnessError::Config { field: "sweep.values".into(), reason: "no values to sweep".into() });
        }
        for r in &runs {
            r.config.validate().map_err(|e| match e {
                HarnessError::Config { field, reason } => {
                    HarnessError::Config { field, reason: format!("{reason} (at {})", r.axis_value) }
                }
                other => other,
            })?;
        }
        Ok(s)
    }

    /// Values × seeds, values outermost, in file order.
    pub fn runs(&self) -> Vec<PlannedRun> {
        let variants: Vec<(String, RunConfig)> = match &self.sweep {
            Sweep::TrustProbability(ps) => ps
                .iter()
                .map(|&p| {
                    let mut c = self.base.clone();
                    c.topology.trusted = None;
                    c.topology.trust_probability = p;
                    (format!("p_c={p}"), c)
                })
                .collect(),
            Sweep::Epsilon(es) => es
                .iter()
                .map(|&e| {
                    let mut c = self.base.clone();
                    c.privacy.enabled = true;
                    c.privacy.epsilon_total = e;
                    (format!("epsilon={e}"), c)
                })
                .collect(),
            Sweep::NetworkConfig(points) => points
                .iter()
                .map(|p| {
                    let mut c = self.base.clone();
                    c.topology.num_subnets = p.num_subnets;
                    c.topology.devices_per_subnet = p.devices_per_subnet;
                    c.topology.subnet_sizes = None;
                    c.topology.trusted = None;
                    (format!("N={},s={}", p.num_subnets, p.devices_per_subnet), c)
                })
                .collect(),
            Sweep::Baseline(bs) => bs
                .iter()
                .map(|b| {
                    let mut c = self.base.clone();
                    c.topology.trusted = None;
                    let label = match b {
                        Baseline::DpOff => {
                            c.privacy.enabled = false;
                            "dp_off"
                        }
                        Baseline::AllUntrusted => {
                            c.privacy.enabled = true;
                            c.topology.trust_probability = 0.0;
                            "p_c=0"
                        }
                        Baseline::AllTrusted => {
                            c.privacy.enabled = true;
                            c.topology.trust_probability = 1.0;
                            "p_c=1"
                        }
                    };
                    (label.to_string(), c)
                })
                .collect(),
        };
        let mut runs = Vec::with_capacity(variants.len() * self.seeds.len());
        for (label, config) in variants {
            for &seed in &self.seeds {
                let mut c = config.clone();
                c.master_seed = seed;
                c.repeats = 1;
                c.name = self.name.clone();
                runs.push(PlannedRun { axis_value: label.clone(), seed, config: c });
            }
        }
        runs
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

/// Execute, analyze and write one planned run into `dir`.
fn perform(run: &PlannedRun, scenario: &str, dir: &Path, debug: bool) -> Result<SummaryRow, HarnessError> {
    let (task, trace) = execute(&run.config, SeedBook::new(run.seed, 0), debug)?;
    let report = analyze(&run.config, &task, &trace);
    write_run_files(dir, &run.config, &trace, &report)?;
    Ok(SummaryRow {
        scenario: scenario.to_string(),
        axis_value: run.axis_value.clone(),
        seed: run.seed,
        final_loss: trace.final_loss,
        final_accuracy: trace.final_accuracy,
        lhs_cavg_gradnorm: report.theorem.lhs_empirical,
        bound_a1: report.theorem.term_a1,
        bound_a2: report.theorem.term_a2,
        bound_b: report.theorem.term_b,
        bound_satisfied: report.theorem.satisfied,
    })
}

/// Run every (value, seed) pair, possibly in parallel, and write
/// `<out_root>/<name>/<value>/seed_<s>/…` plus `summary.csv` and
/// `by_value.csv`. Returns the summary rows in run-set order.
pub fn run_scenario(scenario: &Scenario, out_root: &Path, opts: ExecOptions) -> Result<Vec<SummaryRow>, HarnessError> {
    let runs = scenario.runs();
    let target = out_root.join(&scenario.name);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    commit_dir(&target, opts.force, |staging| {
        let results: Vec<Result<SummaryRow, HarnessError>> = pool(opts.jobs)?.install(|| {
            runs.par_iter()
                .map(|r| {
                    let dir = staging.join(&r.axis_value).join(format!("seed_{}", r.seed));
                    perform(r, &scenario.name, &dir, opts.debug_invariants)
                })
                .collect()
        });
        for (r, res) in runs.iter().zip(results) {
            match res {
                Ok(row) => rows.push(row),
                Err(e) => failures.push((format!("{} seed {}", r.axis_value, r.seed), e)),
            }
        }
        std::fs::write(staging.join("scenario.toml"), toml::to_string(scenario).expect("scenario serializes"))?;
        std::fs::write(staging.join("summary.csv"), emit_summary(&rows))?;
        std::fs::write(staging.join("by_value.csv"), emit_by_value(&rows))?;
        if !failures.is_empty() {
            let text: String = failures.iter().map(|(what, e)| format!("{what}: {e}\n")).collect();
            std::fs::write(staging.join("failures.txt"), text)?;
        }
        Ok(())
    })?;
    if let Some((what, e)) = failures.into_iter().next() {
        return Err(match e {
            HarnessError::Budget(_) | HarnessError::Config { .. } | HarnessError::Parse(_) => e,
            other => HarnessError::Runtime(format!("{what}: {other}")),
        });
    }
    Ok(rows)
}

/// `repeats` runs of one config under `<out_root>/<name>/run_<r>/`.
pub fn run_config(config: &RunConfig, out_root: &Path, opts: ExecOptions) -> Result<PathBuf, HarnessError> {
    config.validate()?;
    let target = out_root.join(&config.name);
    commit_dir(&target, opts.force, |staging| {
        let results: Vec<Result<(), HarnessError>> = pool(opts.jobs)?.install(|| {
            (0..config.repeats)
                .into_par_iter()
                .map(|r| {
                    let seeds = SeedBook::new(config.master_seed, r as u64);
                    let (task, trace) = execute(config, seeds, opts.debug_invariants)?;
                    let report = analyze(config, &task, &trace);
                    write_run_files(&staging.join(format!("run_{r}")), config, &trace, &report)
                })
                .collect()
        });
        results.into_iter().collect::<Result<Vec<()>, _>>()?;
        Ok(())
    })?;
    Ok(target)
}
