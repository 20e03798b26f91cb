use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("local period m = {period} exceeds interval length tau = {tau} (interval {k})")]
    PeriodExceedsTau { k: usize, period: usize, tau: usize },
    #[error("gamma = {gamma} exceeds min(1/tau, 1/K_g)/beta = {cap}; set the override flag to run anyway")]
    StepSizeCap { gamma: f64, cap: f64 },
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("beta estimate must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("{0} per-interval values for {1} intervals")]
    IntervalCount(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub tau: usize,
    pub period: usize,
}

/// Global-aggregation intervals and local-aggregation instants.
///
/// Interval `k` covers `t_k+1 ..= t_{k+1}`. Local aggregations happen at
/// `t_k + m, t_k + 2m, …` strictly before `t_{k+1}`; the global aggregation
/// at `t_{k+1}` absorbs the last segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct Schedule {
    intervals: Vec<Interval>,
    starts: Vec<usize>,
}

pub fn make_schedule(global_rounds: usize, tau: usize, period: usize) -> Result<Schedule, ScheduleError> {
    if global_rounds == 0 {
        return Err(ScheduleError::Zero("number of global aggregations"));
    }
    Schedule::from_intervals(vec![Interval { tau, period }; global_rounds])
}

impl Schedule {
    /// Per-interval lengths and local periods (non-uniform schedules are
    /// supported by the engine but not by the bound analysis).
    pub fn from_intervals(intervals: Vec<Interval>) -> Result<Self, ScheduleError> {
        if intervals.is_empty() {
            return Err(ScheduleError::Zero("number of global aggregations"));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if iv.tau == 0 {
                return Err(ScheduleError::Zero("tau"));
            }
            if iv.period == 0 {
                return Err(ScheduleError::Zero("local period m"));
            }
            if iv.period > iv.tau {
                return Err(ScheduleError::PeriodExceedsTau { k, period: iv.period, tau: iv.tau });
            }
        }
        let mut starts = Vec::with_capacity(intervals.len() + 1);
        starts.push(0);
        for iv in &intervals {
            starts.push(starts.last().unwrap() + iv.tau);
        }
        Ok(Self { intervals, starts })
    }

    pub fn global_rounds(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, k: usize) -> Interval {
        self.intervals[k]
    }

    pub fn tau(&self, k: usize) -> usize {
        self.intervals[k].tau
    }

    pub fn max_tau(&self) -> usize {
        self.intervals.iter().map(|iv| iv.tau).max().unwrap_or(0)
    }

    /// `t_k`, for `k` in `0 ..= K_g`.
    pub fn start(&self, k: usize) -> usize {
        self.starts[k]
    }

    /// Horizon `T = t_{K_g}`.
    pub fn horizon(&self) -> usize {
        *self.starts.last().unwrap()
    }

    /// Local-aggregation instants of interval `k`.
    pub fn local_instants(&self, k: usize) -> Vec<usize> {
        let Interval { tau, period } = self.intervals[k];
        let t0 = self.starts[k];
        (1..).map(|j| j * period).take_while(|&off| off < tau).map(|off| t0 + off).collect()
    }

    /// `K_{k} = ⌊(τ_k − 1)/m_k⌋`.
    pub fn local_count(&self, k: usize) -> usize {
        let Interval { tau, period } = self.intervals[k];
        (tau - 1) / period
    }

    /// Total local aggregations over the run, `ℓ_c`.
    pub fn total_local(&self) -> usize {
        (0..self.global_rounds()).map(|k| self.local_count(k)).sum()
    }

    /// Whether every interval shares the same `τ` and `m`.
    pub fn is_uniform(&self) -> bool {
        self.intervals.windows(2).all(|w| w[0] == w[1])
    }

    /// `K_ℓ` for a uniform schedule.
    pub fn uniform_local_count(&self) -> Option<usize> {
        self.is_uniform().then(|| self.local_count(0))
    }

    /// Interval index containing time `t ∈ 1..=T`.
    pub fn interval_of(&self, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.horizon());
        self.starts.partition_point(|&s| s < t) - 1
    }

    pub fn is_local_instant(&self, t: usize) -> bool {
        let k = self.interval_of(t);
        let off = t - self.starts[k];
        off < self.intervals[k].tau && off % self.intervals[k].period == 0
    }

    pub fn is_global_instant(&self, t: usize) -> bool {
        t > 0 && self.starts.binary_search(&t).is_ok()
    }
}

impl TryFrom<Vec<Interval>> for Schedule {
    type Error = ScheduleError;
    fn try_from(v: Vec<Interval>) -> Result<Self, Self::Error> {
        Schedule::from_intervals(v)
    }
}

impl From<Schedule> for Vec<Interval> {
    fn from(s: Schedule) -> Self {
        s.intervals
    }
}

/// `η_k = γ / √(k+1)` with the cap `γ ≤ min{1/τ, 1/K_g}/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub gamma: f64,
    pub beta_estimate: f64,
    /// Skip the cap check.
    pub allow_uncapped: bool,
}

impl StepSizeSchedule {
    pub fn new(gamma: f64, beta_estimate: f64) -> Self {
        Self { gamma, beta_estimate, allow_uncapped: false }
    }

    pub fn uncapped(gamma: f64) -> Self {
        Self { gamma, beta_estimate: 1.0, allow_uncapped: true }
    }

    pub fn cap(&self, schedule: &Schedule) -> f64 {
        let tau = schedule.max_tau() as f64;
        let kg = schedule.global_rounds() as f64;
        (1.0 / tau).min(1.0 / kg) / self.beta_estimate
    }

    pub fn validate(&self, schedule: &Schedule) -> Result<(), ScheduleError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ScheduleError::BadGamma(self.gamma));
        }
        if !(self.beta_estimate > 0.0 && self.beta_estimate.is_finite()) {
            return Err(ScheduleError::BadBeta(self.beta_estimate));
        }
        let cap = self.cap(schedule);
        if !self.allow_uncapped && self.gamma > cap {
            return Err(ScheduleError::StepSizeCap { gamma: self.gamma, cap });
        }
        Ok(())
    }

    pub fn step_size<T: Scalar>(&self, k: usize) -> T {
        T::of(self.gamma) / T::of_usize(k + 1).sqrt()
    }
}
