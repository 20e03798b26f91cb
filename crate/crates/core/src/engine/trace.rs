use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DpMode, NoiseDraw, RunOptions, Schedule, StepSizeSchedule};
use crate::analysis::DispersionSample;
use crate::model::ModelVector;
use crate::privacy::{EventKind, NoisePlan, PrivacyLedger};
use crate::scalar::Scalar;
use crate::tasks::TaskKind;
use crate::topology::Topology;

/// Noise-free evaluation of `w̄^{(t_k)}` and the noise injected during interval `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: usize,
    pub t_k: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub accuracy: Option<f64>,
    pub eta: f64,
    /// Mean over the interval's local aggregations of the net noise norm a subnet model received.
    pub noise_l2_local_mean: f64,
    /// Norm of `Σ_c ϱ_c` (candidate noise) at the closing global aggregation.
    pub noise_l2_global: f64,
    /// SHA-256 of the model's little-endian `f64` coordinates.
    pub model_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRecord {
    pub t: usize,
    pub k: usize,
    pub event: EventKind,
    pub subnet: usize,
    pub trusted: bool,
    pub noise_l2: f64,
}

/// Raw material for replaying one global round by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AuditRound<T> {
    pub k: usize,
    pub start_model: ModelVector<T>,
    /// Per device, `η_k Σ ĝ` over the whole interval.
    pub gradient_sums: Vec<ModelVector<T>>,
    pub noises: Vec<NoiseDraw<T>>,
    pub end_model: ModelVector<T>,
}

/// Engine inputs, echoed so a trace documents how it was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEcho {
    pub task_kind: TaskKind,
    pub model_dim: usize,
    pub topology: Topology,
    pub schedule: Schedule,
    pub steps: StepSizeSchedule,
    pub dp: DpMode,
    pub options: RunOptions,
    pub grad_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainTrace<T> {
    pub echo: RunEcho,
    pub plan: NoisePlan,
    pub ledger: PrivacyLedger,
    /// Exactly `K_g` records, at `t_0 … t_{K_g−1}`.
    pub rounds: Vec<RoundRecord>,
    /// Evaluation of `w̄^{(T)}`.
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub final_accuracy: Option<f64>,
    pub final_digest: String,
    pub events: Vec<AggregationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dispersion: Vec<DispersionSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<AuditRound<T>>,
    pub final_model: ModelVector<T>,
}

pub(crate) fn digest<T: Scalar>(model: &ModelVector<T>) -> String {
    let mut h = Sha256::new();
    for x in model.iter() {
        h.update(x.to_f64_lossy().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Column order of the per-round CSV.
pub const ROUND_COLUMNS: [&str; 8] = [
    "k",
    "t_k",
    "loss",
    "grad_norm_sq",
    "accuracy",
    "eta_k",
    "noise_l2_local_mean",
    "noise_l2_global",
];

impl<T: Scalar> TrainTrace<T> {
    /// `(1/K_g) Σ_k ‖∇F(w̄^{(t_k)})‖²`.
    pub fn cumulative_average_grad_norm(&self) -> f64 {
        let n = self.rounds.len();
        if n == 0 {
            return 0.0;
        }
        self.rounds.iter().map(|r| r.grad_norm_sq).sum::<f64>() / n as f64
    }

    pub fn local_event_count(&self, subnet: usize) -> usize {
        self.events.iter().filter(|e| e.subnet == subnet && e.event == EventKind::Local).count()
    }

    pub fn global_event_count(&self) -> usize {
        self.events.iter().filter(|e| e.event == EventKind::Global && e.subnet == 0).count()
    }

    /// Per-round CSV body; floats use the shortest round-trip form.
    pub fn rounds_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ROUND_COLUMNS)?;
        for r in &self.rounds {
            w.write_record([
                r.k.to_string(),
                r.t_k.to_string(),
                r.loss.to_string(),
                r.grad_norm_sq.to_string(),
                r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                r.eta.to_string(),
                r.noise_l2_local_mean.to_string(),
                r.noise_l2_global.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
