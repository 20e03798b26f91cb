use serde::{Deserialize, Serialize};

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "scenario",
    "axis_value",
    "seed",
    "final_loss",
    "final_accuracy",
    "lhs_cavg_gradnorm",
    "bound_a1",
    "bound_a2",
    "bound_b",
    "bound_satisfied",
];

/// One line of the scenario summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub axis_value: String,
    pub seed: u64,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub lhs_cavg_gradnorm: f64,
    pub bound_a1: f64,
    pub bound_a2: f64,
    pub bound_b: f64,
    pub bound_satisfied: bool,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Per-run CSV. Floats use Rust's shortest round-trip formatting, so
/// re-emitting the same rows is byte-identical.
pub fn emit_summary(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.axis_value.clone(),
            r.seed.to_string(),
            r.final_loss.to_string(),
            opt(r.final_accuracy),
            r.lhs_cavg_gradnorm.to_string(),
            r.bound_a1.to_string(),
            r.bound_a2.to_string(),
            r.bound_b.to_string(),
            r.bound_satisfied.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of the final metrics per axis value,
/// in order of first appearance.
pub fn emit_by_value(rows: &[SummaryRow]) -> String {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.axis_value.as_str()) {
            order.push(&r.axis_value);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "axis_value",
        "runs",
        "final_loss_mean",
        "final_loss_std",
        "final_accuracy_mean",
        "final_accuracy_std",
    ])
    .expect("in-memory write");
    for value in order {
        let group: Vec<&SummaryRow> = rows.iter().filter(|r| r.axis_value == value).collect();
        let losses: Vec<f64> = group.iter().map(|r| r.final_loss).collect();
        let accs: Vec<f64> = group.iter().filter_map(|r| r.final_accuracy).collect();
        let (lm, ls) = mean_std(&losses);
        let (am, asd) = if accs.is_empty() { (None, None) } else {
            let (m, s) = mean_std(&accs);
            (Some(m), Some(s))
        };
        w.write_record([
            value.to_string(),
            group.len().to_string(),
            lm.to_string(),
            ls.to_string(),
            opt(am),
            opt(asd),
        ])
        .expect("in-memory write");
    }
    finish(w)
}
