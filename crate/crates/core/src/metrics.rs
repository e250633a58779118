//! Per-run metrics and per-cell aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mitigation::report::ClassificationReport;
use crate::model::{WorkerClass, WorkerId};
use crate::sim::trace::RunTrace;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// How a run's first collusion declaration relates to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectionOutcome {
    /// Declared at or after activation.
    TruePositive { delay_s: f64, epochs: u64 },
    /// Declared with no active collusion.
    FalsePositive,
    /// Collusion existed and was never declared.
    Missed,
    TrueNegative,
}

impl DetectionOutcome {
    pub fn declared(self) -> bool {
        matches!(self, Self::TruePositive { .. } | Self::FalsePositive)
    }
}

pub fn detection_outcome(trace: &RunTrace) -> DetectionOutcome {
    match (trace.activation, trace.first_detection()) {
        (Some(a), Some(d)) if d.time >= a => DetectionOutcome::TruePositive {
            delay_s: d.time.as_secs() - a.as_secs(),
            epochs: d.epoch,
        },
        (_, Some(_)) => DetectionOutcome::FalsePositive,
        (Some(_), None) => DetectionOutcome::Missed,
        (None, None) => DetectionOutcome::TrueNegative,
    }
}

/// Seconds from activation to first declaration; `Some(INFINITY)` when
/// collusion was never declared, `None` for no-collusion runs and false
/// positives.
pub fn detection_delay(trace: &RunTrace) -> Option<f64> {
    match detection_outcome(trace) {
        DetectionOutcome::TruePositive { delay_s, .. } => Some(delay_s),
        DetectionOutcome::Missed => Some(f64::INFINITY),
        _ => None,
    }
}

/// f1 with "collusion declared" as the positive class; `None` without any
/// collusion runs.
pub fn detection_f1(outcomes: &[DetectionOutcome]) -> Option<f64> {
    let (mut tp, mut fp, mut fneg, mut pos) = (0u64, 0u64, 0u64, 0u64);
    for o in outcomes {
        match o {
            DetectionOutcome::TruePositive { .. } => {
                tp += 1;
                pos += 1;
            }
            DetectionOutcome::Missed => {
                fneg += 1;
                pos += 1;
            }
            DetectionOutcome::FalsePositive => fp += 1,
            DetectionOutcome::TrueNegative => {}
        }
    }
    if pos == 0 {
        return None;
    }
    Some(f1(tp, fp, fneg))
}

pub fn f1(tp: u64, fp: u64, fneg: u64) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fneg as f64)
    }
}

/// Per-worker f1 with colluding as the positive class; workers reported as
/// naive-malicious are left out. Returns `(0.0, true)` without a report.
pub fn mitigation_f1(report: Option<&ClassificationReport>, roster: &[WorkerClass]) -> (f64, bool) {
    let Some(r) = report else {
        return (0.0, true);
    };
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (i, &class) in roster.iter().enumerate() {
        let w = WorkerId(i as u32);
        if r.malicious.contains(&w) {
            continue;
        }
        let truth = class == WorkerClass::Colluding;
        let pred = r.colluding.contains(&w);
        match (truth, pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    (f1(tp, fp, fneg), false)
}

/// Seconds from activation to the final report; `None` means INF.
pub fn mitigation_latency(trace: &RunTrace) -> Option<f64> {
    let a = trace.activation?;
    let r = trace.report.as_ref()?;
    Some(r.end_time.as_secs() - a.as_secs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub schema_version: u32,
    pub scheme: String,
    pub colluding_fraction: f64,
    pub p_collude: f64,
    pub seed: u64,
    pub cvt_len: usize,
    pub e: usize,
    pub ground_truth_collusion: bool,
    pub detected: bool,
    pub false_positive: bool,
    /// Empty when INF or not applicable; see `detected`.
    pub detection_delay_s: Option<f64>,
    pub detection_epochs: Option<u64>,
    pub mitigation_f1: f64,
    pub mitigation_incomplete: bool,
    /// Empty when INF.
    pub mitigation_latency_s: Option<f64>,
    pub wall_ms: f64,
}

impl MetricRow {
    pub fn from_trace(trace: &RunTrace, colluding_fraction: f64, p_collude: f64, cvt_len: usize, e: usize) -> Self {
        let outcome = detection_outcome(trace);
        let (delay, epochs) = match outcome {
            DetectionOutcome::TruePositive { delay_s, epochs } => (Some(delay_s), Some(epochs)),
            _ => (None, None),
        };
        let collusion = trace.activation.is_some();
        let (f1, incomplete) = if collusion {
            mitigation_f1(trace.report.as_ref(), &trace.roster)
        } else {
            (0.0, trace.report.is_none())
        };
        Self {
            schema_version: CSV_SCHEMA_VERSION,
            scheme: trace.scheme.clone(),
            colluding_fraction,
            p_collude,
            seed: trace.seed,
            cvt_len,
            e,
            ground_truth_collusion: collusion,
            detected: matches!(outcome, DetectionOutcome::TruePositive { .. }),
            false_positive: outcome == DetectionOutcome::FalsePositive,
            detection_delay_s: delay,
            detection_epochs: epochs,
            mitigation_f1: f1,
            mitigation_incomplete: incomplete,
            mitigation_latency_s: if collusion { mitigation_latency(trace) } else { None },
            wall_ms: trace.wall_ms,
        }
    }

    pub fn outcome(&self) -> DetectionOutcome {
        match (self.ground_truth_collusion, self.detected, self.false_positive) {
            (_, true, _) => DetectionOutcome::TruePositive {
                delay_s: self.detection_delay_s.unwrap_or(0.0),
                epochs: self.detection_epochs.unwrap_or(0),
            },
            (_, false, true) => DetectionOutcome::FalsePositive,
            (true, false, false) => DetectionOutcome::Missed,
            (false, false, false) => DetectionOutcome::TrueNegative,
        }
    }

    /// Delay with INF for undetected collusion runs; `None` otherwise.
    pub fn delay_or_inf(&self) -> Option<f64> {
        match self.outcome() {
            DetectionOutcome::TruePositive { delay_s, .. } => Some(delay_s),
            DetectionOutcome::Missed => Some(f64::INFINITY),
            _ => None,
        }
    }
}

/// Linear-interpolation quantile of sorted values (INF allowed).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || sorted[lo] == sorted[hi] {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub scheme: String,
    /// Fractions in thousandths so the key is hashable.
    pub colluding_milli: u32,
    pub p_collude_milli: u32,
    pub cvt_len: usize,
    pub e: usize,
}

impl CellKey {
    pub fn of(row: &MetricRow) -> Self {
        Self {
            scheme: row.scheme.clone(),
            colluding_milli: (row.colluding_fraction * 1000.0).round() as u32,
            p_collude_milli: (row.p_collude * 1000.0).round() as u32,
            cvt_len: row.cvt_len,
            e: row.e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: String,
    pub colluding_fraction: f64,
    pub p_collude: f64,
    pub cvt_len: usize,
    pub e: usize,
    pub runs: usize,
    /// Over this cell plus the matching no-collusion control cell.
    pub detection_f1: Option<f64>,
    /// Fraction of collusion runs declared at or after activation.
    pub success_rate: Option<f64>,
    pub false_positives: usize,
    /// `None` in JSON means INF.
    pub median_delay_s: Option<f64>,
    pub delay_quantiles_s: Vec<(f64, Option<f64>)>,
    pub median_epochs: Option<f64>,
    pub mean_mitigation_f1: Option<f64>,
    pub incomplete_mitigations: usize,
    pub median_mitigation_latency_s: Option<f64>,
}

fn finite(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

pub fn summarize(rows: &[MetricRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        cells.entry(CellKey::of(r)).or_default().push(r);
    }
    let mut out = Vec::new();
    for (key, members) in &cells {
        let first = members[0];
        let control_key = CellKey {
            colluding_milli: 0,
            ..key.clone()
        };
        let mut outcomes: Vec<DetectionOutcome> = members.iter().map(|r| r.outcome()).collect();
        if key.colluding_milli != 0 {
            if let Some(ctrl) = cells.get(&control_key) {
                outcomes.extend(ctrl.iter().map(|r| r.outcome()));
            }
        }
        let collusion: Vec<&&MetricRow> = members.iter().filter(|r| r.ground_truth_collusion).collect();
        let mut delays: Vec<f64> = collusion.iter().filter_map(|r| r.delay_or_inf()).collect();
        delays.sort_by(f64::total_cmp);
        let epochs: Vec<f64> = collusion
            .iter()
            .filter_map(|r| r.detection_epochs.map(|e| e as f64))
            .collect();
        let latencies: Vec<f64> = collusion
            .iter()
            .map(|r| r.mitigation_latency_s.unwrap_or(f64::INFINITY))
            .collect();
        let n_coll = collusion.len();
        out.push(CellSummary {
            scheme: key.scheme.clone(),
            colluding_fraction: first.colluding_fraction,
            p_collude: first.p_collude,
            cvt_len: key.cvt_len,
            e: key.e,
            runs: members.len(),
            detection_f1: detection_f1(&outcomes),
            success_rate: (n_coll > 0).then(|| collusion.iter().filter(|r| r.detected).count() as f64 / n_coll as f64),
            false_positives: members.iter().filter(|r| r.false_positive).count(),
            median_delay_s: finite(quantile(&delays, 0.5)),
            delay_quantiles_s: SUMMARY_QUANTILES
                .iter()
                .map(|&q| (q, finite(quantile(&delays, q))))
                .collect(),
            median_epochs: median(&epochs),
            mean_mitigation_f1: (n_coll > 0)
                .then(|| collusion.iter().map(|r| r.mitigation_f1).sum::<f64>() / n_coll as f64),
            incomplete_mitigations: collusion.iter().filter(|r| r.mitigation_incomplete).count(),
            median_mitigation_latency_s: finite(median(&latencies)),
        });
    }
    out
}
