//! Run output and its line-delimited serialization.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::mitigation::report::ClassificationReport;
use crate::mitigation::PhaseRecord;
use crate::model::{SimTime, WorkerClass, WorkerId};

pub const TRACE_SCHEMA: &str = "collusion-trace";
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub time: SimTime,
    pub task: u64,
    pub triggering_workers: Vec<WorkerId>,
    /// Probe dispatches (or baseline rounds) since collusion activation.
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub time: SimTime,
    pub task: u64,
    pub kind: String,
    pub pool: Vec<WorkerId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub events: u64,
    pub genuine_tasks: u64,
    pub dispatched_messages: u64,
    pub delivered_votes: u64,
    pub probes: u64,
    pub end_time: SimTime,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub scheme: String,
    pub seed: u64,
    pub config: String,
    pub roster: Vec<WorkerClass>,
    /// `None` when the run has no colluders.
    pub activation: Option<SimTime>,
    pub detections: Vec<DetectionRecord>,
    pub report: Option<ClassificationReport>,
    pub phases: Vec<PhaseRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub stats: RunStats,
    /// Wall-clock duration; excluded from determinism comparisons.
    pub wall_ms: f64,
}

impl RunTrace {
    pub fn first_detection(&self) -> Option<&DetectionRecord> {
        self.detections.first()
    }

    /// Everything except wall-clock timing, as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut line = |v: Value| -> io::Result<()> {
            serde_json::to_writer(&mut out, &v)?;
            out.write_all(b"\n")
        };
        line(json!({ "schema": TRACE_SCHEMA, "version": TRACE_SCHEMA_VERSION }))?;
        line(json!({
            "record": "run",
            "scheme": self.scheme,
            "seed": self.seed,
            "config": self.config,
            "roster": self.roster,
            "activation": self.activation,
        }))?;
        for d in &self.detections {
            line(json!({ "record": "detection", "detection": d }))?;
        }
        for p in &self.phases {
            line(json!({ "record": "phase", "phase": p }))?;
        }
        if let Some(r) = &self.report {
            line(json!({ "record": "report", "report": r }))?;
        }
        for d in &self.dispatches {
            line(json!({ "record": "dispatch", "dispatch": d }))?;
        }
        line(json!({ "record": "stats", "stats": self.stats }))?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn colluders(&self) -> Vec<WorkerId> {
        self.roster
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == WorkerClass::Colluding)
            .map(|(i, _)| WorkerId(i as u32))
            .collect()
    }
}

/// Checks the schema header of a trace file and returns its records.
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<Value>> {
    let mut lines = input.lines();
    let header: Value = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => return Err(io::Error::new(io::ErrorKind::InvalidData, "empty trace")),
    };
    if header["schema"] != TRACE_SCHEMA || header["version"] != TRACE_SCHEMA_VERSION {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unsupported trace header {header}")));
    }
    lines
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
