//! Periodic collusion detection over a small table of previously verified
//! genuine tasks (the CVT).
//!
//! Each entry remembers the majority value `V` of its task and the value
//! every worker returned for it. Probes re-send an entry's task to workers
//! that never received it. A probe result triggers detection when it
//! disagrees with `V` and some other worker already returned the same
//! value: two workers agreeing on a non-majority result.

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::model::{ResultValue, SimTime, TaskId, Vote, WorkerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detect {
    NoCollusion,
    Collusion,
}

impl Detect {
    pub fn sign(self) -> i8 {
        match self {
            Detect::NoCollusion => -1,
            Detect::Collusion => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdmitError {
    Duplicate(TaskId),
    Full,
}

/// What the triggering probe revealed, kept for the greedy grouping fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvidence {
    pub task: TaskId,
    pub majority: ResultValue,
    /// Workers that returned the matching non-majority value.
    pub minority_workers: Vec<WorkerId>,
    /// Workers that returned `majority`.
    pub majority_workers: Vec<WorkerId>,
    /// Every worker with a recorded result for the task.
    pub probed: Vec<WorkerId>,
}

#[derive(Debug, Clone)]
pub struct CvtEntry {
    pub task: TaskId,
    majority: Option<ResultValue>,
    recorded: Vec<Option<ResultValue>>,
    value_counts: FxHashMap<ResultValue, u32>,
    received: FixedBitSet,
    comparisons: u64,
}

impl CvtEntry {
    pub fn new(task: TaskId, majority: Option<ResultValue>, n_workers: usize) -> Self {
        Self {
            task,
            majority,
            recorded: vec![None; n_workers],
            value_counts: FxHashMap::default(),
            received: FixedBitSet::with_capacity(n_workers),
            comparisons: 0,
        }
    }

    pub fn majority(&self) -> Option<ResultValue> {
        self.majority
    }

    pub fn recorded(&self, w: WorkerId) -> Option<ResultValue> {
        self.recorded[w.index()]
    }

    pub fn recorded_count(&self) -> usize {
        self.recorded.iter().filter(|r| r.is_some()).count()
    }

    /// Equality comparisons and lookups performed by `detect` so far.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    /// Workers that never received this task.
    pub fn unprobed(&self) -> Vec<WorkerId> {
        (0..self.recorded.len())
            .filter(|&i| !self.received.contains(i) && self.recorded[i].is_none())
            .map(|i| WorkerId(i as u32))
            .collect()
    }

    pub fn mark_received(&mut self, w: WorkerId) {
        self.received.insert(w.index());
    }

    /// Records `R_j` without running detection (original replication votes).
    pub fn record(&mut self, w: WorkerId, value: ResultValue) {
        self.mark_received(w);
        let slot = &mut self.recorded[w.index()];
        if slot.is_none() {
            *slot = Some(value);
            *self.value_counts.entry(value).or_insert(0) += 1;
        }
    }

    /// Sets `V` if it is still unset.
    pub fn resolve_majority(&mut self, value: Option<ResultValue>) {
        if self.majority.is_none() {
            self.majority = value;
        }
    }

    pub fn evidence(&self, value: ResultValue) -> Option<DetectionEvidence> {
        let majority = self.majority?;
        let pick = |target: ResultValue| -> Vec<WorkerId> {
            self.recorded
                .iter()
                .enumerate()
                .filter(|(_, r)| **r == Some(target))
                .map(|(i, _)| WorkerId(i as u32))
                .collect()
        };
        Some(DetectionEvidence {
            task: self.task,
            majority,
            minority_workers: pick(value),
            majority_workers: pick(majority),
            probed: self
                .recorded
                .iter()
                .enumerate()
                .filter(|(_, r)| r.is_some())
                .map(|(i, _)| WorkerId(i as u32))
                .collect(),
        })
    }
}

/// Runs the detection rule for a probe result on `entry`.
///
/// On `NoCollusion` the result is recorded (and becomes `V` if none was
/// set). On `Collusion` the result is also recorded so that the evidence
/// lists both agreeing workers; the caller is expected to wipe the table.
pub fn detect(entry: &mut CvtEntry, vote: &Vote) -> Detect {
    if vote.task != entry.task || entry.recorded[vote.worker.index()].is_some() {
        return Detect::NoCollusion;
    }
    entry.comparisons += 1;
    let Some(v) = entry.majority else {
        entry.majority = Some(vote.value);
        entry.record(vote.worker, vote.value);
        return Detect::NoCollusion;
    };
    entry.comparisons += 1;
    if vote.value == v {
        entry.record(vote.worker, vote.value);
        return Detect::NoCollusion;
    }
    entry.comparisons += 1;
    let seen = entry.value_counts.contains_key(&vote.value);
    entry.record(vote.worker, vote.value);
    if seen {
        Detect::Collusion
    } else {
        Detect::NoCollusion
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeSelection {
    Probe { task: TaskId, pool: Vec<WorkerId> },
    ReplacementNeeded(TaskId),
    Empty,
}

#[derive(Debug, Clone)]
pub struct CvtTable {
    entries: Vec<CvtEntry>,
    capacity: usize,
    n_workers: usize,
    pub next_probe_due: SimTime,
}

impl CvtTable {
    pub fn new(capacity: usize, n_workers: usize) -> Self {
        Self {
            entries: Vec::with_capacity(capacity),
            capacity,
            n_workers,
            next_probe_due: SimTime::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, task: TaskId) -> bool {
        self.entries.iter().any(|e| e.task == task)
    }

    pub fn entry(&self, task: TaskId) -> Option<&CvtEntry> {
        self.entries.iter().find(|e| e.task == task)
    }

    pub fn entry_mut(&mut self, task: TaskId) -> Option<&mut CvtEntry> {
        self.entries.iter_mut().find(|e| e.task == task)
    }

    pub fn entries(&self) -> &[CvtEntry] {
        &self.entries
    }

    /// Inserts a genuine task with the majority of its original vote
    /// (`None` while that vote is still outstanding).
    pub fn admit(&mut self, task: TaskId, majority: Option<ResultValue>) -> Result<&mut CvtEntry, AdmitError> {
        if self.contains(task) {
            return Err(AdmitError::Duplicate(task));
        }
        if self.is_full() {
            return Err(AdmitError::Full);
        }
        self.entries.push(CvtEntry::new(task, majority, self.n_workers));
        Ok(self.entries.last_mut().expect("just pushed"))
    }

    /// Removes the exhausted entry `old` and admits `task` in its place.
    pub fn replace(
        &mut self,
        old: TaskId,
        task: TaskId,
        majority: Option<ResultValue>,
    ) -> Result<&mut CvtEntry, AdmitError> {
        if old != task && self.contains(task) {
            return Err(AdmitError::Duplicate(task));
        }
        self.entries.retain(|e| e.task != old);
        self.admit(task, majority)
    }

    pub fn remove(&mut self, task: TaskId) {
        self.entries.retain(|e| e.task != task);
    }

    /// Picks a random entry and a probe pool of `k` workers that never
    /// received it. Signals a replacement when `|C_P| <= k`.
    pub fn select_probe<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> ProbeSelection {
        let Some(entry) = self.entries.choose(rng) else {
            return ProbeSelection::Empty;
        };
        let candidates = entry.unprobed();
        if candidates.len() <= k {
            return ProbeSelection::ReplacementNeeded(entry.task);
        }
        ProbeSelection::Probe {
            task: entry.task,
            pool: candidates.choose_multiple(rng, k).copied().collect(),
        }
    }

    /// Routes a probe result to its entry. Results for evicted entries are
    /// ignored.
    pub fn on_probe_vote(&mut self, vote: &Vote) -> Detect {
        match self.entry_mut(vote.task) {
            Some(e) => detect(e, vote),
            None => Detect::NoCollusion,
        }
    }

    pub fn wipe(&mut self) {
        self.entries.clear();
    }
}
