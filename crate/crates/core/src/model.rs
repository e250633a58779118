//! Shared domain types: workers, tasks, result values, votes and the
//! ground-truth roster.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub u32);

impl WorkerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrigin {
    Genuine,
    CvtProbe,
    MitigationProbe,
}

/// A task identity. The sequence number is unique per run; the origin is
/// fixed when the task is created. Probes re-send existing tasks, so a
/// re-dispatched task keeps its original id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub seq: u64,
    pub origin: TaskOrigin,
}

impl TaskId {
    pub fn genuine(seq: u64) -> Self {
        Self {
            seq,
            origin: TaskOrigin::Genuine,
        }
    }
}

/// Opaque result token. Verifier logic only ever compares these for equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultValue(pub u64);

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The designated correct value of a task. Only workers and ground-truth
/// metrics may call this.
pub fn correct_value(task: TaskId) -> ResultValue {
    ResultValue(mix64(task.seq))
}

/// The wrong value a collusion ring agrees on for `task`.
pub fn ring_value(task: TaskId, salt: u64) -> ResultValue {
    let v = mix64(task.seq ^ salt);
    let correct = correct_value(task).0;
    if v == correct {
        ResultValue(v ^ 1)
    } else {
        ResultValue(v)
    }
}

/// A fresh random value that differs from the correct one.
pub fn random_wrong_value<R: Rng + ?Sized>(task: TaskId, rng: &mut R) -> ResultValue {
    let correct = correct_value(task).0;
    loop {
        let v: u64 = rng.gen();
        if v != correct {
            return ResultValue(v);
        }
    }
}

/// Simulated time in whole microseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: f64) -> Self {
        SimTime((secs * 1e6).round().max(0.0) as u64)
    }

    pub fn from_millis(ms: f64) -> Self {
        SimTime((ms * 1e3).round().max(0.0) as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus(self, micros: u64) -> Self {
        SimTime(self.0 + micros)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub task: TaskId,
    pub worker: WorkerId,
    pub value: ResultValue,
    pub arrival_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerClass {
    Honest,
    NaiveMalicious,
    Colluding,
}

/// Ground-truth class of every worker, indexed by `WorkerId`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    classes: Vec<WorkerClass>,
}

impl Roster {
    pub fn from_classes(classes: Vec<WorkerClass>) -> Self {
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, w: WorkerId) -> WorkerClass {
        self.classes[w.index()]
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerId> + '_ {
        (0..self.classes.len() as u32).map(WorkerId)
    }

    pub fn members(&self, class: WorkerClass) -> Vec<WorkerId> {
        self.workers().filter(|&w| self.class(w) == class).collect()
    }

    pub fn count(&self, class: WorkerClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn classes(&self) -> &[WorkerClass] {
        &self.classes
    }
}

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Class counts `(colluding, naive, honest)` for `n` workers.
pub fn class_counts(
    n: usize,
    colluding_fraction: f64,
    naive_fraction: f64,
) -> Result<(usize, usize, usize), ConfigError> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    if !ok(colluding_fraction) || !ok(naive_fraction) || colluding_fraction + naive_fraction > 1.0 + 1e-12
    {
        return Err(ConfigError::Fractions {
            colluding: colluding_fraction,
            naive: naive_fraction,
        });
    }
    let colluding = round_half_up(n as f64 * colluding_fraction).min(n);
    let naive = round_half_up(n as f64 * naive_fraction).min(n - colluding);
    Ok((colluding, naive, n - colluding - naive))
}

/// Assigns ground-truth classes by a seeded random permutation.
pub fn build_roster<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Roster, ConfigError> {
    config.validate()?;
    let (colluding, naive, honest) =
        class_counts(config.n_workers, config.colluding_fraction, config.naive_fraction)?;
    let mut classes = Vec::with_capacity(config.n_workers);
    classes.extend(std::iter::repeat_n(WorkerClass::Colluding, colluding));
    classes.extend(std::iter::repeat_n(WorkerClass::NaiveMalicious, naive));
    classes.extend(std::iter::repeat_n(WorkerClass::Honest, honest));
    classes.shuffle(rng);
    Ok(Roster { classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(colluding: f64, naive: f64) -> ScenarioConfig {
        ScenarioConfig {
            colluding_fraction: colluding,
            naive_fraction: naive,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn half_colluding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = build_roster(&cfg(0.5, 0.0), &mut rng).unwrap();
        assert_eq!(r.count(WorkerClass::Colluding), 10);
        assert_eq!(r.count(WorkerClass::Honest), 10);
    }

    #[test]
    fn no_collusion_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = build_roster(&cfg(0.0, 0.0), &mut rng).unwrap();
        assert_eq!(r.count(WorkerClass::Honest), 20);
    }

    #[test]
    fn ninety_percent_colluding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = build_roster(&cfg(0.9, 0.0), &mut rng).unwrap();
        assert_eq!(r.count(WorkerClass::Colluding), 18);
        assert_eq!(r.count(WorkerClass::Honest), 2);
    }

    #[test]
    fn too_few_honest_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_roster(&cfg(0.95, 0.0), &mut rng),
            Err(ConfigError::TooFewHonest(1))
        ));
        assert!(build_roster(&cfg(0.7, 0.4), &mut rng).is_err());
    }

    #[test]
    fn roster_is_seeded() {
        let a = build_roster(&cfg(0.4, 0.1), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_roster(&cfg(0.4, 0.1), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ring_value_never_correct() {
        for seq in 0..10_000 {
            let t = TaskId::genuine(seq);
            assert_ne!(ring_value(t, 0xdead_beef), correct_value(t));
        }
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(class_counts(10, 0.25, 0.0).unwrap(), (3, 0, 7));
        assert_eq!(class_counts(10, 0.15, 0.25).unwrap(), (2, 3, 5));
    }
}
