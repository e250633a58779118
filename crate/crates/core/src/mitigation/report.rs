use serde::{Deserialize, Serialize};

use crate::model::{SimTime, WorkerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportStage {
    /// Stopped after partitioning; the larger group is named honest.
    Partition,
    /// Stopped after the scored group was named.
    GroupIdentification,
    /// Full verification ran.
    Verified,
    /// Produced by the cluster-only baseline.
    Baseline,
}

/// Final roster classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub honest: Vec<WorkerId>,
    pub colluding: Vec<WorkerId>,
    pub malicious: Vec<WorkerId>,
    pub end_time: SimTime,
    pub stage: ReportStage,
    pub inconclusive: bool,
    pub reduced_confidence: bool,
}

impl ClassificationReport {
    /// Sorted, deduplicated copy; applying it twice changes nothing.
    pub fn finalize(&self) -> Self {
        let norm = |v: &[WorkerId]| {
            let mut v = v.to_vec();
            v.sort();
            v.dedup();
            v
        };
        Self {
            honest: norm(&self.honest),
            colluding: norm(&self.colluding),
            malicious: norm(&self.malicious),
            ..self.clone()
        }
    }

    pub fn total(&self) -> usize {
        self.honest.len() + self.colluding.len() + self.malicious.len()
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<WorkerId> = self
            .honest
            .iter()
            .chain(&self.colluding)
            .chain(&self.malicious)
            .copied()
            .collect();
        let n = all.len();
        all.sort();
        all.dedup();
        all.len() == n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finalize_is_idempotent() {
        let r = ClassificationReport {
            honest: vec![WorkerId(3), WorkerId(1)],
            colluding: vec![WorkerId(2)],
            malicious: vec![],
            end_time: SimTime(5),
            stage: ReportStage::Verified,
            inconclusive: false,
            reduced_confidence: false,
        };
        let once = r.finalize();
        assert_eq!(once, once.finalize());
        assert_eq!(once.honest, vec![WorkerId(1), WorkerId(3)]);
        assert!(once.is_disjoint());
        assert_eq!(once.total(), 3);
    }
}
