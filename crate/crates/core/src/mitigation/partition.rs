//! Two-group split of the non-malicious workers.

use serde::{Deserialize, Serialize};

use super::graph::SimilarityGraph;
use super::mcl::{mcl, MclParams};
use super::spectral::fiedler_bisection;
use crate::detection::DetectionEvidence;
use crate::model::WorkerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMethod {
    Mcl,
    Spectral,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub g1: Vec<WorkerId>,
    pub g2: Vec<WorkerId>,
    pub method: PartitionMethod,
}

fn pick(workers: &[WorkerId], idx: &[usize]) -> Vec<WorkerId> {
    let mut out: Vec<WorkerId> = idx.iter().map(|&i| workers[i]).collect();
    out.sort();
    out
}

/// MCL first, then spectral bisection; `None` when neither yields exactly
/// two non-empty groups.
pub fn partition(g: &SimilarityGraph, workers: &[WorkerId], params: &MclParams) -> Option<Partition> {
    let n = workers.len();
    if n < 2 {
        return None;
    }
    let w = g.dense(workers);
    let clusters = mcl(&w, n, params);
    if clusters.len() == 2 {
        return Some(Partition {
            g1: pick(workers, &clusters[0]),
            g2: pick(workers, &clusters[1]),
            method: PartitionMethod::Mcl,
        });
    }
    let (a, b) = fiedler_bisection(&w, n)?;
    Some(Partition {
        g1: pick(workers, &a),
        g2: pick(workers, &b),
        method: PartitionMethod::Spectral,
    })
}

/// Groups from the probe that triggered detection: the workers that
/// returned the matching non-majority value form G1, everyone else outside
/// `malicious` forms G2. Workers that returned some third value are kept in
/// G2 so the groups still cover the roster.
pub fn greedy_fallback(
    evidence: &DetectionEvidence,
    roster: &[WorkerId],
    malicious: &[WorkerId],
) -> Partition {
    let mut g1: Vec<WorkerId> = evidence
        .minority_workers
        .iter()
        .copied()
        .filter(|w| !malicious.contains(w))
        .collect();
    g1.sort();
    g1.dedup();
    let mut g2: Vec<WorkerId> = roster
        .iter()
        .copied()
        .filter(|w| !malicious.contains(w) && !g1.contains(w))
        .collect();
    g2.sort();
    Partition {
        g1,
        g2,
        method: PartitionMethod::Greedy,
    }
}
