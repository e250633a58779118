//! Reputation scoring of the larger group and its two-way k-means split.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trusted::TrustedTaskSet;
use crate::model::{ResultValue, WorkerId};

/// Running ±1 marks against trusted values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationScore {
    pub marks: Vec<i8>,
}

impl ReputationScore {
    pub fn count(&self) -> usize {
        self.marks.len()
    }

    pub fn mean(&self) -> f64 {
        if self.marks.is_empty() {
            0.0
        } else {
            self.marks.iter().map(|&m| m as f64).sum::<f64>() / self.marks.len() as f64
        }
    }
}

/// One pool and the trusted task chosen for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub pool: Vec<WorkerId>,
    pub tt_index: usize,
}

/// Wave-by-wave scoring of a group until each member has `e` marks.
#[derive(Debug, Clone)]
pub struct ScoringPlan {
    pub group: Vec<WorkerId>,
    pub scores: Vec<ReputationScore>,
    k: usize,
    e: usize,
    stalled: bool,
}

impl ScoringPlan {
    pub fn new(group: Vec<WorkerId>, k: usize, e: usize) -> Self {
        let scores = vec![ReputationScore::default(); group.len()];
        Self {
            k: k.min(group.len()).max(1),
            group,
            scores,
            e,
            stalled: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.stalled || self.group.is_empty() || self.scores.iter().all(|s| s.count() >= self.e)
    }

    /// True when scoring stopped because no trusted task fit any pool.
    pub fn stalled(&self) -> bool {
        self.stalled
    }

    /// Disjoint pools of the least-scored members, each with the first
    /// trusted task none of them has received. An empty wave means the
    /// trusted tasks are exhausted for this group.
    pub fn next_wave<R: Rng + ?Sized>(&mut self, tt: &mut TrustedTaskSet, rng: &mut R) -> Vec<Assignment> {
        if self.is_done() {
            return Vec::new();
        }
        let mut order: Vec<usize> = (0..self.group.len()).collect();
        order.shuffle(rng);
        order.sort_by_key(|&i| self.scores[i].count());
        let members: Vec<WorkerId> = order.iter().map(|&i| self.group[i]).collect();

        let mut wave = Vec::new();
        for chunk in members.chunks(self.k) {
            let mut pool = chunk.to_vec();
            // Pad a short tail with other members so every pool has k workers.
            let mut spare: Vec<WorkerId> = members.iter().copied().filter(|w| !pool.contains(w)).collect();
            spare.shuffle(rng);
            pool.extend(spare.iter().take(self.k - pool.len()));

            let mut found = tt.first_unseen(&pool, false).map(|i| (pool.clone(), i));
            if found.is_none() {
                for _ in 0..8 {
                    let mut alt = vec![chunk[0]];
                    let mut rest: Vec<WorkerId> = members.iter().copied().filter(|&w| w != chunk[0]).collect();
                    rest.shuffle(rng);
                    alt.extend(rest.iter().take(self.k - 1));
                    if let Some(i) = tt.first_unseen(&alt, false) {
                        found = Some((alt, i));
                        break;
                    }
                }
            }
            if let Some((pool, i)) = found {
                tt.mark_dispatched(i, &pool);
                wave.push(Assignment { pool, tt_index: i });
            }
        }
        if wave.is_empty() {
            self.stalled = true;
        }
        wave
    }

    /// Scores one pool's votes against the trusted value; marks past `e` are
    /// dropped.
    pub fn absorb(&mut self, trusted: ResultValue, votes: &[(WorkerId, ResultValue)]) {
        for &(w, v) in votes {
            if let Some(i) = self.group.iter().position(|&g| g == w) {
                if self.scores[i].count() < self.e {
                    self.scores[i].marks.push(if v == trusted { 1 } else { -1 });
                }
            }
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.scores.iter().map(ReputationScore::mean).collect()
    }
}

/// Two-means on the line, seeded at the extremes. Returns `true` for
/// members of the higher cluster.
pub fn kmeans_1d(values: &[f64]) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![false; values.len()];
    }
    let (mut c_lo, mut c_hi) = (lo, hi);
    let mut assign: Vec<bool> = Vec::new();
    for _ in 0..=values.len() {
        let next: Vec<bool> = values.iter().map(|&v| (v - c_hi).abs() < (v - c_lo).abs()).collect();
        if next == assign {
            break;
        }
        assign = next;
        let mean = |want: bool| {
            let (s, n) = values
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == want)
                .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
            (n > 0).then(|| s / n as f64)
        };
        c_lo = mean(false).unwrap_or(c_lo);
        c_hi = mean(true).unwrap_or(c_hi);
    }
    assign
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerificationCase {
    /// The scored group is honest; the other group is mostly colluding.
    CaseI,
    /// The scored group is colluding; the other group is mostly honest.
    CaseII,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSplit {
    pub case: VerificationCase,
    /// Members kept in the scored group, now named.
    pub kept: Vec<WorkerId>,
    /// Members moved to the other group.
    pub moved: Vec<WorkerId>,
}

pub fn split_by_score(group: &[WorkerId], rs: &[f64]) -> ScoreSplit {
    if rs.iter().all(|&r| r >= 1.0) {
        return ScoreSplit {
            case: VerificationCase::CaseI,
            kept: group.to_vec(),
            moved: Vec::new(),
        };
    }
    let high = kmeans_1d(rs);
    let hi: Vec<WorkerId> = group.iter().zip(&high).filter(|(_, &h)| h).map(|(&w, _)| w).collect();
    let lo: Vec<WorkerId> = group.iter().zip(&high).filter(|(_, &h)| !h).map(|(&w, _)| w).collect();
    if !hi.is_empty() && hi.len() >= lo.len() {
        ScoreSplit {
            case: VerificationCase::CaseI,
            kept: hi,
            moved: lo,
        }
    } else {
        ScoreSplit {
            case: VerificationCase::CaseII,
            kept: lo,
            moved: hi,
        }
    }
}
