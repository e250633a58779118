//! Pairwise agreement graph built from the task repository.

use std::fmt::Write as _;

use super::repository::{PairCounts, TaskRepository};
use crate::model::WorkerId;

/// Complete weighted graph over workers. The weight of `(i, j)` is the
/// fraction of shared pools in which `i` and `j` returned equal values;
/// pairs that never shared a pool have no edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    agree: PairCounts,
    co_occur: PairCounts,
}

impl SimilarityGraph {
    pub fn from_repository(tr: &TaskRepository) -> Self {
        let n = tr.n_workers();
        let mut agree = PairCounts::new(n);
        let mut co_occur = PairCounts::new(n);
        for t in &tr.tasks {
            for (i, &(a, va)) in t.votes.iter().enumerate() {
                for &(b, vb) in &t.votes[i + 1..] {
                    co_occur.bump(a, b);
                    if va == vb {
                        agree.bump(a, b);
                    }
                }
            }
        }
        Self { n, agree, co_occur }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn agree(&self, a: WorkerId, b: WorkerId) -> u32 {
        self.agree.get(a, b)
    }

    pub fn co_occur(&self, a: WorkerId, b: WorkerId) -> u32 {
        self.co_occur.get(a, b)
    }

    pub fn weight(&self, a: WorkerId, b: WorkerId) -> Option<f64> {
        match self.co_occur(a, b) {
            0 => None,
            c => Some(self.agree(a, b) as f64 / c as f64),
        }
    }

    /// Row-major dense weights over `workers`; no-edge pairs and the
    /// diagonal are zero.
    pub fn dense(&self, workers: &[WorkerId]) -> Vec<f64> {
        let m = workers.len();
        let mut out = vec![0.0; m * m];
        for (i, &a) in workers.iter().enumerate() {
            for (j, &b) in workers.iter().enumerate() {
                if i != j {
                    out[i * m + j] = self.weight(a, b).unwrap_or(0.0);
                }
            }
        }
        out
    }

    /// Mean weight over distinct pairs inside `group` (0 for singletons).
    pub fn mean_intra_weight(&self, group: &[WorkerId]) -> f64 {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                sum += self.weight(a, b).unwrap_or(0.0);
                pairs += 1;
            }
        }
        if pairs == 0 {
            0.0
        } else {
            sum / pairs as f64
        }
    }

    /// Text edge list: `i j agree co_occur weight`, weight `-` for no-edge.
    pub fn edge_list(&self) -> String {
        let mut out = format!("# similarity graph n={}\n", self.n);
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a, b) = (WorkerId(i as u32), WorkerId(j as u32));
                let w = self
                    .weight(a, b)
                    .map(|w| format!("{w:.6}"))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(out, "{i} {j} {} {} {w}", self.agree(a, b), self.co_occur(a, b));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResultValue, TaskId};

    fn tr_with(rows: &[[(u32, u64); 3]]) -> TaskRepository {
        let mut tr = TaskRepository::new(4);
        for (i, row) in rows.iter().enumerate() {
            tr.push(
                TaskId::genuine(i as u64),
                row.iter().map(|&(w, v)| (WorkerId(w), ResultValue(v))).collect(),
            );
        }
        tr
    }

    #[test]
    fn full_agreement_is_one() {
        let rows = vec![[(0, 1), (1, 1), (2, 5)]; 8];
        let g = SimilarityGraph::from_repository(&tr_with(&rows));
        assert_eq!(g.weight(WorkerId(0), WorkerId(1)), Some(1.0));
        assert_eq!(g.weight(WorkerId(0), WorkerId(2)), Some(0.0));
    }

    #[test]
    fn partial_agreement_ratio() {
        let mut rows = vec![[(0, 1), (1, 1), (2, 1)]; 6];
        rows.extend(vec![[(0, 1), (1, 2), (2, 1)]; 2]);
        let g = SimilarityGraph::from_repository(&tr_with(&rows));
        assert_eq!(g.weight(WorkerId(0), WorkerId(1)), Some(0.75));
        assert_eq!(g.weight(WorkerId(1), WorkerId(0)), Some(0.75));
    }

    #[test]
    fn never_pooled_is_no_edge() {
        let rows = vec![[(0, 1), (1, 1), (2, 1)]; 3];
        let g = SimilarityGraph::from_repository(&tr_with(&rows));
        assert_eq!(g.weight(WorkerId(0), WorkerId(3)), None);
        assert_eq!(g.dense(&[WorkerId(0), WorkerId(3)]), vec![0.0; 4]);
        assert!(g.edge_list().contains("0 3 0 0 -"));
    }
}
