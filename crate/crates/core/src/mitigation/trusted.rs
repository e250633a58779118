//! Tasks whose value both groups vouch for.

use fixedbitset::FixedBitSet;

use super::repository::TaskRepository;
use crate::model::{ResultValue, TaskId, WorkerId};

#[derive(Debug, Clone, PartialEq)]
pub struct TrustedTask {
    pub task: TaskId,
    pub value: ResultValue,
    /// Workers that have already received this task.
    pub seen: FixedBitSet,
    /// Consumed by group verification; each task is used there at most once.
    pub consumed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrustedTaskSet {
    pub tasks: Vec<TrustedTask>,
    pub used_by: Vec<u32>,
}

impl TrustedTaskSet {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// First task no member of `pool` has received, optionally skipping
    /// consumed ones.
    pub fn first_unseen(&self, pool: &[WorkerId], skip_consumed: bool) -> Option<usize> {
        self.tasks.iter().position(|t| {
            !(skip_consumed && t.consumed) && pool.iter().all(|w| !t.seen.contains(w.index()))
        })
    }

    pub fn mark_dispatched(&mut self, idx: usize, pool: &[WorkerId]) {
        let t = &mut self.tasks[idx];
        for w in pool {
            t.seen.insert(w.index());
            self.used_by[w.index()] += 1;
        }
    }

    pub fn remaining_unconsumed(&self) -> usize {
        self.tasks.iter().filter(|t| !t.consumed).count()
    }
}

pub fn build_trusted_tasks(tr: &TaskRepository, g1: &[WorkerId], g2: &[WorkerId]) -> TrustedTaskSet {
    let n = tr.n_workers();
    let mut out = TrustedTaskSet {
        tasks: Vec::new(),
        used_by: vec![0; n],
    };
    for t in &tr.tasks {
        let agreed = t.votes.iter().find_map(|&(a, va)| {
            if !g1.contains(&a) {
                return None;
            }
            t.votes
                .iter()
                .any(|&(b, vb)| vb == va && g2.contains(&b))
                .then_some(va)
        });
        if let Some(value) = agreed {
            let mut seen = FixedBitSet::with_capacity(n);
            for (w, _) in &t.votes {
                seen.insert(w.index());
            }
            out.tasks.push(TrustedTask {
                task: t.task,
                value,
                seen,
                consumed: false,
            });
        }
    }
    out
}
