//! Observation collection after detection: every task goes to exactly one
//! pool, and pools are planned so that the least-covered worker pair gains
//! coverage first.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ResultValue, TaskId, WorkerId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrTask {
    pub task: TaskId,
    pub votes: Vec<(WorkerId, ResultValue)>,
}

/// Symmetric `n x n` counter over worker pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCounts {
    n: usize,
    counts: Vec<u32>,
}

impl PairCounts {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: WorkerId, b: WorkerId) -> u32 {
        self.counts[a.index() * self.n + b.index()]
    }

    pub fn bump(&mut self, a: WorkerId, b: WorkerId) {
        self.counts[a.index() * self.n + b.index()] += 1;
        self.counts[b.index() * self.n + a.index()] += 1;
    }

    pub fn bump_pool(&mut self, pool: &[WorkerId]) {
        for (i, &a) in pool.iter().enumerate() {
            for &b in &pool[i + 1..] {
                self.bump(a, b);
            }
        }
    }

    /// Smallest count over distinct pairs drawn from `workers`.
    pub fn min_over(&self, workers: &[WorkerId]) -> u32 {
        let mut min = u32::MAX;
        for (i, &a) in workers.iter().enumerate() {
            for &b in &workers[i + 1..] {
                min = min.min(self.get(a, b));
            }
        }
        if min == u32::MAX {
            0
        } else {
            min
        }
    }
}

/// The post-detection vote log.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRepository {
    pub tasks: Vec<TrTask>,
    pub pair_counts: PairCounts,
    /// Set when collection stopped before the coverage target was reached.
    pub partial: bool,
}

impl TaskRepository {
    pub fn new(n_workers: usize) -> Self {
        Self {
            tasks: Vec::new(),
            pair_counts: PairCounts::new(n_workers),
            partial: false,
        }
    }

    pub fn n_workers(&self) -> usize {
        self.pair_counts.n()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn push(&mut self, task: TaskId, votes: Vec<(WorkerId, ResultValue)>) {
        let pool: Vec<WorkerId> = votes.iter().map(|(w, _)| *w).collect();
        self.pair_counts.bump_pool(&pool);
        self.tasks.push(TrTask { task, votes });
    }

    pub fn min_pair_count(&self, workers: &[WorkerId]) -> u32 {
        self.pair_counts.min_over(workers)
    }
}

/// Plans pools that greedily raise the minimum pair coverage.
#[derive(Debug, Clone)]
pub struct CoveragePlanner {
    workers: Vec<WorkerId>,
    k: usize,
    target: u32,
    planned: PairCounts,
    pools_planned: usize,
    /// Current minimum planned count over worker pairs.
    level: u32,
    /// Pairs still at `level`, with each pair's position in this list.
    needy: Vec<(WorkerId, WorkerId)>,
    slot: Vec<usize>,
    best: Vec<WorkerId>,
}

impl CoveragePlanner {
    pub fn new(workers: Vec<WorkerId>, n_workers: usize, k: usize, target: u32) -> Self {
        let mut p = Self {
            k: k.min(workers.len()),
            workers,
            target,
            planned: PairCounts::new(n_workers),
            pools_planned: 0,
            level: 0,
            needy: Vec::new(),
            slot: vec![usize::MAX; n_workers * n_workers],
            best: Vec::new(),
        };
        p.refill();
        p
    }

    pub fn target(&self) -> u32 {
        self.target
    }

    /// Raises the target, keeping coverage planned so far.
    pub fn extend_target(&mut self, extra: u32) {
        self.target += extra;
    }

    pub fn pools_planned(&self) -> usize {
        self.pools_planned
    }

    pub fn is_satisfied(&self) -> bool {
        self.needy.is_empty() || self.level >= self.target
    }

    fn pair_slot(&self, a: WorkerId, b: WorkerId) -> usize {
        let (lo, hi) = if a.index() < b.index() { (a, b) } else { (b, a) };
        lo.index() * self.planned.n() + hi.index()
    }

    /// Collects the pairs at the new minimum level.
    fn refill(&mut self) {
        self.needy.clear();
        let mut min = u32::MAX;
        for (i, &a) in self.workers.iter().enumerate() {
            for &b in &self.workers[i + 1..] {
                min = min.min(self.planned.get(a, b));
            }
        }
        for (i, &a) in self.workers.iter().enumerate() {
            for &b in &self.workers[i + 1..] {
                if self.planned.get(a, b) == min {
                    let s = self.pair_slot(a, b);
                    self.slot[s] = self.needy.len();
                    self.needy.push((a, b));
                }
            }
        }
        self.level = min;
    }

    fn bump(&mut self, pool: &[WorkerId]) {
        for (i, &a) in pool.iter().enumerate() {
            for &b in &pool[i + 1..] {
                if self.planned.get(a, b) == self.level {
                    let s = self.pair_slot(a, b);
                    let at = self.slot[s];
                    self.slot[s] = usize::MAX;
                    self.needy.swap_remove(at);
                    if let Some(&(c, d)) = self.needy.get(at) {
                        let moved = self.pair_slot(c, d);
                        self.slot[moved] = at;
                    }
                }
                self.planned.bump(a, b);
            }
        }
        if self.needy.is_empty() {
            self.refill();
        }
    }

    /// Next pool, or `None` once every pair is planned to reach the target.
    pub fn next_pool<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Vec<WorkerId>> {
        if self.is_satisfied() {
            return None;
        }
        let &(a, b) = self.needy.choose(rng)?;
        let mut pool = Vec::with_capacity(self.k);
        pool.extend([a, b]);
        let mut best = std::mem::take(&mut self.best);
        while pool.len() < self.k {
            best.clear();
            let mut best_cost = u64::MAX;
            for &c in &self.workers {
                if pool.contains(&c) {
                    continue;
                }
                let cost: u64 = pool.iter().map(|&p| self.planned.get(p, c) as u64).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best.clear();
                }
                if cost == best_cost {
                    best.push(c);
                }
            }
            pool.push(*best.choose(rng)?);
        }
        self.best = best;
        self.bump(&pool);
        self.pools_planned += 1;
        Some(pool)
    }
}

/// Collects single-pool observations until every pair of `workers` has
/// shared at least `target` pools. `dispatch` runs one task on a pool and
/// returns the task id with each member's result, or `None` when the task
/// stream is exhausted (the repository is then flagged partial).
pub fn collect_observations<R, F>(
    workers: &[WorkerId],
    n_workers: usize,
    k: usize,
    target: u32,
    rng: &mut R,
    mut dispatch: F,
) -> TaskRepository
where
    R: Rng + ?Sized,
    F: FnMut(&[WorkerId]) -> Option<(TaskId, Vec<ResultValue>)>,
{
    let mut tr = TaskRepository::new(n_workers);
    let mut planner = CoveragePlanner::new(workers.to_vec(), n_workers, k, target);
    while let Some(pool) = planner.next_pool(rng) {
        match dispatch(&pool) {
            Some((task, values)) => {
                tr.push(task, pool.iter().copied().zip(values).collect());
            }
            None => {
                tr.partial = true;
                break;
            }
        }
    }
    tr
}
