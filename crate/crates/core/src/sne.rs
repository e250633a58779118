//! Cluster-only baseline: gather a fixed number of co-observations per
//! worker pair, cluster once, and call the largest cluster honest.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mitigation::graph::SimilarityGraph;
use crate::mitigation::mcl::{mcl, MclParams};
use crate::mitigation::repository::{CoveragePlanner, TaskRepository};
use crate::model::{ResultValue, TaskId, WorkerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SneConfig {
    pub obs_per_edge: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SneVerdict {
    pub honest: Vec<WorkerId>,
    pub colluding: Vec<WorkerId>,
}

/// Clusters `workers`; with two or more clusters the largest (ties to the
/// higher mean intra-cluster weight) is honest and the rest colluding.
pub fn sne_classify(g: &SimilarityGraph, workers: &[WorkerId], params: &MclParams) -> Option<SneVerdict> {
    let clusters = mcl(&g.dense(workers), workers.len(), params);
    if clusters.len() < 2 {
        return None;
    }
    let groups: Vec<Vec<WorkerId>> = clusters
        .iter()
        .map(|c| c.iter().map(|&i| workers[i]).collect())
        .collect();
    let best = (0..groups.len())
        .max_by(|&a, &b| {
            groups[a].len().cmp(&groups[b].len()).then_with(|| {
                g.mean_intra_weight(&groups[a])
                    .total_cmp(&g.mean_intra_weight(&groups[b]))
            })
        })
        .expect("at least two clusters");
    let mut honest = groups[best].clone();
    let mut colluding: Vec<WorkerId> = groups
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .flat_map(|(_, g)| g.iter().copied())
        .collect();
    honest.sort();
    colluding.sort();
    Some(SneVerdict { honest, colluding })
}

/// Repeated observation rounds; each completed round is clustered once.
#[derive(Debug, Clone)]
pub struct SneMonitor {
    cfg: SneConfig,
    k: usize,
    workers: Vec<WorkerId>,
    planner: CoveragePlanner,
    tr: TaskRepository,
    outstanding: usize,
    pub rounds_completed: u64,
    mcl: MclParams,
}

impl SneMonitor {
    pub fn new(workers: Vec<WorkerId>, k: usize, cfg: SneConfig) -> Self {
        let n = workers.len();
        Self {
            planner: CoveragePlanner::new(workers.clone(), n, k, cfg.obs_per_edge),
            tr: TaskRepository::new(n),
            cfg,
            k,
            workers,
            outstanding: 0,
            rounds_completed: 0,
            mcl: MclParams::default(),
        }
    }

    /// Pool for the next genuine task while the current round still needs
    /// coverage.
    pub fn next_pool<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Vec<WorkerId>> {
        let pool = self.planner.next_pool(rng)?;
        self.outstanding += 1;
        Some(pool)
    }

    /// Records one observation; at the end of a round returns the verdict
    /// (if the graph split) and starts the next round.
    pub fn on_observation(&mut self, task: TaskId, votes: Vec<(WorkerId, ResultValue)>) -> Option<Option<SneVerdict>> {
        self.tr.push(task, votes);
        self.outstanding = self.outstanding.saturating_sub(1);
        if self.outstanding > 0 || !self.planner.is_satisfied() {
            return None;
        }
        let g = SimilarityGraph::from_repository(&self.tr);
        let verdict = sne_classify(&g, &self.workers, &self.mcl);
        self.rounds_completed += 1;
        let n = self.workers.len();
        self.planner = CoveragePlanner::new(self.workers.clone(), n, self.k, self.cfg.obs_per_edge);
        self.tr = TaskRepository::new(n);
        Some(verdict)
    }
}

/// Runs rounds against a synchronous task source until a verdict or until
/// `max_rounds` rounds pass without one.
pub fn sne_run<R, F>(
    workers: &[WorkerId],
    k: usize,
    cfg: SneConfig,
    max_rounds: u64,
    rng: &mut R,
    mut dispatch: F,
) -> Option<SneVerdict>
where
    R: Rng + ?Sized,
    F: FnMut(&[WorkerId]) -> (TaskId, Vec<ResultValue>),
{
    let mut mon = SneMonitor::new(workers.to_vec(), k, cfg);
    while mon.rounds_completed < max_rounds {
        let mut pools = Vec::new();
        while let Some(p) = mon.next_pool(rng) {
            pools.push(p);
        }
        for pool in pools {
            let (task, values) = dispatch(&pool);
            if let Some(done) = mon.on_observation(task, pool.iter().copied().zip(values).collect()) {
                if done.is_some() {
                    return done;
                }
            }
        }
    }
    None
}
