//! Client-side replication: pool selection and strict-majority voting.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PoolError;
use crate::model::{ResultValue, SimTime, TaskId, Vote, WorkerId};

/// One task sent to one voting pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDispatch {
    pub task: TaskId,
    pub pool: Vec<WorkerId>,
    pub dispatch_time: SimTime,
    pub votes: Vec<Vote>,
}

impl PoolDispatch {
    pub fn new(task: TaskId, pool: Vec<WorkerId>, dispatch_time: SimTime) -> Self {
        Self {
            task,
            pool,
            dispatch_time,
            votes: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.votes.len() == self.pool.len()
    }
}

/// Uniform random `k`-subset of `candidates`, in draw order.
pub fn select_pool<R: Rng + ?Sized>(
    candidates: &[WorkerId],
    k: usize,
    rng: &mut R,
) -> Result<Vec<WorkerId>, PoolError> {
    if candidates.len() < k {
        return Err(PoolError::InsufficientWorkers {
            needed: k,
            available: candidates.len(),
        });
    }
    Ok(candidates.choose_multiple(rng, k).copied().collect())
}

/// Like [`select_pool`], but shuffles `candidates` in place and borrows the
/// pool from its front instead of allocating.
pub fn select_pool_in_place<'a, R: Rng + ?Sized>(
    candidates: &'a mut [WorkerId],
    k: usize,
    rng: &mut R,
) -> Result<&'a [WorkerId], PoolError> {
    if candidates.len() < k {
        return Err(PoolError::InsufficientWorkers {
            needed: k,
            available: candidates.len(),
        });
    }
    Ok(candidates.partial_shuffle(rng, k).0)
}

/// The value held by more than `k / 2` of `values`, if any.
pub fn majority_value(values: &[ResultValue], k: usize) -> Option<ResultValue> {
    values
        .iter()
        .find(|&&v| 2 * values.iter().filter(|&&u| u == v).count() > k)
        .copied()
}

pub fn majority(votes: &[Vote], k: usize) -> Option<ResultValue> {
    let values: Vec<ResultValue> = votes.iter().map(|v| v.value).collect();
    majority_value(&values, k)
}
