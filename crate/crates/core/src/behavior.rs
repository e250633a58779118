//! Vote generation for honest, naive-malicious and colluding workers.

use fixedbitset::FixedBitSet;
use rand::Rng;

use crate::config::{EvasiveMemory, PcDraw};
use crate::model::{
    correct_value, random_wrong_value, ring_value, ResultValue, Roster, SimTime, TaskId, WorkerClass, WorkerId,
};

/// Correct value with probability `1 - epsilon`, otherwise a random wrong one.
pub fn honest_vote<R: Rng + ?Sized>(task: TaskId, epsilon: f64, rng: &mut R) -> ResultValue {
    if epsilon > 0.0 && rng.gen_bool(epsilon.min(1.0)) {
        random_wrong_value(task, rng)
    } else {
        correct_value(task)
    }
}

/// Always a fresh random wrong value.
pub fn naive_vote<R: Rng + ?Sized>(task: TaskId, rng: &mut R) -> ResultValue {
    random_wrong_value(task, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollusionDecision {
    ColludeWith(ResultValue),
    ActHonest,
}

/// Shared state of the single collusion ring.
#[derive(Debug, Clone)]
pub struct ColluderState {
    members: FixedBitSet,
    ring_size: usize,
    seen: Vec<FixedBitSet>,
    memory: EvasiveMemory,
    pc_draw: PcDraw,
    salt: u64,
    pub active_from: SimTime,
}

impl ColluderState {
    pub fn new(
        n_workers: usize,
        ring: &[WorkerId],
        active_from: SimTime,
        salt: u64,
        memory: EvasiveMemory,
        pc_draw: PcDraw,
    ) -> Self {
        let mut members = FixedBitSet::with_capacity(n_workers);
        for w in ring {
            members.insert(w.index());
        }
        let slots = match memory {
            EvasiveMemory::PerWorker => n_workers,
            EvasiveMemory::RingShared => 1,
        };
        Self {
            members,
            ring_size: ring.len(),
            seen: vec![FixedBitSet::new(); slots],
            memory,
            pc_draw,
            salt,
            active_from,
        }
    }

    pub fn is_member(&self, w: WorkerId) -> bool {
        self.members.contains(w.index())
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    fn slot(&self, w: WorkerId) -> usize {
        match self.memory {
            EvasiveMemory::PerWorker => w.index(),
            EvasiveMemory::RingShared => 0,
        }
    }

    pub fn has_seen(&self, w: WorkerId, task: TaskId) -> bool {
        self.seen[self.slot(w)].contains(task.seq as usize)
    }

    pub fn mark_seen(&mut self, w: WorkerId, task: TaskId) {
        let slot = self.slot(w);
        let bits = &mut self.seen[slot];
        let idx = task.seq as usize;
        if idx >= bits.len() {
            bits.grow((idx + 1).max(bits.len() * 2).max(1024));
        }
        bits.insert(idx);
    }

    /// The wrong value every ring member returns when colluding on `task`.
    pub fn agreed_value(&self, task: TaskId) -> ResultValue {
        ring_value(task, self.salt)
    }
}

/// Joint decision of the ring members in `pool` for `task`.
///
/// Colludes iff the ring is active, holds a strict majority of the pool,
/// no pooled member has seen the task before, and the `p_collude` draw
/// succeeds. Every pooled member has the task marked seen afterwards.
pub fn ring_decide<R: Rng + ?Sized>(
    task: TaskId,
    pool: &[WorkerId],
    state: &mut ColluderState,
    p_collude: f64,
    now: SimTime,
    rng: &mut R,
) -> CollusionDecision {
    let ring: Vec<WorkerId> = pool.iter().copied().filter(|&w| state.is_member(w)).collect();
    let active = now >= state.active_from;
    let majority = ring.len() * 2 > pool.len();
    let fresh = ring.iter().all(|&w| !state.has_seen(w, task));
    let decision = if active && majority && fresh {
        let p = p_collude.clamp(0.0, 1.0);
        let coin = match state.pc_draw {
            PcDraw::Joint => rng.gen_bool(p),
            PcDraw::PerWorker => ring.iter().fold(true, |acc, _| rng.gen_bool(p) && acc),
        };
        if coin {
            CollusionDecision::ColludeWith(state.agreed_value(task))
        } else {
            CollusionDecision::ActHonest
        }
    } else {
        CollusionDecision::ActHonest
    };
    for &w in &ring {
        state.mark_seen(w, task);
    }
    decision
}

/// Every worker's behaviour in one place: roster classes plus ring state.
#[derive(Debug, Clone)]
pub struct WorkerPopulation {
    pub roster: Roster,
    pub ring: ColluderState,
    pub epsilon: f64,
    pub p_collude: f64,
}

impl WorkerPopulation {
    pub fn new(roster: Roster, ring: ColluderState, epsilon: f64, p_collude: f64) -> Self {
        Self {
            roster,
            ring,
            epsilon,
            p_collude,
        }
    }

    pub fn ring_decision<R: Rng + ?Sized>(
        &mut self,
        task: TaskId,
        pool: &[WorkerId],
        now: SimTime,
        rng: &mut R,
    ) -> CollusionDecision {
        ring_decide(task, pool, &mut self.ring, self.p_collude, now, rng)
    }

    /// One worker's result given the ring's decision for this dispatch.
    pub fn vote<R: Rng + ?Sized>(
        &self,
        w: WorkerId,
        task: TaskId,
        decision: CollusionDecision,
        rng: &mut R,
    ) -> ResultValue {
        match self.roster.class(w) {
            WorkerClass::Honest => honest_vote(task, self.epsilon, rng),
            WorkerClass::NaiveMalicious => naive_vote(task, rng),
            WorkerClass::Colluding => match decision {
                CollusionDecision::ColludeWith(v) => v,
                CollusionDecision::ActHonest => correct_value(task),
            },
        }
    }

    /// All results of a pool that receives `task` at `now`, in pool order.
    pub fn pool_votes<R: Rng + ?Sized>(
        &mut self,
        task: TaskId,
        pool: &[WorkerId],
        now: SimTime,
        rng: &mut R,
    ) -> Vec<ResultValue> {
        let decision = if pool.iter().any(|&w| self.ring.is_member(w)) {
            self.ring_decision(task, pool, now, rng)
        } else {
            CollusionDecision::ActHonest
        };
        pool.iter().map(|&w| self.vote(w, task, decision, rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(ids: &[u32]) -> Vec<WorkerId> {
        ids.iter().map(|&i| WorkerId(i)).collect()
    }

    fn state(members: &[u32]) -> ColluderState {
        ColluderState::new(
            20,
            &ring(members),
            SimTime::ZERO,
            0x5eed,
            EvasiveMemory::PerWorker,
            PcDraw::Joint,
        )
    }

    #[test]
    fn honest_without_error_is_correct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 0..1000 {
            let t = TaskId::genuine(s);
            assert_eq!(honest_vote(t, 0.0, &mut rng), correct_value(t));
            assert_ne!(honest_vote(t, 1.0, &mut rng), correct_value(t));
        }
    }

    #[test]
    fn honest_error_rate_matches_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 100_000u64;
        let wrong = (0..trials)
            .filter(|&s| {
                let t = TaskId::genuine(s);
                honest_vote(t, 0.003, &mut rng) != correct_value(t)
            })
            .count() as f64;
        let mean = trials as f64 * 0.003;
        let sd = (trials as f64 * 0.003 * 0.997).sqrt();
        assert!((wrong - mean).abs() <= 3.0 * sd, "wrong = {wrong}");
    }

    #[test]
    fn naive_votes_are_wrong_and_fresh() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = TaskId::genuine(42);
        let a = naive_vote(t, &mut rng);
        let b = naive_vote(t, &mut rng);
        assert_ne!(a, correct_value(t));
        assert_ne!(a, b);
    }

    #[test]
    fn minority_acts_honest() {
        let mut st = state(&[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = ring_decide(TaskId::genuine(1), &ring(&[0, 1, 2]), &mut st, 1.0, SimTime(10), &mut rng);
        assert_eq!(d, CollusionDecision::ActHonest);
    }

    #[test]
    fn majority_colludes_then_evades_repeat() {
        let mut st = state(&[0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = TaskId::genuine(9);
        let pool = ring(&[0, 1, 2]);
        let d = ring_decide(t, &pool, &mut st, 1.0, SimTime(10), &mut rng);
        assert_eq!(d, CollusionDecision::ColludeWith(st.agreed_value(t)));
        assert_ne!(st.agreed_value(t), correct_value(t));
        let again = ring_decide(t, &pool, &mut st, 1.0, SimTime(20), &mut rng);
        assert_eq!(again, CollusionDecision::ActHonest);
    }

    #[test]
    fn inactive_ring_acts_honest_but_remembers() {
        let mut st = state(&[0, 1]);
        st.active_from = SimTime::from_secs(5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = TaskId::genuine(3);
        let pool = ring(&[0, 1, 2]);
        assert_eq!(
            ring_decide(t, &pool, &mut st, 1.0, SimTime::from_secs(1.0), &mut rng),
            CollusionDecision::ActHonest
        );
        assert!(st.has_seen(WorkerId(0), t) && st.has_seen(WorkerId(1), t));
        assert_eq!(
            ring_decide(t, &pool, &mut st, 1.0, SimTime::from_secs(6.0), &mut rng),
            CollusionDecision::ActHonest
        );
    }

    #[test]
    fn ring_shared_memory_blocks_other_members() {
        let mut st = ColluderState::new(
            20,
            &ring(&[0, 1, 3, 4]),
            SimTime::ZERO,
            1,
            EvasiveMemory::RingShared,
            PcDraw::Joint,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = TaskId::genuine(5);
        ring_decide(t, &ring(&[0, 2, 5]), &mut st, 1.0, SimTime(1), &mut rng);
        assert!(st.has_seen(WorkerId(4), t));
        let d = ring_decide(t, &ring(&[3, 4, 6]), &mut st, 1.0, SimTime(2), &mut rng);
        assert_eq!(d, CollusionDecision::ActHonest);
    }

    #[test]
    fn collusion_rate_converges_to_pc() {
        let mut st = state(&[0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pool = ring(&[0, 1, 2]);
        let trials = 20_000u64;
        let hits = (0..trials)
            .filter(|&s| {
                matches!(
                    ring_decide(TaskId::genuine(s), &pool, &mut st, 0.3, SimTime(1), &mut rng),
                    CollusionDecision::ColludeWith(_)
                )
            })
            .count() as f64;
        let sd = (trials as f64 * 0.3 * 0.7).sqrt();
        assert!((hits - 0.3 * trials as f64).abs() <= 3.0 * sd);
    }

    #[test]
    fn per_worker_draw_requires_every_coin() {
        let mut st = ColluderState::new(20, &ring(&[0, 1, 2]), SimTime::ZERO, 1, EvasiveMemory::PerWorker, PcDraw::PerWorker);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pool = ring(&[0, 1, 2]);
        let trials = 20_000u64;
        let hits = (0..trials)
            .filter(|&s| {
                matches!(
                    ring_decide(TaskId::genuine(s), &pool, &mut st, 0.5, SimTime(1), &mut rng),
                    CollusionDecision::ColludeWith(_)
                )
            })
            .count() as f64;
        let p = 0.125;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - p * trials as f64).abs() <= 3.0 * sd);
    }
}
