//! Final verification of the unnamed group against trusted tasks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::scoring::Assignment;
use super::trusted::TrustedTaskSet;
use crate::model::{ResultValue, WorkerId};
use crate::verifier::majority_value;

fn disagrees(w: WorkerId, votes: &[(WorkerId, ResultValue)]) -> bool {
    let values: Vec<ResultValue> = votes.iter().map(|&(_, v)| v).collect();
    let Some(m) = majority_value(&values, values.len()) else {
        return false;
    };
    votes.iter().any(|&(x, v)| x == w && v != m)
}

/// Case I: the unnamed group is mostly colluding. Pools are drawn from it
/// and anyone outvoted is released to the honest side. Each trusted task is
/// used at most once.
#[derive(Debug, Clone)]
pub struct CaseOnePlan {
    pub suspects: Vec<WorkerId>,
    pub honest: Vec<WorkerId>,
    k: usize,
    e: usize,
    /// Direct checks for a lone suspect: (rounds, mismatches).
    direct: (usize, usize),
    done: bool,
}

impl CaseOnePlan {
    pub fn new(suspects: Vec<WorkerId>, honest: Vec<WorkerId>, k: usize, e: usize) -> Self {
        let done = suspects.is_empty();
        Self {
            suspects,
            honest,
            k,
            e,
            direct: (0, 0),
            done,
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn lone(&self) -> bool {
        self.suspects.len() < 2
    }

    pub fn next_wave<R: Rng + ?Sized>(&mut self, tt: &mut TrustedTaskSet, rng: &mut R) -> Vec<Assignment> {
        if self.done {
            return Vec::new();
        }
        let mut wave = Vec::new();
        if self.lone() {
            if self.direct.0 >= self.e {
                self.done = true;
                return wave;
            }
            let pool = self.suspects.clone();
            if let Some(i) = tt.first_unseen(&pool, true) {
                tt.tasks[i].consumed = true;
                tt.mark_dispatched(i, &pool);
                wave.push(Assignment { pool, tt_index: i });
            }
        } else {
            let mut order = self.suspects.clone();
            order.shuffle(rng);
            for chunk in order.chunks(self.k) {
                let mut pool = chunk.to_vec();
                let mut spare: Vec<WorkerId> = order.iter().copied().filter(|w| !pool.contains(w)).collect();
                spare.shuffle(rng);
                pool.extend(spare.iter().take(self.k.saturating_sub(pool.len())));
                if pool.len() < self.k {
                    let mut pad = self.honest.clone();
                    pad.shuffle(rng);
                    pool.extend(pad.iter().take(self.k - pool.len()));
                }
                if let Some(i) = tt.first_unseen(&pool, true) {
                    tt.tasks[i].consumed = true;
                    tt.mark_dispatched(i, &pool);
                    wave.push(Assignment { pool, tt_index: i });
                }
            }
        }
        if wave.is_empty() {
            self.done = true;
        }
        wave
    }

    pub fn absorb(&mut self, trusted: ResultValue, votes: &[(WorkerId, ResultValue)]) {
        if self.lone() {
            self.direct.0 += 1;
            if votes.iter().any(|&(_, v)| v != trusted) {
                self.direct.1 += 1;
            }
            return;
        }
        let released: Vec<WorkerId> = self
            .suspects
            .iter()
            .copied()
            .filter(|&w| disagrees(w, votes))
            .collect();
        self.suspects.retain(|w| !released.contains(w));
        self.honest.extend(released);
        if self.suspects.is_empty() {
            self.done = true;
        }
    }

    /// (honest, colluding). A lone suspect that never contradicted the
    /// trusted value is released as honest.
    pub fn result(&self) -> (Vec<WorkerId>, Vec<WorkerId>) {
        let mut h = self.honest.clone();
        let mut c = self.suspects.clone();
        if self.lone() && self.direct.0 > 0 && self.direct.1 == 0 {
            h.append(&mut c);
        }
        h.sort();
        c.sort();
        (h, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Candidate {
    Pending { rounds: usize },
    Honest,
    Colluding,
}

/// Case II: the unnamed group is mostly honest. Each member is pooled with
/// known colluders; an outvoted member is honest, `e` unanimous rounds mark
/// it colluding.
#[derive(Debug, Clone)]
pub struct CaseTwoPlan {
    pub candidates: Vec<WorkerId>,
    pub colluding: Vec<WorkerId>,
    state: Vec<Candidate>,
    k: usize,
    e: usize,
    pub reduced_confidence: bool,
}

impl CaseTwoPlan {
    pub fn new(candidates: Vec<WorkerId>, colluding: Vec<WorkerId>, k: usize, e: usize) -> Self {
        let state = vec![Candidate::Pending { rounds: 0 }; candidates.len()];
        Self {
            candidates,
            colluding,
            state,
            k,
            e,
            reduced_confidence: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.iter().all(|s| !matches!(s, Candidate::Pending { .. }))
    }

    fn settle_short(&mut self, i: usize, rounds: usize) {
        self.reduced_confidence = true;
        self.state[i] = if rounds > 0 {
            Candidate::Colluding
        } else {
            Candidate::Honest
        };
    }

    pub fn next_wave<R: Rng + ?Sized>(&mut self, tt: &mut TrustedTaskSet, rng: &mut R) -> Vec<Assignment> {
        let mut wave = Vec::new();
        for i in 0..self.candidates.len() {
            let Candidate::Pending { rounds } = self.state[i] else {
                continue;
            };
            let s = self.candidates[i];
            let mut found = None;
            for _ in 0..8 {
                let mut pool = vec![s];
                pool.extend(self.colluding.choose_multiple(rng, self.k.saturating_sub(1)));
                if let Some(t) = tt.first_unseen(&pool, false) {
                    found = Some((pool, t));
                    break;
                }
            }
            match found {
                Some((pool, t)) => {
                    tt.mark_dispatched(t, &pool);
                    wave.push(Assignment { pool, tt_index: t });
                }
                None => self.settle_short(i, rounds),
            }
        }
        wave
    }

    pub fn absorb(&mut self, votes: &[(WorkerId, ResultValue)]) {
        let Some(i) = votes
            .first()
            .and_then(|&(s, _)| self.candidates.iter().position(|&c| c == s))
        else {
            return;
        };
        let Candidate::Pending { rounds } = self.state[i] else {
            return;
        };
        let s = self.candidates[i];
        let unanimous = votes.windows(2).all(|w| w[0].1 == w[1].1);
        self.state[i] = if disagrees(s, votes) {
            Candidate::Honest
        } else if !unanimous {
            // Outvoted partners carry no verdict on S_i; not a unanimous round.
            Candidate::Honest
        } else if rounds + 1 >= self.e {
            Candidate::Colluding
        } else {
            Candidate::Pending { rounds: rounds + 1 }
        };
    }

    /// (honest, colluding).
    pub fn result(&self) -> (Vec<WorkerId>, Vec<WorkerId>) {
        let mut h = Vec::new();
        let mut c = self.colluding.clone();
        for (&w, s) in self.candidates.iter().zip(&self.state) {
            match s {
                Candidate::Colluding => c.push(w),
                _ => h.push(w),
            }
        }
        h.sort();
        c.sort();
        (h, c)
    }
}
