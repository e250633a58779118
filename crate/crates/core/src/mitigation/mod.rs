//! Post-detection pipeline: observe, filter, partition, score, verify.

pub mod eigentrust;
pub mod graph;
pub mod mcl;
pub mod partition;
pub mod report;
pub mod repository;
pub mod scoring;
pub mod spectral;
pub mod trusted;
pub mod verification;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::detection::DetectionEvidence;
use crate::model::{ResultValue, SimTime, TaskId, WorkerId};
use eigentrust::{eigentrust, EigenTrustParams};
use graph::SimilarityGraph;
use mcl::MclParams;
use partition::{greedy_fallback, partition, Partition};
use report::{ClassificationReport, ReportStage};
use repository::{CoveragePlanner, TaskRepository};
use scoring::{split_by_score, Assignment, ScoringPlan, VerificationCase};
use trusted::{build_trusted_tasks, TrustedTaskSet};
use verification::{CaseOnePlan, CaseTwoPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopAfter {
    Partition,
    GroupIdentification,
    Verification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationParams {
    pub k: usize,
    pub pair_target: u32,
    pub e: usize,
    pub eigentrust: EigenTrustParams,
    pub mcl: MclParams,
    pub stop_after: StopAfter,
}

impl Default for MitigationParams {
    fn default() -> Self {
        Self {
            k: 3,
            pair_target: 8,
            e: 12,
            eigentrust: EigenTrustParams::default(),
            mcl: MclParams::default(),
            stop_after: StopAfter::Verification,
        }
    }
}

/// One trace record per completed phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub phase: &'static str,
    pub at: SimTime,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Collecting,
    Scoring,
    CaseOne,
    CaseTwo,
    Finished,
}

#[derive(Debug, Clone)]
pub struct MitigationPipeline {
    params: MitigationParams,
    roster: Vec<WorkerId>,
    evidence: Option<DetectionEvidence>,
    planner: CoveragePlanner,
    pub tr: TaskRepository,
    outstanding: usize,
    extended: bool,
    phase: Phase,
    malicious: Vec<WorkerId>,
    groups: Option<Partition>,
    tt: TrustedTaskSet,
    scoring: Option<ScoringPlan>,
    case_one: Option<CaseOnePlan>,
    case_two: Option<CaseTwoPlan>,
    wave: Vec<Assignment>,
    report: Option<ClassificationReport>,
    pub records: Vec<PhaseRecord>,
}

impl MitigationPipeline {
    pub fn new(
        roster: Vec<WorkerId>,
        evidence: Option<DetectionEvidence>,
        params: MitigationParams,
        now: SimTime,
    ) -> Self {
        let n = roster.len();
        let planner = CoveragePlanner::new(roster.clone(), n, params.k, params.pair_target);
        Self {
            roster,
            evidence,
            planner,
            tr: TaskRepository::new(n),
            outstanding: 0,
            extended: false,
            phase: Phase::Collecting,
            malicious: Vec::new(),
            groups: None,
            tt: TrustedTaskSet::default(),
            scoring: None,
            case_one: None,
            case_two: None,
            wave: Vec::new(),
            report: None,
            records: vec![PhaseRecord {
                phase: "start",
                at: now,
                detail: json!({ "pair_target": params.pair_target, "k": params.k }),
            }],
            params,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn report(&self) -> Option<&ClassificationReport> {
        self.report.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// While collecting: the pool for the next genuine task, if more
    /// coverage is still needed.
    pub fn next_observation_pool<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Vec<WorkerId>> {
        if self.phase != Phase::Collecting {
            return None;
        }
        let pool = self.planner.next_pool(rng)?;
        self.outstanding += 1;
        Some(pool)
    }

    pub fn on_observation(&mut self, task: TaskId, votes: Vec<(WorkerId, ResultValue)>, now: SimTime) {
        if self.phase != Phase::Collecting {
            return;
        }
        self.tr.push(task, votes);
        self.outstanding = self.outstanding.saturating_sub(1);
        if self.outstanding == 0 && self.planner.is_satisfied() {
            self.analyze(now);
        }
    }

    fn finish(&mut self, honest: Vec<WorkerId>, colluding: Vec<WorkerId>, stage: ReportStage, now: SimTime) {
        let reduced = self.case_two.as_ref().is_some_and(|p| p.reduced_confidence)
            || self.scoring.as_ref().is_some_and(|p| p.stalled());
        let report = ClassificationReport {
            honest,
            colluding,
            malicious: self.malicious.clone(),
            end_time: now,
            stage,
            inconclusive: false,
            reduced_confidence: reduced,
        }
        .finalize();
        self.records.push(PhaseRecord {
            phase: "finalize",
            at: now,
            detail: json!({
                "honest": report.honest,
                "colluding": report.colluding,
                "malicious": report.malicious,
                "stage": report.stage,
            }),
        });
        self.report = Some(report);
        self.phase = Phase::Finished;
        self.wave.clear();
        // Task sets are released once the roster is classified.
        self.tr = TaskRepository::new(self.roster.len());
        self.tt = TrustedTaskSet::default();
    }

    fn abort_inconclusive(&mut self, now: SimTime) {
        let (g1, g2) = self
            .groups
            .as_ref()
            .map(|p| (p.g1.clone(), p.g2.clone()))
            .unwrap_or_default();
        self.finish(g1, g2, ReportStage::Partition, now);
        if let Some(r) = self.report.as_mut() {
            r.inconclusive = true;
        }
    }

    fn analyze(&mut self, now: SimTime) {
        let g = SimilarityGraph::from_repository(&self.tr);
        let et = eigentrust(&g, &self.roster, &self.params.eigentrust);
        self.malicious = et.malicious.clone();
        let rest: Vec<WorkerId> = self
            .roster
            .iter()
            .copied()
            .filter(|w| !self.malicious.contains(w))
            .collect();
        let mut p = partition(&g, &rest, &self.params.mcl).unwrap_or_else(|| match &self.evidence {
            Some(ev) => greedy_fallback(ev, &self.roster, &self.malicious),
            None => Partition {
                g1: rest.clone(),
                g2: Vec::new(),
                method: partition::PartitionMethod::Greedy,
            },
        });
        if p.g1.len() < p.g2.len() {
            std::mem::swap(&mut p.g1, &mut p.g2);
        }
        self.records.push(PhaseRecord {
            phase: "partition",
            at: now,
            detail: json!({
                "observations": self.tr.len(),
                "trust": et.trust,
                "eigentrust_converged": et.converged,
                "malicious": self.malicious,
                "method": p.method,
                "g1": p.g1,
                "g2": p.g2,
                "graph": g.edge_list(),
            }),
        });
        self.groups = Some(p.clone());

        if self.params.stop_after == StopAfter::Partition || p.g2.is_empty() {
            self.finish(p.g1, p.g2, ReportStage::Partition, now);
            return;
        }
        self.tt = build_trusted_tasks(&self.tr, &p.g1, &p.g2);
        if self.tt.is_empty() {
            if !self.extended {
                self.extended = true;
                self.planner.extend_target(self.params.pair_target);
                self.records.push(PhaseRecord {
                    phase: "extend-collection",
                    at: now,
                    detail: json!({ "pair_target": self.planner.target() }),
                });
            } else {
                self.abort_inconclusive(now);
            }
            return;
        }
        self.scoring = Some(ScoringPlan::new(p.g1.clone(), self.params.k, self.params.e));
        self.phase = Phase::Scoring;
    }

    /// Pools and tasks for the next verification wave. Empty once the
    /// pipeline has finished or while it is still collecting.
    pub fn next_wave<R: Rng + ?Sized>(&mut self, rng: &mut R, now: SimTime) -> Vec<(TaskId, Vec<WorkerId>)> {
        loop {
            let wave = match self.phase {
                Phase::Collecting | Phase::Finished => return Vec::new(),
                Phase::Scoring => self.scoring.as_mut().map(|s| s.next_wave(&mut self.tt, rng)),
                Phase::CaseOne => self.case_one.as_mut().map(|s| s.next_wave(&mut self.tt, rng)),
                Phase::CaseTwo => self.case_two.as_mut().map(|s| s.next_wave(&mut self.tt, rng)),
            }
            .unwrap_or_default();
            if !wave.is_empty() {
                let out = wave
                    .iter()
                    .map(|a| (self.tt.tasks[a.tt_index].task, a.pool.clone()))
                    .collect();
                self.wave = wave;
                return out;
            }
            self.advance(now);
        }
    }

    /// Results of the wave returned by the last `next_wave`, one vote list
    /// per pool in pool order.
    pub fn absorb_wave(&mut self, results: &[Vec<(WorkerId, ResultValue)>], now: SimTime) {
        let wave = std::mem::take(&mut self.wave);
        for (a, votes) in wave.iter().zip(results) {
            let trusted = self.tt.tasks[a.tt_index].value;
            match self.phase {
                Phase::Scoring => self.scoring.as_mut().unwrap().absorb(trusted, votes),
                Phase::CaseOne => self.case_one.as_mut().unwrap().absorb(trusted, votes),
                Phase::CaseTwo => self.case_two.as_mut().unwrap().absorb(votes),
                _ => {}
            }
        }
        let done = match self.phase {
            Phase::Scoring => self.scoring.as_ref().unwrap().is_done(),
            Phase::CaseOne => self.case_one.as_ref().unwrap().is_done(),
            Phase::CaseTwo => self.case_two.as_ref().unwrap().is_done(),
            _ => false,
        };
        if done {
            self.advance(now);
        }
    }

    fn advance(&mut self, now: SimTime) {
        match self.phase {
            Phase::Scoring => {
                let plan = self.scoring.as_ref().unwrap();
                let rs = plan.means();
                let split = split_by_score(&plan.group, &rs);
                let g2 = self.groups.as_ref().map(|p| p.g2.clone()).unwrap_or_default();
                let mut other: Vec<WorkerId> = g2.into_iter().chain(split.moved.iter().copied()).collect();
                other.sort();
                self.records.push(PhaseRecord {
                    phase: "group-identification",
                    at: now,
                    detail: json!({
                        "scores": plan.group.iter().zip(&rs).map(|(w, r)| json!([w, r])).collect::<Vec<_>>(),
                        "case": format!("{:?}", split.case),
                        "named": split.kept,
                        "moved": split.moved,
                    }),
                });
                let stop = self.params.stop_after == StopAfter::GroupIdentification;
                match split.case {
                    VerificationCase::CaseI if stop => {
                        self.finish(split.kept, other, ReportStage::GroupIdentification, now)
                    }
                    VerificationCase::CaseII if stop => {
                        self.finish(other, split.kept, ReportStage::GroupIdentification, now)
                    }
                    VerificationCase::CaseI => {
                        self.case_one = Some(CaseOnePlan::new(other, split.kept, self.params.k, self.params.e));
                        self.phase = Phase::CaseOne;
                    }
                    VerificationCase::CaseII => {
                        self.case_two = Some(CaseTwoPlan::new(other, split.kept, self.params.k, self.params.e));
                        self.phase = Phase::CaseTwo;
                    }
                }
            }
            Phase::CaseOne => {
                let (h, c) = self.case_one.as_ref().unwrap().result();
                self.finish(h, c, ReportStage::Verified, now);
            }
            Phase::CaseTwo => {
                let (h, c) = self.case_two.as_ref().unwrap().result();
                self.finish(h, c, ReportStage::Verified, now);
            }
            Phase::Collecting | Phase::Finished => {}
        }
    }
}

/// Source of tasks and results for running a pipeline without the event
/// simulator.
pub trait PoolOracle {
    fn fresh_task(&mut self) -> TaskId;
    fn votes(&mut self, task: TaskId, pool: &[WorkerId]) -> Vec<ResultValue>;
}

/// Drives `pipeline` to completion against `oracle`, one wave per step.
pub fn run_pipeline<R: Rng + ?Sized, O: PoolOracle>(
    pipeline: &mut MitigationPipeline,
    oracle: &mut O,
    rng: &mut R,
) -> Option<ClassificationReport> {
    let mut step = 0u64;
    while !pipeline.is_finished() {
        step += 1;
        let now = SimTime(step);
        if pipeline.phase() == Phase::Collecting {
            let mut batch = Vec::new();
            while let Some(pool) = pipeline.next_observation_pool(rng) {
                batch.push(pool);
            }
            if batch.is_empty() {
                return None;
            }
            for pool in batch {
                let task = oracle.fresh_task();
                let values = oracle.votes(task, &pool);
                pipeline.on_observation(task, pool.into_iter().zip(values).collect(), now);
            }
            continue;
        }
        let wave = pipeline.next_wave(rng, now);
        if wave.is_empty() {
            continue;
        }
        let results: Vec<Vec<(WorkerId, ResultValue)>> = wave
            .iter()
            .map(|(task, pool)| {
                let values = oracle.votes(*task, pool);
                pool.iter().copied().zip(values).collect()
            })
            .collect();
        pipeline.absorb_wave(&results, now);
    }
    pipeline.report().cloned()
}
