//! Seeded discrete-event simulation of one client, its worker roster and
//! the detection/mitigation actors.

pub mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slab::Slab;
use smallvec::SmallVec;

use crate::behavior::{CollusionDecision, ColluderState, WorkerPopulation};
use crate::config::ScenarioConfig;
use crate::detection::{CvtTable, Detect, ProbeSelection};
use crate::error::ConfigError;
use crate::mitigation::report::{ClassificationReport, ReportStage};
use crate::mitigation::{MitigationParams, MitigationPipeline, Phase, StopAfter};
use crate::model::{build_roster, mix64, ResultValue, SimTime, TaskId, Vote, WorkerClass, WorkerId};
use crate::sne::{SneConfig, SneMonitor};
use crate::verifier::{majority_value, select_pool_in_place};
use trace::{DetectionRecord, DispatchRecord, RunStats, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Serene,
    /// Stops after partitioning and names the larger group honest.
    SerenePrt,
    /// Stops after the scored group has been named.
    SerenePrtG1,
    Sne { obs_per_edge: u32 },
}

impl Scheme {
    pub const DEFAULTS: [Scheme; 5] = [
        Scheme::Serene,
        Scheme::SerenePrt,
        Scheme::SerenePrtG1,
        Scheme::Sne { obs_per_edge: 8 },
        Scheme::Sne { obs_per_edge: 12 },
    ];

    pub fn is_serene(self) -> bool {
        !matches!(self, Scheme::Sne { .. })
    }

    fn stop_after(self) -> StopAfter {
        match self {
            Scheme::SerenePrt => StopAfter::Partition,
            Scheme::SerenePrtG1 => StopAfter::GroupIdentification,
            _ => StopAfter::Verification,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Serene => f.write_str("serene"),
            Scheme::SerenePrt => f.write_str("serene-prt"),
            Scheme::SerenePrtG1 => f.write_str("serene-prt-g1"),
            Scheme::Sne { obs_per_edge } => write!(f, "sne{obs_per_edge}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "serene" => Ok(Scheme::Serene),
            "serene-prt" | "partitioning-only" => Ok(Scheme::SerenePrt),
            "serene-prt-g1" | "group-identification-only" => Ok(Scheme::SerenePrtG1),
            other => other
                .strip_prefix("sne")
                .and_then(|e| e.parse::<u32>().ok())
                .filter(|&e| e >= 1)
                .map(|obs_per_edge| Scheme::Sne { obs_per_edge })
                .ok_or_else(|| format!("unknown scheme `{s}`")),
        }
    }
}

pub const STREAM_ROSTER: u64 = 1;
pub const STREAM_ACTIVATION: u64 = 2;
pub const STREAM_POOLS: u64 = 3;
pub const STREAM_RTT: u64 = 4;
pub const STREAM_WORKERS: u64 = 5;
pub const STREAM_MITIGATION: u64 = 6;

/// Independent stream `id` of the run seeded with `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Chance that a resolved genuine task is copied into a non-full CVT.
pub const CVT_ADMIT_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    GenerateTask(u64),
    DeliverTask { dispatch: u32, worker: WorkerId, rtt: u32 },
    DeliverVote { dispatch: u32, worker: WorkerId, value: ResultValue },
    DetectTick,
    CollusionActivate,
    MitigationStep,
    SimEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DispatchKind {
    Genuine { retried: bool },
    Probe,
    Observation,
    Wave { slot: usize },
    SneObservation,
}

impl DispatchKind {
    fn label(self) -> &'static str {
        match self {
            DispatchKind::Genuine { .. } => "genuine",
            DispatchKind::Probe => "probe",
            DispatchKind::Observation => "observation",
            DispatchKind::Wave { .. } => "verification",
            DispatchKind::SneObservation => "baseline-observation",
        }
    }
}

type Pool = SmallVec<[WorkerId; 4]>;
type Votes = SmallVec<[(WorkerId, ResultValue); 4]>;

#[derive(Debug, Clone)]
struct Dispatch {
    task: TaskId,
    pool: Pool,
    kind: DispatchKind,
    sent: SimTime,
    decision: Option<CollusionDecision>,
    votes: Votes,
}

/// The most recently resolved genuine task, used to refill the CVT.
#[derive(Debug, Clone)]
struct LatestGenuine {
    task: TaskId,
    pool: Pool,
    votes: Votes,
    majority: Option<ResultValue>,
}

#[derive(Debug)]
struct WaveState {
    results: Vec<Option<Vec<(WorkerId, ResultValue)>>>,
    remaining: usize,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    scheme: Scheme,
    pop: WorkerPopulation,
    roster_ids: Vec<WorkerId>,
    shuffle: Vec<WorkerId>,
    activation: Option<SimTime>,
    end: SimTime,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    dispatches: Slab<Dispatch>,
    rng_pools: ChaCha8Rng,
    rng_rtt: ChaCha8Rng,
    rng_workers: ChaCha8Rng,
    rng_mitigation: ChaCha8Rng,
    cvt: CvtTable,
    armed: bool,
    latest: Option<LatestGenuine>,
    pipeline: Option<MitigationPipeline>,
    wave: Option<WaveState>,
    sne: Option<SneMonitor>,
    probes_since_activation: u64,
    rounds_since_activation: u64,
    detections: Vec<DetectionRecord>,
    report: Option<ClassificationReport>,
    dispatch_log: Vec<DispatchRecord>,
    stats: RunStats,
    digest: u64,
    draining: bool,
}

impl<'a> Sim<'a> {
    fn now_activated(&self, now: SimTime) -> bool {
        self.activation.is_some_and(|a| now >= a)
    }

    fn push(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn hash_event(&mut self, ev: &Event) {
        let (tag, a, b, c): (u64, u64, u64, u64) = match ev.kind {
            EventKind::GenerateTask(i) => (1, i, 0, 0),
            EventKind::DeliverTask { dispatch, worker, rtt } => (2, dispatch as u64, worker.0 as u64, rtt as u64),
            EventKind::DeliverVote { dispatch, worker, value } => (3, dispatch as u64, worker.0 as u64, value.0),
            EventKind::DetectTick => (4, 0, 0, 0),
            EventKind::CollusionActivate => (5, 0, 0, 0),
            EventKind::MitigationStep => (6, 0, 0, 0),
            EventKind::SimEnd => (7, 0, 0, 0),
        };
        for word in [ev.time.0, tag, a, b, c] {
            self.digest = mix64(self.digest ^ word);
        }
    }

    fn dispatch(&mut self, task: TaskId, pool: &[WorkerId], kind: DispatchKind, now: SimTime) -> usize {
        if self.cfg.record_dispatches {
            self.dispatch_log.push(DispatchRecord {
                time: now,
                task: task.seq,
                kind: kind.label().into(),
                pool: pool.to_vec(),
            });
        }
        let (lo, hi) = (
            SimTime::from_millis(self.cfg.rtt_min).0,
            SimTime::from_millis(self.cfg.rtt_max).0,
        );
        let key = self.dispatches.insert(Dispatch {
            task,
            votes: Votes::new(),
            pool: Pool::from_slice(pool),
            kind,
            sent: now,
            decision: None,
        });
        for &w in pool {
            let rtt = self.rng_rtt.gen_range(lo..=hi);
            self.stats.dispatched_messages += 1;
            if self.pop.ring.is_member(w) {
                self.push(
                    now.plus(rtt / 2),
                    EventKind::DeliverTask { dispatch: key as u32, worker: w, rtt: rtt as u32 },
                );
            } else {
                // Only ring members act on delivery time; everyone else can
                // answer at dispatch.
                let value = self.pop.vote(w, task, CollusionDecision::ActHonest, &mut self.rng_workers);
                self.push(now.plus(rtt), EventKind::DeliverVote { dispatch: key as u32, worker: w, value });
            }
        }
        key
    }

    fn run(&mut self) {
        while let Some(ev) = self.queue.pop() {
            self.stats.events += 1;
            self.hash_event(&ev);
            let now = ev.time;
            if self.draining && !matches!(ev.kind, EventKind::DeliverTask { .. } | EventKind::DeliverVote { .. }) {
                continue;
            }
            match ev.kind {
                EventKind::GenerateTask(i) => self.on_generate(i, now),
                EventKind::DeliverTask { dispatch, worker, rtt } => {
                    self.on_deliver_task(dispatch as usize, worker, rtt as u64, now)
                }
                EventKind::DeliverVote { dispatch, worker, value } => self.on_vote(dispatch as usize, worker, value, now),
                EventKind::DetectTick => self.on_tick(now),
                EventKind::CollusionActivate => {}
                EventKind::MitigationStep => self.on_mitigation_step(now),
                EventKind::SimEnd => self.halt(now),
            }
        }
    }

    fn halt(&mut self, now: SimTime) {
        if !self.draining {
            self.draining = true;
            self.stats.end_time = now;
        }
    }

    fn on_generate(&mut self, i: u64, now: SimTime) {
        self.stats.genuine_tasks += 1;
        let task = TaskId::genuine(i);
        if i + 1 < self.cfg.genuine_task_count() {
            let t = SimTime::from_secs((i + 1) as f64 / self.cfg.task_rate);
            self.push(t, EventKind::GenerateTask(i + 1));
        }
        let planned = if let Some(p) = self.pipeline.as_mut() {
            p.next_observation_pool(&mut self.rng_mitigation)
                .map(|pool| (pool, DispatchKind::Observation))
        } else if let Some(s) = self.sne.as_mut() {
            s.next_pool(&mut self.rng_mitigation)
                .map(|pool| (pool, DispatchKind::SneObservation))
        } else {
            None
        };
        match planned {
            Some((pool, kind)) => {
                self.dispatch(task, &pool, kind, now);
            }
            None => {
                let mut shuffle = std::mem::take(&mut self.shuffle);
                let pool = select_pool_in_place(&mut shuffle, self.cfg.pool_size, &mut self.rng_pools)
                    .expect("validated roster");
                self.dispatch(task, pool, DispatchKind::Genuine { retried: false }, now);
                self.shuffle = shuffle;
            }
        }
    }

    fn on_deliver_task(&mut self, key: usize, worker: WorkerId, rtt: u64, now: SimTime) {
        let (task, sent) = {
            let d = &self.dispatches[key];
            (d.task, d.sent)
        };
        if self.draining {
            self.push(sent.plus(rtt), EventKind::DeliverVote { dispatch: key as u32, worker, value: ResultValue(0) });
            return;
        }
        let decision = if self.pop.ring.is_member(worker) {
            let d = &mut self.dispatches[key];
            match d.decision {
                Some(c) => c,
                None => {
                    let c = self.pop.ring_decision(task, &d.pool, now, &mut self.rng_workers);
                    d.decision = Some(c);
                    c
                }
            }
        } else {
            CollusionDecision::ActHonest
        };
        let value = self.pop.vote(worker, task, decision, &mut self.rng_workers);
        self.push(sent.plus(rtt), EventKind::DeliverVote { dispatch: key as u32, worker, value });
    }

    fn on_vote(&mut self, key: usize, worker: WorkerId, value: ResultValue, now: SimTime) {
        self.stats.delivered_votes += 1;
        let d = &mut self.dispatches[key];
        d.votes.push((worker, value));
        let complete = d.votes.len() == d.pool.len();
        let (task, kind) = (d.task, d.kind);
        if self.draining {
            if complete {
                self.dispatches.remove(key);
            }
            return;
        }
        match kind {
            DispatchKind::Genuine { .. } => {
                if let Some(e) = self.cvt.entry_mut(task) {
                    e.record(worker, value);
                }
            }
            DispatchKind::Probe
                if self.armed => {
                    let vote = Vote {
                        task,
                        worker,
                        value,
                        arrival_time: now,
                    };
                    if self.cvt.on_probe_vote(&vote) == Detect::Collusion {
                        self.on_detection(task, value, now);
                    }
                }
            _ => {}
        }
        if complete {
            let d = self.dispatches.remove(key);
            self.on_dispatch_complete(d, now);
        }
    }

    fn on_dispatch_complete(&mut self, d: Dispatch, now: SimTime) {
        match d.kind {
            DispatchKind::Genuine { retried } => {
                let mut values = [ResultValue(0); 8];
                let maj = if d.votes.len() <= values.len() {
                    for (slot, &(_, v)) in values.iter_mut().zip(&d.votes) {
                        *slot = v;
                    }
                    majority_value(&values[..d.votes.len()], d.pool.len())
                } else {
                    let values: Vec<ResultValue> = d.votes.iter().map(|&(_, v)| v).collect();
                    majority_value(&values, d.pool.len())
                };
                if let Some(e) = self.cvt.entry_mut(d.task) {
                    e.resolve_majority(maj);
                }
                match maj {
                    Some(v) => {
                        if self.armed
                            && self.scheme.is_serene()
                            && !self.cvt.is_full()
                            && !self.cvt.contains(d.task)
                            && self.rng_pools.gen_bool(CVT_ADMIT_PROBABILITY)
                        {
                            if let Ok(e) = self.cvt.admit(d.task, Some(v)) {
                                for &(w, r) in &d.votes {
                                    e.record(w, r);
                                }
                            }
                        }
                    }
                    None if !retried => {
                        let mut rest: Vec<WorkerId> =
                            self.roster_ids.iter().copied().filter(|w| !d.pool.contains(w)).collect();
                        if let Ok(pool) = select_pool_in_place(&mut rest, self.cfg.pool_size, &mut self.rng_pools) {
                            self.dispatch(d.task, pool, DispatchKind::Genuine { retried: true }, now);
                        }
                    }
                    None => {}
                }
                self.latest = Some(LatestGenuine {
                    task: d.task,
                    pool: d.pool,
                    votes: d.votes,
                    majority: maj,
                });
            }
            DispatchKind::Probe => {}
            DispatchKind::Observation => {
                if let Some(p) = self.pipeline.as_mut() {
                    p.on_observation(d.task, d.votes.into_vec(), now);
                    if p.phase() != Phase::Collecting {
                        self.push(now, EventKind::MitigationStep);
                    }
                }
            }
            DispatchKind::Wave { slot } => {
                let mut votes = d.votes.into_vec();
                votes.sort_by_key(|(w, _)| d.pool.iter().position(|p| p == w));
                let Some(wave) = self.wave.as_mut() else { return };
                wave.results[slot] = Some(votes);
                wave.remaining -= 1;
                if wave.remaining == 0 {
                    let results: Vec<Vec<(WorkerId, ResultValue)>> =
                        self.wave.take().unwrap().results.into_iter().map(Option::unwrap).collect();
                    if let Some(p) = self.pipeline.as_mut() {
                        p.absorb_wave(&results, now);
                    }
                    self.push(now, EventKind::MitigationStep);
                }
            }
            DispatchKind::SneObservation => {
                let Some(s) = self.sne.as_mut() else { return };
                let Some(round) = s.on_observation(d.task, d.votes.into_vec()) else {
                    return;
                };
                if self.now_activated(now) {
                    self.rounds_since_activation += 1;
                }
                if let Some(v) = round {
                    self.detections.push(DetectionRecord {
                        time: now,
                        task: d.task.seq,
                        triggering_workers: v.colluding.clone(),
                        epoch: self.rounds_since_activation,
                    });
                    if self.report.is_none() {
                        self.report = Some(ClassificationReport {
                            honest: v.honest,
                            colluding: v.colluding,
                            malicious: Vec::new(),
                            end_time: now,
                            stage: ReportStage::Baseline,
                            inconclusive: false,
                            reduced_confidence: false,
                        });
                    }
                    if self.cfg.halt_on_finalize {
                        self.halt(now);
                    }
                }
            }
        }
    }

    fn on_detection(&mut self, task: TaskId, value: ResultValue, now: SimTime) {
        let evidence = self.cvt.entry(task).and_then(|e| e.evidence(value));
        self.detections.push(DetectionRecord {
            time: now,
            task: task.seq,
            triggering_workers: evidence.as_ref().map(|e| e.minority_workers.clone()).unwrap_or_default(),
            epoch: self.probes_since_activation,
        });
        self.cvt.wipe();
        self.armed = false;
        if self.pipeline.is_none() {
            let params = MitigationParams {
                k: self.cfg.pool_size,
                pair_target: self.cfg.pair_pool_target as u32,
                e: self.cfg.obs_per_edge,
                stop_after: self.scheme.stop_after(),
                ..MitigationParams::default()
            };
            self.pipeline = Some(MitigationPipeline::new(self.roster_ids.clone(), evidence, params, now));
        }
    }

    fn on_tick(&mut self, now: SimTime) {
        let next = now.plus(SimTime::from_secs(self.cfg.detect_period).0.max(1));
        if next < self.end {
            self.push(next, EventKind::DetectTick);
        }
        self.cvt.next_probe_due = next;
        if !self.armed {
            return;
        }
        match self.cvt.select_probe(self.cfg.pool_size, &mut self.rng_pools) {
            ProbeSelection::Probe { task, pool } => {
                if let Some(e) = self.cvt.entry_mut(task) {
                    for &w in &pool {
                        e.mark_received(w);
                    }
                }
                self.stats.probes += 1;
                if self.now_activated(now) {
                    self.probes_since_activation += 1;
                }
                self.dispatch(task, &pool, DispatchKind::Probe, now);
            }
            ProbeSelection::ReplacementNeeded(old) => match &self.latest {
                Some(l) if !self.cvt.contains(l.task) => {
                    if let Ok(e) = self.cvt.replace(old, l.task, l.majority) {
                        for &w in &l.pool {
                            e.mark_received(w);
                        }
                        for &(w, v) in &l.votes {
                            e.record(w, v);
                        }
                    }
                }
                _ => self.cvt.remove(old),
            },
            ProbeSelection::Empty => {}
        }
    }

    fn on_mitigation_step(&mut self, now: SimTime) {
        if self.wave.is_some() {
            return;
        }
        let Some(p) = self.pipeline.as_mut() else { return };
        let wave = p.next_wave(&mut self.rng_mitigation, now);
        if p.is_finished() {
            if self.report.is_none() {
                self.report = p.report().cloned();
                if self.cfg.halt_on_finalize {
                    self.halt(now);
                } else {
                    self.cvt = CvtTable::new(self.cfg.effective_cvt_len(), self.roster_ids.len());
                    self.armed = true;
                }
            }
            return;
        }
        if wave.is_empty() {
            return;
        }
        self.wave = Some(WaveState {
            results: vec![None; wave.len()],
            remaining: wave.len(),
        });
        for (slot, (task, pool)) in wave.into_iter().enumerate() {
            self.dispatch(task, &pool, DispatchKind::Wave { slot }, now);
        }
    }
}

/// One seeded run of `scheme` under `cfg`. `cfg.rng_seed` is ignored in
/// favour of `seed`.
pub fn run(cfg: &ScenarioConfig, scheme: Scheme, seed: u64) -> Result<RunTrace, ConfigError> {
    cfg.validate()?;
    let started = Instant::now();
    let roster = build_roster(cfg, &mut stream(seed, STREAM_ROSTER))?;
    let n = roster.len();
    let ring = roster.members(WorkerClass::Colluding);
    let mut rng_act = stream(seed, STREAM_ACTIVATION);
    let (lo, hi) = cfg.collusion_start_window;
    let activation = (!ring.is_empty()).then(|| SimTime::from_secs(rng_act.gen_range(lo..=hi)));
    let salt: u64 = rng_act.gen();
    let ring_state = ColluderState::new(
        n,
        &ring,
        activation.unwrap_or(SimTime(u64::MAX)),
        salt,
        cfg.evasive_memory,
        cfg.pc_draw,
    );
    let pop = WorkerPopulation::new(roster.clone(), ring_state, cfg.epsilon, cfg.p_collude);
    let end = SimTime::from_secs(cfg.sim_end);
    let roster_ids: Vec<WorkerId> = roster.workers().collect();
    let sne = match scheme {
        Scheme::Sne { obs_per_edge } => Some(SneMonitor::new(roster_ids.clone(), cfg.pool_size, SneConfig { obs_per_edge })),
        _ => None,
    };
    let mut sim = Sim {
        cfg,
        scheme,
        pop,
        activation,
        end,
        queue: BinaryHeap::new(),
        next_seq: 0,
        dispatches: Slab::new(),
        rng_pools: stream(seed, STREAM_POOLS),
        rng_rtt: stream(seed, STREAM_RTT),
        rng_workers: stream(seed, STREAM_WORKERS),
        rng_mitigation: stream(seed, STREAM_MITIGATION),
        cvt: CvtTable::new(cfg.effective_cvt_len(), n),
        armed: scheme.is_serene(),
        latest: None,
        pipeline: None,
        wave: None,
        sne,
        probes_since_activation: 0,
        rounds_since_activation: 0,
        detections: Vec::new(),
        report: None,
        dispatch_log: Vec::new(),
        stats: RunStats::default(),
        digest: 0,
        draining: false,
        shuffle: roster_ids.clone(),
        roster_ids,
    };
    if cfg.genuine_task_count() > 0 {
        sim.push(SimTime::ZERO, EventKind::GenerateTask(0));
    }
    if scheme.is_serene() {
        sim.push(SimTime::ZERO, EventKind::DetectTick);
    }
    if let Some(a) = activation {
        sim.push(a, EventKind::CollusionActivate);
    }
    sim.push(end, EventKind::SimEnd);
    sim.run();

    let mut stats = sim.stats.clone();
    stats.digest = format!("{:016x}", sim.digest);
    Ok(RunTrace {
        scheme: scheme.to_string(),
        seed,
        config: cfg.to_kv_string(),
        roster: roster.classes().to_vec(),
        activation,
        detections: sim.detections,
        report: sim.report,
        phases: sim.pipeline.map(|p| p.records).unwrap_or_default(),
        dispatches: sim.dispatch_log,
        stats,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
