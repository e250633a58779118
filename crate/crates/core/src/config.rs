//! Scenario configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{class_counts, round_half_up};

/// How a pool's colluders draw the `p_collude` coin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcDraw {
    /// One shared flip per (task, pool).
    Joint,
    /// Every pooled colluder flips; the ring colludes only if all succeed.
    PerWorker,
}

/// Whose memory the evasive rule consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvasiveMemory {
    PerWorker,
    RingShared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_workers: usize,
    pub pool_size: usize,
    pub colluding_fraction: f64,
    pub naive_fraction: f64,
    pub p_collude: f64,
    pub epsilon: f64,
    /// CVT length; `None` means `round(0.25 * n_workers)`.
    pub cvt_len: Option<usize>,
    /// Probe period in simulated seconds.
    pub detect_period: f64,
    /// Trusted-task verifications per worker (scoring and Case II).
    pub obs_per_edge: usize,
    /// Co-pool observations per worker pair before the graph is built.
    pub pair_pool_target: usize,
    /// Genuine tasks per simulated second.
    pub task_rate: f64,
    /// Round-trip bounds in milliseconds.
    pub rtt_min: f64,
    pub rtt_max: f64,
    /// Simulation horizon in seconds.
    pub sim_end: f64,
    pub collusion_start_window: (f64, f64),
    pub rng_seed: u64,
    pub pc_draw: PcDraw,
    pub evasive_memory: EvasiveMemory,
    pub halt_on_finalize: bool,
    pub record_dispatches: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_workers: 20,
            pool_size: 3,
            colluding_fraction: 0.5,
            naive_fraction: 0.0,
            p_collude: 0.5,
            epsilon: 0.003,
            cvt_len: None,
            detect_period: 0.1,
            obs_per_edge: 12,
            pair_pool_target: 8,
            task_rate: 1000.0,
            rtt_min: 20.0,
            rtt_max: 25.0,
            sim_end: 100.0,
            collusion_start_window: (3.0, 90.0),
            rng_seed: 1,
            pc_draw: PcDraw::Joint,
            evasive_memory: EvasiveMemory::PerWorker,
            halt_on_finalize: true,
            record_dispatches: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "n_workers",
    "pool_size",
    "colluding_fraction",
    "naive_fraction",
    "p_collude",
    "epsilon",
    "cvt_len",
    "detect_period",
    "obs_per_edge",
    "pair_pool_target",
    "task_rate",
    "rtt_min",
    "rtt_max",
    "sim_end",
    "collusion_start_window",
    "rng_seed",
    "pc_draw",
    "evasive_memory",
    "halt_on_finalize",
    "record_dispatches",
];

/// Maps short CLI spellings onto config keys.
pub fn canonical_key(key: &str) -> &str {
    match key.trim_start_matches('-').replace('-', "_").as_str() {
        "n" => "n_workers",
        "k" => "pool_size",
        "colluding" => "colluding_fraction",
        "naive" => "naive_fraction",
        "pc" => "p_collude",
        "eps" => "epsilon",
        "l" | "L" => "cvt_len",
        "dt" => "detect_period",
        "e" => "obs_per_edge",
        "seed" => "rng_seed",
        _ => CONFIG_KEYS
            .iter()
            .find(|k| **k == key.trim_start_matches('-').replace('-', "_"))
            .copied()
            .unwrap_or(key),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

impl ScenarioConfig {
    pub fn effective_cvt_len(&self) -> usize {
        self.cvt_len
            .unwrap_or_else(|| round_half_up(0.25 * self.n_workers as f64))
            .max(1)
    }

    /// `floor(task_rate * sim_end)`.
    pub fn genuine_task_count(&self) -> u64 {
        (self.task_rate * self.sim_end + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pool_size < 3 || self.pool_size.is_multiple_of(2) {
            return Err(ConfigError::PoolSize(self.pool_size));
        }
        if self.n_workers < self.pool_size {
            return Err(ConfigError::TooFewWorkers {
                n: self.n_workers,
                k: self.pool_size,
            });
        }
        let (_, _, honest) =
            class_counts(self.n_workers, self.colluding_fraction, self.naive_fraction)?;
        if honest < 2 {
            return Err(ConfigError::TooFewHonest(honest));
        }
        for (name, value) in [("p_collude", self.p_collude), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { name, value });
            }
        }
        if !(self.rtt_min >= 0.0 && self.rtt_min <= self.rtt_max) {
            return Err(ConfigError::Rtt {
                min: self.rtt_min,
                max: self.rtt_max,
            });
        }
        if self.cvt_len == Some(0) {
            return Err(ConfigError::NonPositive("cvt_len"));
        }
        if self.obs_per_edge == 0 {
            return Err(ConfigError::NonPositive("obs_per_edge"));
        }
        if self.pair_pool_target == 0 {
            return Err(ConfigError::NonPositive("pair_pool_target"));
        }
        if self.task_rate <= 0.0 {
            return Err(ConfigError::NonPositive("task_rate"));
        }
        if self.sim_end <= 0.0 {
            return Err(ConfigError::NonPositive("sim_end"));
        }
        if self.detect_period <= 0.0 {
            return Err(ConfigError::NonPositive("detect_period"));
        }
        let (a, b) = self.collusion_start_window;
        if !(a >= 0.0 && a <= b) {
            return Err(ConfigError::Window(a, b));
        }
        Ok(())
    }

    /// Sets one key (canonical or short alias) from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = canonical_key(key).to_string();
        let v = value.trim();
        match key.as_str() {
            "n_workers" => self.n_workers = parse(&key, v)?,
            "pool_size" => self.pool_size = parse(&key, v)?,
            "colluding_fraction" => self.colluding_fraction = parse(&key, v)?,
            "naive_fraction" => self.naive_fraction = parse(&key, v)?,
            "p_collude" => self.p_collude = parse(&key, v)?,
            "epsilon" => self.epsilon = parse(&key, v)?,
            "cvt_len" => {
                self.cvt_len = if v.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse(&key, v)?)
                }
            }
            "detect_period" => self.detect_period = parse(&key, v)?,
            "obs_per_edge" => self.obs_per_edge = parse(&key, v)?,
            "pair_pool_target" => self.pair_pool_target = parse(&key, v)?,
            "task_rate" => self.task_rate = parse(&key, v)?,
            "rtt_min" => self.rtt_min = parse(&key, v)?,
            "rtt_max" => self.rtt_max = parse(&key, v)?,
            "sim_end" => self.sim_end = parse(&key, v)?,
            "collusion_start_window" => {
                let parts: Vec<&str> = v
                    .trim_matches(|c| c == '(' || c == ')')
                    .split(',')
                    .collect();
                if parts.len() != 2 {
                    return Err(bad(&key, v, "expected `start, end`"));
                }
                self.collusion_start_window = (parse(&key, parts[0])?, parse(&key, parts[1])?);
            }
            "rng_seed" => self.rng_seed = parse(&key, v)?,
            "pc_draw" => {
                self.pc_draw = match v {
                    "joint" => PcDraw::Joint,
                    "per_worker" | "per-worker" => PcDraw::PerWorker,
                    _ => return Err(bad(&key, v, "expected joint | per_worker")),
                }
            }
            "evasive_memory" => {
                self.evasive_memory = match v {
                    "per_worker" | "per-worker" => EvasiveMemory::PerWorker,
                    "ring_shared" | "ring-shared" => EvasiveMemory::RingShared,
                    _ => return Err(bad(&key, v, "expected per_worker | ring_shared")),
                }
            }
            "halt_on_finalize" => self.halt_on_finalize = parse(&key, v)?,
            "record_dispatches" => self.record_dispatches = parse(&key, v)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Reads a config file body on top of the defaults. Blank lines and
    /// `#` comments are skipped.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let pc = match self.pc_draw {
            PcDraw::Joint => "joint",
            PcDraw::PerWorker => "per_worker",
        };
        let mem = match self.evasive_memory {
            EvasiveMemory::PerWorker => "per_worker",
            EvasiveMemory::RingShared => "ring_shared",
        };
        let cvt = self
            .cvt_len
            .map(|l| l.to_string())
            .unwrap_or_else(|| "auto".into());
        let _ = writeln!(out, "n_workers = {}", self.n_workers);
        let _ = writeln!(out, "pool_size = {}", self.pool_size);
        let _ = writeln!(out, "colluding_fraction = {}", self.colluding_fraction);
        let _ = writeln!(out, "naive_fraction = {}", self.naive_fraction);
        let _ = writeln!(out, "p_collude = {}", self.p_collude);
        let _ = writeln!(out, "epsilon = {}", self.epsilon);
        let _ = writeln!(out, "cvt_len = {cvt}");
        let _ = writeln!(out, "detect_period = {}", self.detect_period);
        let _ = writeln!(out, "obs_per_edge = {}", self.obs_per_edge);
        let _ = writeln!(out, "pair_pool_target = {}", self.pair_pool_target);
        let _ = writeln!(out, "task_rate = {}", self.task_rate);
        let _ = writeln!(out, "rtt_min = {}", self.rtt_min);
        let _ = writeln!(out, "rtt_max = {}", self.rtt_max);
        let _ = writeln!(out, "sim_end = {}", self.sim_end);
        let _ = writeln!(
            out,
            "collusion_start_window = {}, {}",
            self.collusion_start_window.0, self.collusion_start_window.1
        );
        let _ = writeln!(out, "rng_seed = {}", self.rng_seed);
        let _ = writeln!(out, "pc_draw = {pc}");
        let _ = writeln!(out, "evasive_memory = {mem}");
        let _ = writeln!(out, "halt_on_finalize = {}", self.halt_on_finalize);
        let _ = writeln!(out, "record_dispatches = {}", self.record_dispatches);
        out
    }
}
