//! Grid expansion and batch execution of independent runs.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::ConfigError;
use crate::metrics::MetricRow;
use crate::sim::trace::RunTrace;
use crate::sim::{run, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub cfg: ScenarioConfig,
    pub scheme: Scheme,
    pub seed: u64,
}

impl RunSpec {
    pub fn execute(&self) -> Result<RunTrace, ConfigError> {
        run(&self.cfg, self.scheme, self.seed)
    }

    pub fn metrics(&self, trace: &RunTrace) -> MetricRow {
        MetricRow::from_trace(
            trace,
            self.cfg.colluding_fraction,
            self.cfg.p_collude,
            self.cfg.effective_cvt_len(),
            self.cfg.obs_per_edge,
        )
    }
}

/// Sweep definition. Seeds depend only on the `(|C|, P_c)` cell and the
/// repetition, so every scheme, L and e sees the same rosters and
/// activation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub colluding: Vec<f64>,
    pub p_collude: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// CVT lengths as fractions of N; empty keeps the base config's value.
    pub cvt_fractions: Vec<f64>,
    /// Values of e; empty keeps the base config's value.
    pub es: Vec<usize>,
    pub reps: u64,
    pub base_seed: u64,
    /// Adds a `|C| = 0` control cell per `P_c`.
    pub controls: bool,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            colluding: (1..=9).map(|i| i as f64 / 10.0).collect(),
            p_collude: vec![0.1, 0.5, 0.9],
            schemes: Scheme::DEFAULTS.to_vec(),
            cvt_fractions: Vec::new(),
            es: Vec::new(),
            reps: 100,
            base_seed: 1,
            controls: true,
        }
    }
}

impl SweepGrid {
    pub fn expand(&self, base: &ScenarioConfig) -> Vec<RunSpec> {
        let mut fractions: Vec<f64> = Vec::new();
        if self.controls && !self.colluding.contains(&0.0) {
            fractions.push(0.0);
        }
        fractions.extend(&self.colluding);
        let ls: Vec<Option<usize>> = if self.cvt_fractions.is_empty() {
            vec![base.cvt_len]
        } else {
            self.cvt_fractions
                .iter()
                .map(|f| Some(((f * base.n_workers as f64).round() as usize).max(1)))
                .collect()
        };
        let es = if self.es.is_empty() {
            vec![base.obs_per_edge]
        } else {
            self.es.clone()
        };

        let mut specs = Vec::new();
        let mut cell = 0u64;
        for &c in &fractions {
            for &pc in &self.p_collude {
                for rep in 0..self.reps {
                    let seed = self.base_seed + cell * self.reps + rep;
                    for &scheme in &self.schemes {
                        for &l in &ls {
                            for &e in &es {
                                let cfg = ScenarioConfig {
                                    colluding_fraction: c,
                                    p_collude: pc,
                                    cvt_len: l,
                                    obs_per_edge: e,
                                    rng_seed: seed,
                                    ..base.clone()
                                };
                                specs.push(RunSpec { cfg, scheme, seed });
                            }
                        }
                    }
                }
                cell += 1;
            }
        }
        specs
    }
}

/// Runs every spec on the calling thread, in order.
pub fn run_batch_sequential(specs: &[RunSpec]) -> Vec<Result<RunTrace, ConfigError>> {
    specs.iter().map(RunSpec::execute).collect()
}

/// Runs every spec; results keep the order of `specs`.
#[cfg(feature = "parallel")]
pub fn run_batch(specs: &[RunSpec]) -> Vec<Result<RunTrace, ConfigError>> {
    use rayon::prelude::*;
    specs.par_iter().map(RunSpec::execute).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(specs: &[RunSpec]) -> Vec<Result<RunTrace, ConfigError>> {
    run_batch_sequential(specs)
}

/// Runs specs and keeps only their metric rows, dropping traces as they
/// complete.
#[cfg(feature = "parallel")]
pub fn run_metrics(specs: &[RunSpec]) -> Result<Vec<MetricRow>, ConfigError> {
    use rayon::prelude::*;
    specs
        .par_iter()
        .map(|s| s.execute().map(|t| s.metrics(&t)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_metrics(specs: &[RunSpec]) -> Result<Vec<MetricRow>, ConfigError> {
    specs.iter().map(|s| s.execute().map(|t| s.metrics(&t))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let grid = SweepGrid {
            schemes: vec![Scheme::Serene],
            ..SweepGrid::default()
        };
        let specs = grid.expand(&ScenarioConfig::default());
        assert_eq!(specs.len(), 2700 + 300);
    }

    #[test]
    fn seeds_are_shared_across_schemes_and_distinct_across_cells() {
        let grid = SweepGrid {
            colluding: vec![0.5, 0.7],
            p_collude: vec![0.5],
            schemes: vec![Scheme::Serene, Scheme::Sne { obs_per_edge: 8 }],
            reps: 3,
            controls: false,
            ..SweepGrid::default()
        };
        let specs = grid.expand(&ScenarioConfig::default());
        assert_eq!(specs.len(), 12);
        assert_eq!(specs[0].seed, specs[1].seed);
        let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
        seeds.dedup();
        assert_eq!(seeds, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn cvt_fractions_scale_with_n() {
        let grid = SweepGrid {
            colluding: vec![0.5],
            p_collude: vec![0.5],
            schemes: vec![Scheme::Serene],
            cvt_fractions: vec![0.1, 0.25, 0.7],
            reps: 1,
            controls: false,
            ..SweepGrid::default()
        };
        let ls: Vec<usize> = grid
            .expand(&ScenarioConfig::default())
            .iter()
            .map(|s| s.cfg.effective_cvt_len())
            .collect();
        assert_eq!(ls, vec![2, 5, 14]);
    }
}
