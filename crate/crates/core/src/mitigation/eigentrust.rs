//! Global trust by power iteration over normalized local trust.

use serde::{Deserialize, Serialize};

use super::graph::SimilarityGraph;
use crate::model::WorkerId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenTrustParams {
    pub tolerance: f64,
    pub max_iters: usize,
    /// Workers whose trust falls below `threshold_ratio / n` are flagged.
    pub threshold_ratio: f64,
}

impl Default for EigenTrustParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 1000,
            threshold_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenTrustOutcome {
    /// Trust per entry of the input worker list; sums to 1.
    pub trust: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub malicious: Vec<WorkerId>,
}

/// Row-stochastic local trust over `workers`. Rows without any positive
/// weight fall back to the uniform pre-trust row.
pub fn local_trust(g: &SimilarityGraph, workers: &[WorkerId]) -> Vec<f64> {
    let m = workers.len();
    let mut c = g.dense(workers);
    for i in 0..m {
        let row = &mut c[i * m..(i + 1) * m];
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|x| *x /= sum);
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / m as f64);
        }
    }
    c
}

pub fn eigentrust(g: &SimilarityGraph, workers: &[WorkerId], params: &EigenTrustParams) -> EigenTrustOutcome {
    let m = workers.len();
    if m == 0 {
        return EigenTrustOutcome {
            trust: Vec::new(),
            iterations: 0,
            converged: true,
            malicious: Vec::new(),
        };
    }
    let c = local_trust(g, workers);
    let mut t = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            for j in 0..m {
                next[j] += c[i * m + j] * t[i];
            }
        }
        let diff: f64 = t.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut t, &mut next);
        if diff < params.tolerance {
            converged = true;
            break;
        }
    }

    let scores = if converged {
        t.clone()
    } else {
        // Incoming raw weight, normalized, as a rank-only substitute.
        let w = g.dense(workers);
        let mut s: Vec<f64> = (0..m).map(|j| (0..m).map(|i| w[i * m + j]).sum()).collect();
        let total: f64 = s.iter().sum();
        if total > 0.0 {
            s.iter_mut().for_each(|x| *x /= total);
        }
        s
    };
    let cut = params.threshold_ratio / m as f64;
    let malicious = workers
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s < cut)
        .map(|(&w, _)| w)
        .collect();
    EigenTrustOutcome {
        trust: scores,
        iterations,
        converged,
        malicious,
    }
}
