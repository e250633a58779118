//! Markov clustering on a dense symmetric weight matrix.

use nalgebra::DMatrix;
use petgraph::unionfind::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MclParams {
    pub inflation: f64,
    pub expansion: u32,
    pub self_loop: f64,
    pub prune: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        Self {
            inflation: 2.0,
            expansion: 2,
            self_loop: 1.0,
            prune: 1e-5,
            max_iters: 100,
            tolerance: 1e-9,
        }
    }
}

fn normalize_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let s: f64 = col.iter().sum();
        if s > 0.0 {
            col /= s;
        }
    }
}

/// Clusters as sorted index lists, ordered by their smallest member.
pub fn mcl(weights: &[f64], n: usize, params: &MclParams) -> Vec<Vec<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::from_row_slice(n, n, weights);
    for i in 0..n {
        m[(i, i)] += params.self_loop;
    }
    normalize_columns(&mut m);
    for _ in 0..params.max_iters {
        let mut next = m.clone();
        for _ in 1..params.expansion {
            next = &next * &m;
        }
        let whole = params.inflation.fract() == 0.0 && params.inflation.abs() < 64.0;
        next.apply(|x| {
            *x = if whole { x.powi(params.inflation as i32) } else { x.powf(params.inflation) };
            if *x < params.prune {
                *x = 0.0;
            }
        });
        normalize_columns(&mut next);
        let delta = (&next - &m).abs().max();
        m = next;
        if delta < params.tolerance {
            break;
        }
    }

    // Attractor rows hold the mass; each attracts the columns it is nonzero on.
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        if m[(i, i)] > params.prune {
            for j in 0..n {
                if m[(i, j)] > params.prune {
                    uf.union(i, j);
                }
            }
        }
    }
    let labels = uf.into_labeling();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<Option<usize>> = vec![None; n];
    for (i, &root) in labels.iter().enumerate() {
        match seen[root] {
            Some(c) => clusters[c].push(i),
            None => {
                seen[root] = Some(clusters.len());
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}
