//! Fiedler-vector bisection of a weighted graph.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigen-gap under which the Fiedler vector is considered ambiguous.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Splits nodes by the sign of the Fiedler vector of the unnormalized
/// Laplacian. `None` when the second and third eigenvalues coincide or one
/// side comes out empty.
pub fn fiedler_bisection(weights: &[f64], n: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return None;
    }
    let w = DMatrix::from_row_slice(n, n, weights);
    let w = (&w + w.transpose()) * 0.5;
    let mut lap = -w.clone();
    for i in 0..n {
        lap[(i, i)] = w.row(i).sum() - w[(i, i)];
    }
    // Lifting the constant vector above the spectrum leaves the Fiedler
    // vector as the eigenvector of the smallest eigenvalue.
    let shift = lap.trace().max(1.0) * 2.0 + 1.0;
    let lifted = &lap + DMatrix::from_element(n, n, shift / n as f64);
    let eig = SymmetricEigen::new(lifted);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if n > 2 {
        let l2 = eig.eigenvalues[order[0]];
        let l3 = eig.eigenvalues[order[1]];
        if (l3 - l2).abs() <= DEGENERACY_GAP * l3.abs().max(1.0) {
            return None;
        }
    }
    let v = eig.eigenvectors.column(order[0]);
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| v[i] >= 0.0);
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    Some((pos, neg))
}
