//! Exact linear assignment by the shortest-augmenting-path method with dual
//! potentials (Jonker-Volgenant style), O(n³).
//!
//! Used for two jobs in the Frank-Wolfe loop: minimizing the linearized
//! objective over the coupling polytope (whose vertices are permutation
//! matrices scaled by 1/n) and rounding a dense plan to its mass-maximal
//! permutation. Works for any finite real costs; ties resolve to the
//! lowest-index column, so results are deterministic.

use ndarray::Array2;

/// Returns the column assigned to each row in a minimum-total-cost perfect
/// matching on the square cost matrix.
pub fn solve(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment requires a square cost matrix");
    if n == 0 {
        return Vec::new();
    }

    // 1-based arrays; index 0 is the virtual unmatched column.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut row_of = vec![0_usize; n + 1]; // row currently matched to column j
    let mut way = vec![0_usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if !used[j] {
                    let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if reduced < minv[j] {
                        minv[j] = reduced;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path backwards, reassigning columns.
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0_usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}
