//! Agglomerative clustering with Ward's minimum-variance criterion.
//!
//! Merge cost is the increase in within-cluster sum of squared Euclidean
//! distances, ΔSSE(A,B) = |A||B|/(|A|+|B|) · ‖c_A − c_B‖², maintained across
//! merges by the Lance-Williams recurrence instead of recomputing centroids.
//! Cluster ids follow the usual linkage convention: leaves are 0..n−1 and the
//! i-th merge creates id n+i. Equal costs resolve to the pair with the
//! lexicographically smallest (smaller id, larger id), so the merge sequence
//! is deterministic for a given input order.

use ndarray::Array2;

/// One agglomeration step: clusters `a` and `b` (a < b) fused into `new_id`
/// at the given ΔSSE cost.
#[derive(Debug, Clone, PartialEq)]
pub struct WardMerge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub new_id: usize,
}

/// Full merge sequence (n−1 steps) for row vectors of `points`.
pub fn ward_linkage(points: &Array2<f64>) -> Vec<WardMerge> {
    let n = points.nrows();
    if n < 2 {
        return Vec::new();
    }
    let total_ids = 2 * n - 1;

    // Pairwise ΔSSE between active clusters, indexed by cluster id.
    let mut dist = Array2::from_elem((total_ids, total_ids), f64::INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dist[(i, j)] = d2 / 2.0;
            dist[(j, i)] = d2 / 2.0;
        }
    }

    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![0_usize; total_ids];
    size[..n].iter_mut().for_each(|s| *s = 1);

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = f64::INFINITY;
        let mut pair = (0, 0);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                if dist[(a, b)] < best {
                    best = dist[(a, b)];
                    pair = (a, b);
                }
            }
        }
        let (a, b) = pair;
        let new_id = n + step;

        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let nc = size[c] as f64;
            let d = ((na + nc) * dist[(a, c)] + (nb + nc) * dist[(b, c)]
                - nc * dist[(a, b)])
                / (na + nb + nc);
            dist[(new_id, c)] = d;
            dist[(c, new_id)] = d;
        }
        size[new_id] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        active.push(new_id);
        merges.push(WardMerge {
            a,
            b,
            cost: best,
            new_id,
        });
    }
    merges
}

/// Labels each of the n leaves with a cluster id in 0..k by applying only the
/// first n−k merges. Labels are canonicalized so the first leaf of each
/// cluster (in input order) determines its label order.
pub fn cut_to_k(n: usize, merges: &[WardMerge], k: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= n, "cut requires 1 ≤ k ≤ n");
    let total_ids = if n >= 1 { 2 * n - 1 } else { 0 };
    let mut parent: Vec<usize> = (0..total_ids).collect();
    for merge in &merges[..n - k] {
        parent[merge.a] = merge.new_id;
        parent[merge.b] = merge.new_id;
    }
    let root = |mut id: usize| {
        while parent[id] != id {
            id = parent[id];
        }
        id
    };

    let mut label_of_root: Vec<Option<usize>> = vec![None; total_ids];
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let r = root(leaf);
        let label = *label_of_root[r].get_or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels.push(label);
    }
    debug_assert_eq!(next, k, "cut should produce exactly k clusters");
    labels
}
