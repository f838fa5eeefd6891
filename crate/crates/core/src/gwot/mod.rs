//! Non-entropic Gromov-Wasserstein optimal transport between two RDMs.
//!
//! The solver searches for a coupling Γ (uniform marginals 1/n) minimizing
//!
//! ```text
//! GWD(Γ) = Σ_{i,j,k,l} (D_ij − D′_kl)² Γ_ik Γ_jl
//! ```
//!
//! by Frank-Wolfe iterations from many random permutation starts. Each
//! restart runs the conditional-gradient loop to convergence (linear
//! subproblems solved exactly by assignment, exact line search on the
//! quadratic segment), then rounds to the heaviest permutation vertex and
//! applies a best-improvement transposition descent; the vertex is kept only
//! when it strictly lowers the objective. The polish step costs little and
//! markedly improves basin coverage at small n, where plain conditional
//! gradients stall on non-vertex stationary points.
//!
//! Everything is deterministic: restart r uses seed `base_seed + r`, and the
//! best restart is chosen by (objective, restart index), so results do not
//! depend on thread scheduling.

mod lap;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::structure::{histogram_match, Rdm};

/// Coupling matrix between two stimulus sets, with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub values: Array2<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
}

impl TransportPlan {
    /// Wraps a coupling matrix with uniform marginals 1/n on both sides.
    pub fn new(values: Array2<f64>) -> Self {
        let n_rows = values.nrows();
        let n_cols = values.ncols();
        TransportPlan {
            values,
            row_marginal: vec![1.0 / n_rows as f64; n_rows],
            col_marginal: vec![1.0 / n_cols as f64; n_cols],
        }
    }

    /// Vertex plan: permutation matrix scaled by 1/n.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut values = Array2::zeros((n, n));
        for (i, &k) in perm.iter().enumerate() {
            values[(i, k)] = 1.0 / n as f64;
        }
        TransportPlan::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Checks feasibility: nonnegative entries, rows and columns summing to
    /// their marginals within 1e-9 absolute, total mass 1 within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let (nr, nc) = (self.values.nrows(), self.values.ncols());
        if self.row_marginal.len() != nr || self.col_marginal.len() != nc {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "plan is {nr}x{nc} but marginals have lengths {} and {}",
                    self.row_marginal.len(),
                    self.col_marginal.len()
                ),
            });
        }
        if self.values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InfeasiblePlan {
                detail: "plan entries must be finite and nonnegative".to_string(),
            });
        }
        const TOL: f64 = 1e-9;
        for (i, &m) in self.row_marginal.iter().enumerate() {
            let s: f64 = self.values.row(i).sum();
            if (s - m).abs() > TOL {
                return Err(Error::InfeasiblePlan {
                    detail: format!("row {i} sums to {s}, expected {m}"),
                });
            }
        }
        for (k, &m) in self.col_marginal.iter().enumerate() {
            let s: f64 = self.values.column(k).sum();
            if (s - m).abs() > TOL {
                return Err(Error::InfeasiblePlan {
                    detail: format!("column {k} sums to {s}, expected {m}"),
                });
            }
        }
        let total: f64 = self.values.sum();
        if (total - 1.0).abs() > TOL {
            return Err(Error::InfeasiblePlan {
                detail: format!("total mass is {total}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Knobs for the multi-restart solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_restarts: usize,
    pub max_fw_iterations: usize,
    /// Stop a restart when the relative objective decrease falls below this.
    pub convergence_tol: f64,
    pub base_seed: u64,
    /// Rewrite the second RDM's entries to the first's value distribution
    /// before optimizing (scale-robust comparison).
    pub histogram_match_inputs: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_restarts: 100,
            max_fw_iterations: 1000,
            convergence_tol: 1e-9,
            base_seed: 0,
            histogram_match_inputs: false,
        }
    }
}

/// Outcome of a multi-restart solve.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub best_plan: TransportPlan,
    pub best_gwd: f64,
    /// Final objective of each restart, indexed by restart number.
    pub per_restart_gwd: Vec<f64>,
    /// Whether each restart met the tolerance before the iteration cap.
    pub converged_flags: Vec<bool>,
    /// Frank-Wolfe iterations each restart actually ran.
    pub per_restart_iterations: Vec<usize>,
}

/// Default restart counts by problem size: 10,000 up to ~500-600 stimuli,
/// 1,000 up to ~750-1,200, and 200 for matrices approaching 2,000.
pub fn restart_schedule(n: usize) -> usize {
    if n <= 600 {
        10_000
    } else if n <= 1200 {
        1_000
    } else {
        200
    }
}

fn fdot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Gromov-Wasserstein objective of a feasible plan, computed through the
/// O(n³) expansion of (a−b)²: marginal-weighted squared-distance terms minus
/// twice the ⟨Γ, D Γ D′⟩ contraction. Mathematically equal to the literal
/// quadruple sum for any coupling with these marginals.
pub fn gw_objective(d1: &Rdm, d2: &Rdm, plan: &TransportPlan) -> Result<f64> {
    let n1 = d1.n();
    let n2 = d2.n();
    if plan.values.nrows() != n1 || plan.values.ncols() != n2 {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} but RDMs have {n1} and {n2} stimuli",
                plan.values.nrows(),
                plan.values.ncols()
            ),
        });
    }
    plan.validate()?;

    // Actual row/column sums, so the expansion matches the quadruple sum
    // exactly even at the feasibility tolerance boundary.
    let p: Array1<f64> = plan.values.sum_axis(ndarray::Axis(1));
    let q: Array1<f64> = plan.values.sum_axis(ndarray::Axis(0));

    let d1sq = d1.values.mapv(|v| v * v);
    let d2sq = d2.values.mapv(|v| v * v);
    let t1 = p.dot(&d1sq.dot(&p));
    let t2 = q.dot(&d2sq.dot(&q));
    let t3 = fdot(&plan.values, &d1.values.dot(&plan.values).dot(&d2.values));
    Ok(t1 + t2 - 2.0 * t3)
}

fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Uniformly random permutation vertex of the coupling polytope,
/// deterministic per seed.
pub fn random_plan(n: usize, seed: u64) -> TransportPlan {
    TransportPlan::from_permutation(&random_permutation(n, seed))
}

/// Cost of a permutation vertex before the 1/n² mass scaling:
/// Σ_ij (D_ij − D′_{σ(i)σ(j)})².
fn vertex_cost(d1: &Array2<f64>, d2: &Array2<f64>, sigma: &[usize]) -> f64 {
    let n = sigma.len();
    let mut total = 0.0;
    for i in 0..n {
        let si = sigma[i];
        for j in 0..n {
            let diff = d1[(i, j)] - d2[(si, sigma[j])];
            total += diff * diff;
        }
    }
    total
}

/// Best-improvement descent over transpositions of a permutation plan.
/// Returns the improved permutation and its exact unscaled cost.
///
/// Uses the auxiliary matrix S[c][x] = Σ_j (D_cj − D′_{x,σ(j)})², under which
/// swapping σ(a) and σ(b) changes the cost by
/// 2·(S[a][σ(b)] + S[b][σ(a)] − S[a][σ(a)] − S[b][σ(b)]) − 8·D_ab·D′_{σ(a)σ(b)},
/// and a swap updates S by the rank-one correction
/// S[c][x] −= 2·(D_ca − D_cb)(D′_{x,σ(b)} − D′_{x,σ(a)}).
fn transposition_descent(
    d1: &Array2<f64>,
    d2: &Array2<f64>,
    mut sigma: Vec<usize>,
) -> (Vec<usize>, f64) {
    let n = sigma.len();
    let mut cost = vertex_cost(d1, d2, &sigma);
    if n < 2 {
        return (sigma, cost);
    }

    let permuted = Array2::from_shape_fn((n, n), |(x, j)| d2[(x, sigma[j])]);
    let cross = d1.dot(&permuted.t());
    let r1: Vec<f64> = (0..n).map(|c| d1.row(c).iter().map(|v| v * v).sum()).collect();
    let r2: Vec<f64> = (0..n).map(|x| d2.row(x).iter().map(|v| v * v).sum()).collect();
    let mut s_mat = Array2::from_shape_fn((n, n), |(c, x)| r1[c] + r2[x] - 2.0 * cross[(c, x)]);

    let mut du = vec![0.0; n];
    let mut dw = vec![0.0; n];
    for _ in 0..50 * n {
        let threshold = -1e-11 * (1.0 + cost.abs());
        let mut best = threshold;
        let mut swap: Option<(usize, usize)> = None;
        for a in 0..n {
            let saa = s_mat[(a, sigma[a])];
            for b in a + 1..n {
                let delta = 2.0
                    * (s_mat[(a, sigma[b])] + s_mat[(b, sigma[a])]
                        - saa
                        - s_mat[(b, sigma[b])])
                    - 8.0 * d1[(a, b)] * d2[(sigma[a], sigma[b])];
                if delta < best {
                    best = delta;
                    swap = Some((a, b));
                }
            }
        }
        let Some((a, b)) = swap else { break };
        let (sa, sb) = (sigma[a], sigma[b]);
        for c in 0..n {
            du[c] = d1[(c, a)] - d1[(c, b)];
        }
        for x in 0..n {
            dw[x] = d2[(x, sb)] - d2[(x, sa)];
        }
        for c in 0..n {
            let f = 2.0 * du[c];
            let mut row = s_mat.row_mut(c);
            for x in 0..n {
                row[x] -= f * dw[x];
            }
        }
        sigma.swap(a, b);
        cost = vertex_cost(d1, d2, &sigma);
    }
    (sigma, cost)
}

struct RestartOutcome {
    index: usize,
    gwd: f64,
    converged: bool,
    iterations: usize,
    plan: Array2<f64>,
}

/// One Frank-Wolfe run from a random permutation vertex, plus the rounding
/// and transposition polish.
fn run_restart(
    d1: &Array2<f64>,
    d2: &Array2<f64>,
    const_terms: f64,
    config: &SolverConfig,
    index: usize,
) -> RestartOutcome {
    let n = d1.nrows();
    let inv_n = 1.0 / n as f64;
    let seed = config.base_seed.wrapping_add(index as u64);

    let mut gamma = Array2::zeros((n, n));
    for (i, &k) in random_permutation(n, seed).iter().enumerate() {
        gamma[(i, k)] = inv_n;
    }

    let mut tmp = Array2::zeros((n, n));
    let mut kernel = Array2::zeros((n, n)); // D Γ D′
    let mut cost = Array2::zeros((n, n));
    let mut dv = Array2::zeros((n, n)); // D V for the current direction V
    let mut w = Array2::zeros((n, n)); // D V D′

    let mut prev = f64::INFINITY;
    let mut obj = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_fw_iterations {
        iterations += 1;
        general_mat_mul(1.0, d1, &gamma, 0.0, &mut tmp);
        general_mat_mul(1.0, &tmp, d2, 0.0, &mut kernel);
        let gk = fdot(&gamma, &kernel);
        obj = const_terms - 2.0 * gk;
        debug_assert!(
            obj <= prev + 1e-9 * prev.abs().max(1.0),
            "objective rose from {prev} to {obj} within a restart"
        );
        if prev - obj < config.convergence_tol * prev.abs().max(1e-300) {
            converged = true;
            break;
        }
        prev = obj;

        // Direction: the vertex maximizing ⟨Γ′, K⟩, i.e. a min-cost
        // assignment on −K.
        cost.zip_mut_with(&kernel, |c, &k| *c = -k);
        let sigma = lap::solve(&cost);

        // Exact line search on Γ + t(V − Γ): the objective is
        // obj − 4t·g1 − 2t²·s with the bilinear terms below.
        let vk: f64 = sigma.iter().enumerate().map(|(i, &k)| kernel[(i, k)]).sum::<f64>() * inv_n;
        let g1 = vk - gk;
        for j in 0..n {
            let target = sigma[j];
            for i in 0..n {
                dv[(i, target)] = d1[(i, j)] * inv_n;
            }
        }
        general_mat_mul(1.0, &dv, d2, 0.0, &mut w);
        let vw: f64 = sigma.iter().enumerate().map(|(i, &k)| w[(i, k)]).sum::<f64>() * inv_n;
        let gw = fdot(&gamma, &w);
        let s = vw - vk - gw + gk;
        let t = if s < 0.0 { (-g1 / s).clamp(0.0, 1.0) } else { 1.0 };

        gamma.mapv_inplace(|v| v * (1.0 - t));
        for (i, &k) in sigma.iter().enumerate() {
            gamma[(i, k)] += t * inv_n;
        }
    }
    if !converged {
        general_mat_mul(1.0, d1, &gamma, 0.0, &mut tmp);
        general_mat_mul(1.0, &tmp, d2, 0.0, &mut kernel);
        obj = const_terms - 2.0 * fdot(&gamma, &kernel);
    }

    // Round to the heaviest vertex and polish; keep only a strict win.
    cost.zip_mut_with(&gamma, |c, &g| *c = -g);
    let rounded = lap::solve(&cost);
    let (sigma, unscaled) = transposition_descent(d1, d2, rounded);
    let vertex_obj = unscaled * inv_n * inv_n;
    if vertex_obj < obj {
        obj = vertex_obj;
        gamma.fill(0.0);
        for (i, &k) in sigma.iter().enumerate() {
            gamma[(i, k)] = inv_n;
        }
    }

    RestartOutcome {
        index,
        gwd: obj,
        converged,
        iterations,
        plan: gamma,
    }
}

#[derive(Default)]
struct BestAccumulator {
    stats: Vec<(usize, f64, bool, usize)>,
    best: Option<(f64, usize, Array2<f64>)>,
}

impl BestAccumulator {
    fn push(&mut self, outcome: RestartOutcome) {
        let better = match &self.best {
            None => true,
            Some((gwd, index, _)) => match outcome.gwd.total_cmp(gwd) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => outcome.index < *index,
                std::cmp::Ordering::Greater => false,
            },
        };
        self.stats
            .push((outcome.index, outcome.gwd, outcome.converged, outcome.iterations));
        if better {
            self.best = Some((outcome.gwd, outcome.index, outcome.plan));
        }
    }

    fn merge(mut self, mut other: BestAccumulator) -> BestAccumulator {
        self.stats.append(&mut other.stats);
        let take_other = match (&self.best, &other.best) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((g1, i1, _)), Some((g2, i2, _))) => match g2.total_cmp(g1) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => i2 < i1,
                std::cmp::Ordering::Greater => false,
            },
        };
        if take_other {
            self.best = other.best;
        }
        self
    }
}

/// Multi-restart Gromov-Wasserstein solve between two equal-size RDMs.
///
/// Restarts run in parallel; the result is nonetheless bit-deterministic for
/// a given config because each restart is seeded by `base_seed + index` and
/// ties between equal objectives go to the lowest restart index.
pub fn solve_gwot(d1: &Rdm, d2: &Rdm, config: &SolverConfig) -> Result<SolverResult> {
    let n = d1.n();
    if d2.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("cannot align {} stimuli with {}", n, d2.n()),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            what: "cannot align empty RDMs".to_string(),
        });
    }
    if config.n_restarts == 0 {
        return Err(Error::InvalidParameter {
            what: "n_restarts must be positive".to_string(),
        });
    }
    if config.max_fw_iterations == 0 {
        return Err(Error::InvalidParameter {
            what: "max_fw_iterations must be positive".to_string(),
        });
    }
    if !(config.convergence_tol > 0.0 && config.convergence_tol.is_finite()) {
        return Err(Error::InvalidParameter {
            what: format!("convergence_tol must be positive, got {}", config.convergence_tol),
        });
    }

    let d2_values = if config.histogram_match_inputs {
        histogram_match(d1, d2)?.rdm.values
    } else {
        d2.values.clone()
    };
    let d1_values = &d1.values;

    // Marginal-weighted squared-entry terms are constant across couplings
    // with uniform marginals; fold them once.
    let inv_n2 = 1.0 / (n * n) as f64;
    let const_terms = (d1_values.iter().map(|v| v * v).sum::<f64>()
        + d2_values.iter().map(|v| v * v).sum::<f64>())
        * inv_n2;

    let acc = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| run_restart(d1_values, &d2_values, const_terms, config, r))
        .fold(BestAccumulator::default, |mut acc, outcome| {
            acc.push(outcome);
            acc
        })
        .reduce(BestAccumulator::default, BestAccumulator::merge);

    let mut stats = acc.stats;
    stats.sort_unstable_by_key(|s| s.0);
    let (best_gwd, _, best_values) = acc.best.expect("at least one restart ran");
    debug_assert!(best_gwd >= -1e-9, "objective should be nonnegative, got {best_gwd}");

    let best_plan = TransportPlan::new(best_values);
    debug_assert!(best_plan.validate().is_ok());
    Ok(SolverResult {
        best_plan,
        best_gwd,
        per_restart_gwd: stats.iter().map(|s| s.1).collect(),
        converged_flags: stats.iter().map(|s| s.2).collect(),
        per_restart_iterations: stats.iter().map(|s| s.3).collect(),
    })
}

/// Exhaustive minimum of the objective over all n! permutation plans.
/// Test oracle; refuses n > 8.
pub fn brute_force_gwot(d1: &Rdm, d2: &Rdm) -> Result<(Vec<usize>, f64)> {
    let n = d1.n();
    if d2.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("cannot align {} stimuli with {}", n, d2.n()),
        });
    }
    const MAX: usize = 8;
    if n > MAX {
        return Err(Error::TooLargeForBruteForce { n, max: MAX });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            what: "cannot align empty RDMs".to_string(),
        });
    }

    let inv_n2 = 1.0 / (n * n) as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best = vertex_cost(&d1.values, &d2.values, &perm);
    // Heap's algorithm; first permutation found wins ties, so the result is
    // deterministic.
    let mut c = vec![0_usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cost = vertex_cost(&d1.values, &d2.values, &perm);
            if cost < best {
                best = cost;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best_perm, best * inv_n2))
}

#[derive(Serialize)]
struct PlanJson<'a> {
    ids_row: &'a [String],
    ids_col: &'a [String],
    /// (row index, column index, mass) for every nonzero entry.
    entries: Vec<(usize, usize, f64)>,
}

/// Writes a plan as a labeled CSV matrix (same layout as RDM CSVs).
pub fn write_plan_csv(
    path: &Path,
    plan: &TransportPlan,
    row_ids: &[String],
    col_ids: &[String],
) -> Result<()> {
    if row_ids.len() != plan.values.nrows() || col_ids.len() != plan.values.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} but got {} row ids and {} column ids",
                plan.values.nrows(),
                plan.values.ncols(),
                row_ids.len(),
                col_ids.len()
            ),
        });
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["stimulus_id".to_string()];
    header.extend(col_ids.iter().cloned());
    writer.write_record(&header)?;
    for (i, id) in row_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(plan.values.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a plan as JSON holding both id lists and the nonzero triplets.
pub fn write_plan_json(
    path: &Path,
    plan: &TransportPlan,
    row_ids: &[String],
    col_ids: &[String],
) -> Result<()> {
    if row_ids.len() != plan.values.nrows() || col_ids.len() != plan.values.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} but got {} row ids and {} column ids",
                plan.values.nrows(),
                plan.values.ncols(),
                row_ids.len(),
                col_ids.len()
            ),
        });
    }
    let entries = plan
        .values
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((i, k), &v)| (i, k, v))
        .collect();
    let doc = PlanJson {
        ids_row: row_ids,
        ids_col: col_ids,
        entries,
    };
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &doc)?;
    Ok(())
}

/// Reads a plan written by [`write_plan_csv`], returning the plan (validated,
/// with uniform marginals) and its row/column id lists.
pub fn read_plan_csv(path: &Path) -> Result<(TransportPlan, Vec<String>, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut header_iter = headers.iter();
    if header_iter.next() != Some("stimulus_id") {
        return Err(Error::Malformed {
            context: format!(
                "{}: first header cell must be \"stimulus_id\"",
                path.display()
            ),
        });
    }
    let col_ids: Vec<String> = header_iter.map(str::to_string).collect();
    let n_cols = col_ids.len();

    let mut row_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n_cols + 1 {
            return Err(Error::Malformed {
                context: format!(
                    "{} line {}: expected {} cells, got {}",
                    path.display(),
                    idx + 2,
                    n_cols + 1,
                    record.len()
                ),
            });
        }
        row_ids.push(record.get(0).unwrap_or("").to_string());
        let row: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.parse().map_err(|_| Error::Malformed {
                    context: format!(
                        "{} line {}: unparseable mass {cell:?}",
                        path.display(),
                        idx + 2
                    ),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let n_rows = rows.len();
    let mut values = Array2::zeros((n_rows, n_cols));
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            values[(i, k)] = v;
        }
    }
    let plan = TransportPlan::new(values);
    plan.validate()?;
    Ok((plan, row_ids, col_ids))
}

#[derive(Serialize)]
struct SolverLogLine {
    restart: usize,
    gwd: f64,
    iterations: usize,
    converged: bool,
}

/// Appends one JSON line per restart: index, final objective, iteration
/// count, and convergence flag.
pub fn write_solver_log(path: &Path, result: &SolverResult) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    for (r, gwd) in result.per_restart_gwd.iter().enumerate() {
        let line = SolverLogLine {
            restart: r,
            gwd: *gwd,
            iterations: result.per_restart_iterations[r],
            converged: result.converged_flags[r],
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
