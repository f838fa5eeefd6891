//! Dissimilarity structure: building RDMs from rating matrices and equalizing
//! two RDMs' value distributions by histogram matching.
//!
//! An RDM (representational dissimilarity matrix) holds `D_ij = 1 − cos(r_i,
//! r_j)` for rating vectors `r_i`, `r_j`. For nonnegative ratings the cosine
//! is in `[0, 1]`, so entries live in `[0, 1]`; in general cosine
//! dissimilarity is bounded by 2. Histogram matching rewrites one RDM's
//! entries so its value distribution equals the other's while preserving its
//! own rank order — the monotone (rank-wise) rearrangement, which is the
//! Wasserstein-1-minimal way to equalize the two marginals.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RatingMatrix;

// --- domain types -----------------------------------------------------------

/// Symmetric stimulus-by-stimulus dissimilarity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    pub stimulus_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl Rdm {
    /// Wraps a matrix after checking the RDM invariants: square shape
    /// matching the id list, exact symmetry, literal-zero diagonal, and
    /// finite nonnegative entries.
    pub fn new(stimulus_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let rdm = Rdm {
            stimulus_ids,
            values,
        };
        rdm.validate()?;
        Ok(rdm)
    }

    pub fn n(&self) -> usize {
        self.stimulus_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stimulus_ids.len();
        if self.values.nrows() != n || self.values.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "RDM is {}x{} but has {} stimulus ids",
                    self.values.nrows(),
                    self.values.ncols(),
                    n
                ),
            });
        }
        for i in 0..n {
            if self.values[(i, i)] != 0.0 {
                return Err(Error::Malformed {
                    context: format!(
                        "RDM diagonal entry {} is {}, expected 0",
                        i,
                        self.values[(i, i)]
                    ),
                });
            }
            for j in (i + 1)..n {
                let (a, b) = (self.values[(i, j)], self.values[(j, i)]);
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::Malformed {
                        context: format!("RDM entry ({i}, {j}) is {a}"),
                    });
                }
                if a != b {
                    return Err(Error::Malformed {
                        context: format!("RDM asymmetric at ({i}, {j}): {a} vs {b}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The strictly-upper-triangular entries of an RDM in row-major order;
/// length is n(n−1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangleVector {
    pub values: Vec<f64>,
}

impl UpperTriangleVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Triangle length for an n-stimulus RDM.
    pub fn expected_len(n: usize) -> usize {
        n * (n - 1) / 2
    }
}

/// Dissimilarity metric hook. Only cosine is implemented and tested; the enum
/// exists so a different metric is a new variant, not a new code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dissimilarity {
    Cosine,
}

impl std::fmt::Display for Dissimilarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dissimilarity::Cosine => write!(f, "cosine"),
        }
    }
}

/// Result of [`histogram_match`]: the rewritten RDM plus whether the
/// quantile-interpolation fallback (unequal triangle lengths) was taken.
#[derive(Debug, Clone)]
pub struct MatchedRdm {
    pub rdm: Rdm,
    pub interpolated: bool,
}

// --- operations --------------------------------------------------------------

/// Builds the cosine-dissimilarity RDM of a rating matrix.
///
/// `D_ij = 1 − (r_i · r_j) / (‖r_i‖ ‖r_j‖)`, computed via one Gram-matrix
/// product. The diagonal is set to literal 0, tiny negative off-diagonal
/// artifacts (identical vectors under roundoff) are clamped to 0, and the
/// upper triangle is mirrored so symmetry is exact by construction.
pub fn build_rdm(matrix: &RatingMatrix) -> Result<Rdm> {
    build_rdm_with(matrix, Dissimilarity::Cosine)
}

/// [`build_rdm`] with an explicit metric choice.
pub fn build_rdm_with(matrix: &RatingMatrix, metric: Dissimilarity) -> Result<Rdm> {
    let Dissimilarity::Cosine = metric;

    let zero_rows: Vec<String> = matrix
        .stimulus_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| matrix.values.row(*i).iter().all(|&v| v == 0.0))
        .map(|(_, id)| id.clone())
        .collect();
    if !zero_rows.is_empty() {
        return Err(Error::ZeroRows {
            stimulus_ids: zero_rows,
        });
    }

    let n = matrix.n_stimuli();
    let gram = matrix.values.dot(&matrix.values.t());
    let norms: Vec<f64> = (0..n).map(|i| gram[(i, i)].sqrt()).collect();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (1.0 - gram[(i, j)] / (norms[i] * norms[j])).max(0.0);
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    Rdm::new(matrix.stimulus_ids.clone(), values)
}

/// Removes stimuli whose entire rating row is zero (cosine-undefined) and
/// reports which ids were dropped.
pub fn drop_zero_rows(matrix: &RatingMatrix) -> (RatingMatrix, Vec<String>) {
    let keep: Vec<usize> = (0..matrix.n_stimuli())
        .filter(|&i| matrix.values.row(i).iter().any(|&v| v != 0.0))
        .collect();
    let dropped: Vec<String> = (0..matrix.n_stimuli())
        .filter(|i| !keep.contains(i))
        .map(|i| matrix.stimulus_ids[i].clone())
        .collect();
    let mut values = Array2::zeros((keep.len(), matrix.n_categories()));
    for (row, &i) in keep.iter().enumerate() {
        values.row_mut(row).assign(&matrix.values.row(i));
    }
    let kept = RatingMatrix {
        stimulus_ids: keep
            .iter()
            .map(|&i| matrix.stimulus_ids[i].clone())
            .collect(),
        category_names: matrix.category_names.clone(),
        values,
        scale: matrix.scale,
    };
    (kept, dropped)
}

/// Extracts the strictly-upper triangle, row-major.
pub fn upper_triangle(rdm: &Rdm) -> UpperTriangleVector {
    let n = rdm.n();
    let mut values = Vec::with_capacity(UpperTriangleVector::expected_len(n));
    for i in 0..n {
        for j in (i + 1)..n {
            values.push(rdm.values[(i, j)]);
        }
    }
    UpperTriangleVector { values }
}

/// Rebuilds a symmetric zero-diagonal RDM from an upper triangle.
fn from_upper_triangle(stimulus_ids: Vec<String>, n: usize, upper: &[f64]) -> Result<Rdm> {
    let mut values = Array2::zeros((n, n));
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            values[(i, j)] = upper[idx];
            values[(j, i)] = upper[idx];
            idx += 1;
        }
    }
    Rdm::new(stimulus_ids, values)
}

/// Rewrites `target`'s entries with `source`'s value distribution, keeping
/// `target`'s own rank order.
///
/// With equal triangle lengths this is an exact rank replacement: the r-th
/// largest target entry takes the value of the r-th largest source entry
/// (ties broken stably by position). With unequal lengths each target entry
/// maps through its empirical quantile into the source's linearly
/// interpolated quantile function, and the result is flagged `interpolated`.
pub fn histogram_match(source: &Rdm, target: &Rdm) -> Result<MatchedRdm> {
    let u = upper_triangle(source).values;
    let v = upper_triangle(target).values;
    let (big_l, big_l_prime) = (u.len(), v.len());

    // Pair each entry with its position, sort descending by value; stable
    // order makes tie handling deterministic.
    let mut target_order: Vec<usize> = (0..big_l_prime).collect();
    target_order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));

    let mut out = vec![0.0; big_l_prime];
    if big_l == big_l_prime {
        let mut source_sorted = u.clone();
        source_sorted.sort_by(|a, b| b.total_cmp(a));
        for (rank, &pos) in target_order.iter().enumerate() {
            out[pos] = source_sorted[rank];
        }
    } else {
        let mut source_sorted = u.clone();
        source_sorted.sort_by(f64::total_cmp);
        for (rank_desc, &pos) in target_order.iter().enumerate() {
            // Ascending rank → quantile in [0, 1]; a single entry sits at the
            // median.
            let q = if big_l_prime == 1 {
                0.5
            } else {
                (big_l_prime - 1 - rank_desc) as f64 / (big_l_prime - 1) as f64
            };
            let t = q * (big_l - 1) as f64;
            let lo = t.floor() as usize;
            let hi = (lo + 1).min(big_l - 1);
            let frac = t - lo as f64;
            out[pos] = source_sorted[lo] + frac * (source_sorted[hi] - source_sorted[lo]);
        }
    }

    Ok(MatchedRdm {
        rdm: from_upper_triangle(target.stimulus_ids.clone(), target.n(), &out)?,
        interpolated: big_l != big_l_prime,
    })
}

// --- file formats -------------------------------------------------------------

/// Writes an RDM as a square CSV: header `stimulus_id,<ids...>`, one labeled
/// row per stimulus. Shortest-round-trip number formatting makes write → read
/// bit-exact.
pub fn write_rdm_csv(path: &Path, rdm: &Rdm) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["stimulus_id".to_string()];
    header.extend(rdm.stimulus_ids.iter().cloned());
    writer.write_record(&header)?;
    for (i, id) in rdm.stimulus_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(rdm.values.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an RDM written by [`write_rdm_csv`], re-validating all invariants.
pub fn read_rdm_csv(path: &Path) -> Result<Rdm> {
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
    let stimulus_ids: Vec<String> = header_iter.map(str::to_string).collect();
    let n = stimulus_ids.len();

    let mut values = Array2::zeros((n, n));
    let mut row_count = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if row_count >= n || record.len() != n + 1 {
            return Err(Error::Malformed {
                context: format!("{}:{}: ragged RDM row", path.display(), line),
            });
        }
        if &record[0] != stimulus_ids[row_count].as_str() {
            return Err(Error::Malformed {
                context: format!(
                    "{}:{}: row label {:?} does not match header order",
                    path.display(),
                    line,
                    &record[0]
                ),
            });
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            values[(row_count, j)] = field.trim().parse().map_err(|_| Error::Malformed {
                context: format!("{}:{}: unparseable number {:?}", path.display(), line, field),
            })?;
        }
        row_count += 1;
    }
    if row_count != n {
        return Err(Error::Malformed {
            context: format!(
                "{}: expected {} rows, got {}",
                path.display(),
                n,
                row_count
            ),
        });
    }
    Rdm::new(stimulus_ids, values)
}

#[derive(Serialize, Deserialize)]
struct RdmJson {
    ids: Vec<String>,
    /// Row-major n×n values.
    values: Vec<f64>,
}

/// Writes the compact JSON form `{ids, row-major values}`.
pub fn write_rdm_json(path: &Path, rdm: &Rdm) -> Result<()> {
    let doc = RdmJson {
        ids: rdm.stimulus_ids.clone(),
        values: rdm.values.iter().copied().collect(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, &doc)?;
    Ok(())
}

/// Reads the JSON form written by [`write_rdm_json`].
pub fn read_rdm_json(path: &Path) -> Result<Rdm> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let doc: RdmJson = serde_json::from_reader(file)?;
    let n = doc.ids.len();
    let values = Array2::from_shape_vec((n, n), doc.values).map_err(|e| Error::Malformed {
        context: format!("{}: {}", path.display(), e),
    })?;
    Rdm::new(doc.ids, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn matrix(rows: Vec<Vec<f64>>, scale: f64) -> RatingMatrix {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        RatingMatrix::new(
            (0..n).map(|i| format!("v{i}")).collect(),
            (0..d).map(|j| format!("c{j}")).collect(),
            Array2::from_shape_vec((n, d), flat).unwrap(),
            scale,
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_have_zero_dissimilarity() {
        let m = matrix(vec![vec![1.0, 0.0], vec![1.0, 0.0]], 1.0);
        let rdm = build_rdm(&m).unwrap();
        assert_eq!(rdm.values[(0, 1)], 0.0);
    }

    #[test]
    fn orthogonal_rows_have_unit_dissimilarity() {
        let m = matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        let rdm = build_rdm(&m).unwrap();
        assert_eq!(rdm.values[(0, 1)], 1.0);
    }

    #[test]
    fn rdm_matches_direct_oracle() {
        let m = matrix(
            vec![
                vec![0.3, 2.1, 0.0, 1.0],
                vec![1.9, 0.2, 3.3, 0.4],
                vec![0.5, 0.5, 0.5, 0.5],
                vec![2.0, 0.0, 0.1, 0.0],
                vec![0.7, 1.4, 2.8, 5.6],
                vec![4.2, 0.2, 0.9, 1.1],
            ],
            10.0,
        );
        let rdm = build_rdm(&m).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let ri = m.values.row(i);
                let rj = m.values.row(j);
                let dot: f64 = ri.iter().zip(rj.iter()).map(|(a, b)| a * b).sum();
                let ni: f64 = ri.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nj: f64 = rj.iter().map(|a| a * a).sum::<f64>().sqrt();
                let expect = if i == j { 0.0 } else { 1.0 - dot / (ni * nj) };
                assert_abs_diff_eq!(rdm.values[(i, j)], expect.max(0.0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_row_error_names_the_stimuli() {
        let m = matrix(vec![vec![1.0, 0.0], vec![0.0, 0.0]], 1.0);
        match build_rdm(&m) {
            Err(Error::ZeroRows { stimulus_ids }) => assert_eq!(stimulus_ids, vec!["v1"]),
            other => panic!("expected ZeroRows, got {other:?}"),
        }
    }

    #[test]
    fn drop_zero_rows_cases() {
        let m = matrix(vec![vec![1.0], vec![0.0], vec![2.0]], 10.0);
        let (kept, dropped) = drop_zero_rows(&m);
        assert_eq!(kept.stimulus_ids, vec!["v0", "v2"]);
        assert_eq!(dropped, vec!["v1"]);

        let m = matrix(vec![vec![1.0], vec![2.0]], 10.0);
        let (kept, dropped) = drop_zero_rows(&m);
        assert_eq!(kept, m);
        assert!(dropped.is_empty());

        let m = matrix(vec![vec![0.0], vec![0.0]], 10.0);
        let (kept, dropped) = drop_zero_rows(&m);
        assert_eq!(kept.n_stimuli(), 0);
        assert_eq!(dropped, vec!["v0", "v1"]);
    }

    #[test]
    fn upper_triangle_row_major() {
        let rdm = Rdm::new(
            vec!["a".into(), "b".into(), "c".into()],
            array![[0.0, 0.1, 0.2], [0.1, 0.0, 0.3], [0.2, 0.3, 0.0]],
        )
        .unwrap();
        assert_eq!(upper_triangle(&rdm).values, vec![0.1, 0.2, 0.3]);
        assert_eq!(UpperTriangleVector::expected_len(550), 150_975);
    }

    fn rdm_from_upper(n: usize, upper: &[f64]) -> Rdm {
        from_upper_triangle((0..n).map(|i| format!("s{i}")).collect(), n, upper).unwrap()
    }

    #[test]
    fn histogram_match_rank_rewrite_example() {
        let source = rdm_from_upper(3, &[0.9, 0.5, 0.1]);
        let target = rdm_from_upper(3, &[0.8, 0.7, 0.2]);
        let matched = histogram_match(&source, &target).unwrap();
        assert_eq!(upper_triangle(&matched.rdm).values, vec![0.9, 0.5, 0.1]);
        assert!(!matched.interpolated);
    }

    #[test]
    fn histogram_match_is_fixed_point_on_self() {
        let upper: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let rdm = rdm_from_upper(5, &upper);
        let matched = histogram_match(&rdm, &rdm).unwrap();
        assert_eq!(matched.rdm.values, rdm.values);
    }

    #[test]
    fn histogram_match_preserves_multiset_and_ranks() {
        // Random-ish 10x10 pair via a fixed recurrence.
        let mut x = 0.123_f64;
        let mut next = || {
            x = (x * 7.13 + 0.317).fract();
            x
        };
        let src_u: Vec<f64> = (0..45).map(|_| next()).collect();
        let tgt_u: Vec<f64> = (0..45).map(|_| next()).collect();
        let source = rdm_from_upper(10, &src_u);
        let target = rdm_from_upper(10, &tgt_u);
        let matched = histogram_match(&source, &target).unwrap();
        let out_u = upper_triangle(&matched.rdm).values;

        let mut sorted_out = out_u.clone();
        let mut sorted_src = src_u.clone();
        sorted_out.sort_by(f64::total_cmp);
        sorted_src.sort_by(f64::total_cmp);
        assert_eq!(sorted_out, sorted_src, "multiset must equal the source's");

        let rank = |v: &[f64]| {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            order
        };
        assert_eq!(rank(&out_u), rank(&tgt_u), "target rank order must survive");
    }

    #[test]
    fn histogram_match_interpolates_on_unequal_sizes() {
        let source = rdm_from_upper(4, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let target = rdm_from_upper(3, &[0.9, 0.1, 0.5]);
        let matched = histogram_match(&source, &target).unwrap();
        assert!(matched.interpolated);
        let out = upper_triangle(&matched.rdm).values;
        // Quantiles 1, 0, 0.5 of the source ladder.
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], 0.5, epsilon = 1e-12);
        // Rank order of the target is intact.
        assert!(out[1] < out[2] && out[2] < out[0]);
    }

    #[test]
    fn rdm_csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rdm.csv");
        let upper: Vec<f64> = (0..15).map(|i| ((i as f64) * 0.618).fract()).collect();
        let rdm = rdm_from_upper(6, &upper);
        write_rdm_csv(&path, &rdm).unwrap();
        assert_eq!(read_rdm_csv(&path).unwrap(), rdm);
    }

    #[test]
    fn rdm_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rdm.json");
        let rdm = rdm_from_upper(4, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        write_rdm_json(&path, &rdm).unwrap();
        assert_eq!(read_rdm_json(&path).unwrap(), rdm);
    }

    #[test]
    fn validation_rejects_asymmetry_and_nonzero_diagonal() {
        let bad = Rdm::new(
            vec!["a".into(), "b".into()],
            array![[0.0, 0.1], [0.2, 0.0]],
        );
        assert!(matches!(bad, Err(Error::Malformed { .. })));
        let bad = Rdm::new(vec!["a".into(), "b".into()], array![[0.5, 0.1], [0.1, 0.0]]);
        assert!(matches!(bad, Err(Error::Malformed { .. })));
    }
}
