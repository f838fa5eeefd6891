//! Shuffled-ratings control model: severs the stimulus↔rating pairing by
//! permuting whole rating rows, evaluates any metric against many shuffled
//! copies, and reports 95% percentile intervals of the resulting null
//! distribution.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::select_top_k;
use crate::ingest::RatingMatrix;
use crate::rsa::per_stimulus_correlations;

/// Null distribution of one metric with its 95% percentile interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSummary {
    pub metric_name: String,
    /// Metric values in shuffle-index order.
    pub samples: Vec<f64>,
    /// (2.5th, 97.5th) linear-interpolated percentiles of `samples`.
    pub interval_95: (f64, f64),
    pub n_shuffles: usize,
}

/// Linear-interpolated empirical percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Wraps already-computed null samples into a summary with its interval.
pub fn summarize_null(metric_name: &str, samples: Vec<f64>) -> Result<NullSummary> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples {
            context: "null distribution",
            needed: 1,
            got: 0,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "null distribution sample".to_string(),
        });
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let interval_95 = (percentile(&sorted, 2.5), percentile(&sorted, 97.5));
    Ok(NullSummary {
        metric_name: metric_name.to_string(),
        n_shuffles: samples.len(),
        samples,
        interval_95,
    })
}

/// Permutes whole rating rows by a seeded uniform permutation while the
/// stimulus ids keep their original order, severing each stimulus's pairing
/// with its own ratings.
pub fn shuffle_ratings(matrix: &RatingMatrix, seed: u64) -> RatingMatrix {
    let n = matrix.n_stimuli();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut values = matrix.values.clone();
    for (i, &src) in perm.iter().enumerate() {
        values.row_mut(i).assign(&matrix.values.row(src));
    }
    RatingMatrix {
        stimulus_ids: matrix.stimulus_ids.clone(),
        category_names: matrix.category_names.clone(),
        values,
        scale: matrix.scale,
    }
}

/// Sensitivity-analysis variant: permutes each rating column independently,
/// destroying row vectors entirely. Not the default null.
pub fn shuffle_ratings_per_column(matrix: &RatingMatrix, seed: u64) -> RatingMatrix {
    let n = matrix.n_stimuli();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = matrix.values.clone();
    for c in 0..matrix.n_categories() {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (i, &src) in perm.iter().enumerate() {
            values[(i, c)] = matrix.values[(src, c)];
        }
    }
    RatingMatrix {
        stimulus_ids: matrix.stimulus_ids.clone(),
        category_names: matrix.category_names.clone(),
        values,
        scale: matrix.scale,
    }
}

/// Evaluates `metric(reference, shuffled copy of matrix)` across `n_shuffles`
/// seeded shuffles (seed = base_seed + index) and summarizes the samples.
/// Shuffles run in parallel; sample order and any error reported are fixed by
/// shuffle index, so results are reproducible.
pub fn null_distribution<F>(
    metric_name: &str,
    metric: F,
    matrix: &RatingMatrix,
    reference: &RatingMatrix,
    n_shuffles: usize,
    base_seed: u64,
) -> Result<NullSummary>
where
    F: Fn(&RatingMatrix, &RatingMatrix) -> Result<f64> + Sync,
{
    if n_shuffles == 0 {
        return Err(Error::InvalidParameter {
            what: "n_shuffles must be positive".to_string(),
        });
    }
    let mut outcomes: Vec<(usize, Result<f64>)> = (0..n_shuffles)
        .into_par_iter()
        .map(|s| {
            let shuffled = shuffle_ratings(matrix, base_seed.wrapping_add(s as u64));
            (s, metric(reference, &shuffled))
        })
        .collect();
    outcomes.sort_unstable_by_key(|(s, _)| *s);

    let mut samples = Vec::with_capacity(n_shuffles);
    for (index, outcome) in outcomes {
        match outcome {
            Ok(v) => samples.push(v),
            Err(e) => {
                return Err(Error::NullShuffle {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    summarize_null(metric_name, samples)
}

/// Fair top-k selection under the null: ranks stimuli by the correlation of
/// their shuffled ratings against the original ratings, so each shuffle gets
/// its own selected subset.
pub fn null_top_k_selection(
    shuffled: &RatingMatrix,
    original: &RatingMatrix,
    k: usize,
) -> Result<Vec<String>> {
    let correlations = per_stimulus_correlations(shuffled, original)?;
    select_top_k(&correlations, k)
}

/// Writes {metric, n_shuffles, samples[], lo, hi} as JSON.
pub fn write_null_json(path: &Path, summary: &NullSummary) -> Result<()> {
    #[derive(Serialize)]
    struct NullJson<'a> {
        metric: &'a str,
        n_shuffles: usize,
        samples: &'a [f64],
        lo: f64,
        hi: f64,
    }
    let doc = NullJson {
        metric: &summary.metric_name,
        n_shuffles: summary.n_shuffles,
        samples: &summary.samples,
        lo: summary.interval_95.0,
        hi: summary.interval_95.1,
    };
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &doc)?;
    Ok(())
}

/// Writes `shuffle,value` rows for external plotting.
pub fn write_null_samples_csv(path: &Path, summary: &NullSummary) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["shuffle", "value"])?;
    for (s, v) in summary.samples.iter().enumerate() {
        writer.write_record([s.to_string(), v.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> RatingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RatingMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..d).map(|c| format!("c{c}")).collect(),
            Array2::from_shape_fn((n, d), |_| rng.gen_range(0.0..9.0)),
            9.0,
        )
        .unwrap()
    }

    fn sorted_rows(matrix: &RatingMatrix) -> Vec<Vec<u64>> {
        let mut rows: Vec<Vec<u64>> = (0..matrix.n_stimuli())
            .map(|i| matrix.values.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows
    }

    #[test]
    fn shuffle_is_deterministic_and_keeps_ids_in_place() {
        let matrix = random_matrix(10, 4, 1);
        let a = shuffle_ratings(&matrix, 7);
        let b = shuffle_ratings(&matrix, 7);
        assert_eq!(a.values, b.values);
        assert_eq!(a.stimulus_ids, matrix.stimulus_ids);
        assert_ne!(
            shuffle_ratings(&matrix, 8).values,
            a.values,
            "different seeds should give different row orders"
        );
    }

    #[test]
    fn shuffle_preserves_the_multiset_of_rows() {
        let matrix = random_matrix(25, 6, 2);
        let shuffled = shuffle_ratings(&matrix, 99);
        assert_eq!(sorted_rows(&matrix), sorted_rows(&shuffled));
    }

    #[test]
    fn two_rows_either_stay_or_swap() {
        let matrix = random_matrix(2, 3, 3);
        let mut saw_identity = false;
        let mut saw_swap = false;
        for seed in 0..40 {
            let shuffled = shuffle_ratings(&matrix, seed);
            if shuffled.values == matrix.values {
                saw_identity = true;
            } else {
                assert_eq!(shuffled.values.row(0), matrix.values.row(1));
                assert_eq!(shuffled.values.row(1), matrix.values.row(0));
                saw_swap = true;
            }
        }
        assert!(saw_identity && saw_swap);
    }

    #[test]
    fn per_column_shuffle_preserves_column_multisets_only() {
        let matrix = random_matrix(30, 5, 4);
        let shuffled = shuffle_ratings_per_column(&matrix, 11);
        for c in 0..5 {
            let mut original: Vec<u64> =
                matrix.values.column(c).iter().map(|v| v.to_bits()).collect();
            let mut permuted: Vec<u64> =
                shuffled.values.column(c).iter().map(|v| v.to_bits()).collect();
            original.sort();
            permuted.sort();
            assert_eq!(original, permuted, "column {c} multiset changed");
        }
        assert_ne!(
            sorted_rows(&matrix),
            sorted_rows(&shuffled),
            "independent column permutations should break row vectors"
        );
    }

    #[test]
    fn percentiles_interpolate_linearly() {
        assert_eq!(percentile(&[4.2], 2.5), 4.2);
        assert_eq!(percentile(&[4.2], 97.5), 4.2);
        let sorted = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(percentile(&sorted, 2.5), 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(percentile(&sorted, 97.5), 4.9, epsilon = 1e-12);
        assert_abs_diff_eq!(percentile(&sorted, 50.0), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_shuffle_interval_degenerates_to_the_sample() {
        let matrix = random_matrix(8, 4, 5);
        let summary = null_distribution(
            "mean_r",
            |reference, shuffled| Ok(per_stimulus_correlations(reference, shuffled)?.mean_r),
            &matrix,
            &matrix,
            1,
            123,
        )
        .unwrap();
        assert_eq!(summary.n_shuffles, 1);
        assert_eq!(summary.samples.len(), 1);
        assert_eq!(summary.interval_95.0, summary.samples[0]);
        assert_eq!(summary.interval_95.1, summary.samples[0]);
    }

    #[test]
    fn null_distribution_is_reproducible_and_centered_near_zero() {
        let matrix = random_matrix(60, 10, 6);
        let run = || {
            null_distribution(
                "mean_r",
                |reference, shuffled| Ok(per_stimulus_correlations(reference, shuffled)?.mean_r),
                &matrix,
                &matrix,
                50,
                1000,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.samples, b.samples, "same seeds must give identical samples");
        assert!(a.interval_95.0 <= a.interval_95.1);
        let mean = a.samples.iter().sum::<f64>() / a.samples.len() as f64;
        assert!(mean.abs() < 0.2, "null mean {mean} too far from 0");
    }

    #[test]
    fn metric_failures_carry_the_shuffle_index() {
        let matrix = random_matrix(6, 3, 7);
        let err = null_distribution(
            "always_fails",
            |_, _| {
                Err(Error::ConstantInput {
                    which: "first".to_string(),
                })
            },
            &matrix,
            &matrix,
            4,
            0,
        )
        .unwrap_err();
        match err {
            Error::NullShuffle { index, source } => {
                assert_eq!(index, 0, "lowest failing index must be reported");
                assert!(matches!(*source, Error::ConstantInput { .. }));
            }
            other => panic!("expected a shuffle-wrapped error, got {other:?}"),
        }
    }

    #[test]
    fn null_top_k_full_set_matches_a_sort_oracle() {
        let original = random_matrix(12, 6, 8);
        let shuffled = shuffle_ratings(&original, 42);
        let selected = null_top_k_selection(&shuffled, &original, 12).unwrap();
        // Oracle: rank ids by correlation computed independently.
        let correlations = per_stimulus_correlations(&shuffled, &original).unwrap();
        let mut oracle: Vec<(usize, f64)> = correlations
            .r_values
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.unwrap()))
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1));
        let oracle_ids: Vec<String> = oracle
            .iter()
            .map(|(i, _)| original.stimulus_ids[*i].clone())
            .collect();
        assert_eq!(selected, oracle_ids);
        assert_eq!(selected.len(), 12);

        let top3 = null_top_k_selection(&shuffled, &original, 3).unwrap();
        assert_eq!(&selected[..3], &top3[..]);
    }

    #[test]
    fn different_shuffles_select_different_top_sets() {
        let original = random_matrix(40, 8, 9);
        let first = null_top_k_selection(&shuffle_ratings(&original, 1), &original, 5).unwrap();
        let second = null_top_k_selection(&shuffle_ratings(&original, 2), &original, 5).unwrap();
        assert_ne!(first, second, "independent shuffles should re-rank stimuli");
    }

    #[test]
    fn null_files_serialize_the_summary() {
        let summary = summarize_null("demo", vec![0.3, 0.1, 0.2]).unwrap();
        assert_eq!(summary.n_shuffles, 3);
        assert_eq!(summary.samples, vec![0.3, 0.1, 0.2], "sample order is by shuffle");
        let dir = tempfile::tempdir().unwrap();

        let json_path = dir.path().join("null.json");
        write_null_json(&json_path, &summary).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(doc["metric"].as_str().unwrap(), "demo");
        assert_eq!(doc["n_shuffles"].as_u64().unwrap(), 3);
        assert_eq!(doc["samples"].as_array().unwrap().len(), 3);
        assert!(doc["lo"].as_f64().unwrap() <= doc["hi"].as_f64().unwrap());

        let csv_path = dir.path().join("null.csv");
        write_null_samples_csv(&csv_path, &summary).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("shuffle,value"));
    }

    #[test]
    fn rdm_correlation_null_straddles_zero() {
        // Small-scale version of the centering property: correlation between
        // a structure and its row-shuffled self should be near zero on
        // average, with an interval containing 0.
        let matrix = random_matrix(50, 12, 10);
        let reference_rdm = crate::structure::build_rdm(&matrix).unwrap();
        let summary = null_distribution(
            "rdm_correlation",
            |_, shuffled| {
                let shuffled_rdm = crate::structure::build_rdm(shuffled)?;
                rsa::rdm_correlation(&reference_rdm, &shuffled_rdm)
            },
            &matrix,
            &matrix,
            60,
            500,
        )
        .unwrap();
        assert!(
            summary.interval_95.0 <= 0.0 && 0.0 <= summary.interval_95.1,
            "null interval {:?} should contain 0",
            summary.interval_95
        );
    }
}
