//! Supervised structure comparison: Pearson correlations per stimulus and
//! between RDM upper triangles, plus Cohen's d effect sizes against null
//! samples.
//!
//! These routes assume the stimulus correspondence is known (row i of one
//! matrix describes the same stimulus as row i of the other) — the
//! counterpart to the unsupervised alignment in [`crate::gwot`].

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::RatingMatrix;
use crate::structure::{upper_triangle, Rdm};

/// Row-wise Pearson correlations between two rating matrices, one per
/// stimulus; rows where either side is constant are flagged undefined.
#[derive(Debug, Clone)]
pub struct PerStimulusCorrelations {
    pub stimulus_ids: Vec<String>,
    /// One entry per stimulus; `None` marks an undefined (constant-input) row.
    pub r_values: Vec<Option<f64>>,
    /// Unweighted mean over the defined entries; `None` if every row was
    /// undefined.
    pub mean_r: f64,
    pub n_undefined: usize,
}

impl PerStimulusCorrelations {
    pub fn n_defined(&self) -> usize {
        self.r_values.len() - self.n_undefined
    }

    /// Derives the summary fields from raw per-stimulus values: mean over the
    /// defined entries summed in order, NaN when every entry is undefined.
    pub fn from_parts(stimulus_ids: Vec<String>, r_values: Vec<Option<f64>>) -> Self {
        let mut sum = 0.0;
        let mut n_defined = 0usize;
        for r in r_values.iter().flatten() {
            sum += r;
            n_defined += 1;
        }
        let n_undefined = r_values.len() - n_defined;
        PerStimulusCorrelations {
            stimulus_ids,
            r_values,
            mean_r: if n_defined > 0 {
                sum / n_defined as f64
            } else {
                f64::NAN
            },
            n_undefined,
        }
    }
}

/// Sample Pearson correlation coefficient.
///
/// Two-pass computation: means first, then centered moments; deterministic
/// left-to-right summation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: format!("pearson inputs have lengths {} and {}", x.len(), y.len()),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples {
            context: "pearson",
            needed: 2,
            got: x.len(),
        });
    }
    let x_constant = x.iter().all(|&v| v == x[0]);
    let y_constant = y.iter().all(|&v| v == y[0]);
    if x_constant || y_constant {
        let which = match (x_constant, y_constant) {
            (true, true) => "both",
            (true, false) => "first",
            _ => "second",
        };
        return Err(Error::ConstantInput {
            which: which.to_string(),
        });
    }

    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mean_x, b - mean_y);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Correlates each stimulus's rating vector across the two matrices.
///
/// Requires identical stimulus and category labeling in identical order.
/// Constant rows yield `None` rather than an error — one flat stimulus must
/// not abort a 550-stimulus analysis — and are excluded from `mean_r`.
pub fn per_stimulus_correlations(
    a: &RatingMatrix,
    b: &RatingMatrix,
) -> Result<PerStimulusCorrelations> {
    if a.stimulus_ids != b.stimulus_ids {
        return Err(Error::DimensionMismatch {
            context: "per-stimulus correlation requires identical stimulus ids in identical order"
                .to_string(),
        });
    }
    if a.category_names != b.category_names {
        return Err(Error::DimensionMismatch {
            context: "per-stimulus correlation requires identical category names in identical order"
                .to_string(),
        });
    }

    let mut r_values = Vec::with_capacity(a.n_stimuli());
    for i in 0..a.n_stimuli() {
        let row_a = a.values.row(i);
        let row_b = b.values.row(i);
        match pearson(row_a.as_slice().unwrap(), row_b.as_slice().unwrap()) {
            Ok(r) => r_values.push(Some(r)),
            Err(Error::ConstantInput { .. }) => r_values.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(PerStimulusCorrelations::from_parts(
        a.stimulus_ids.clone(),
        r_values,
    ))
}

/// Pearson correlation between two RDMs' strictly-upper triangles.
pub fn rdm_correlation(d1: &Rdm, d2: &Rdm) -> Result<f64> {
    if d1.n() != d2.n() {
        return Err(Error::DimensionMismatch {
            context: format!("RDM sizes differ: {} vs {}", d1.n(), d2.n()),
        });
    }
    pearson(&upper_triangle(d1).values, &upper_triangle(d2).values)
}

/// Two-sample Cohen's d with the pooled standard deviation:
/// `(mean_a − mean_b) / sqrt(((n_a−1)s_a² + (n_b−1)s_b²) / (n_a+n_b−2))`.
pub fn cohens_d(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    for s in [sample_a, sample_b] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples {
                context: "cohens_d",
                needed: 2,
                got: s.len(),
            });
        }
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], m: f64| {
        s.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (s.len() - 1) as f64
    };
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let (va, vb) = (var(sample_a, ma), var(sample_b, mb));
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(Error::ConstantInput {
            which: "pooled".to_string(),
        });
    }
    Ok((ma - mb) / pooled)
}

// --- file formats -------------------------------------------------------------

/// Writes one `stimulus_id,r` row per stimulus; undefined correlations become
/// an empty cell.
pub fn write_per_stimulus_csv(
    path: &Path,
    correlations: &PerStimulusCorrelations,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["stimulus_id", "r"])?;
    for (id, r) in correlations
        .stimulus_ids
        .iter()
        .zip(&correlations.r_values)
    {
        let cell = r.map(|v| v.to_string()).unwrap_or_default();
        writer.write_record([id.as_str(), cell.as_str()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a file written by [`write_per_stimulus_csv`], rebuilding the summary
/// fields from the parsed values.
pub fn read_per_stimulus_csv(path: &Path) -> Result<PerStimulusCorrelations> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["stimulus_id", "r"] {
        return Err(Error::Malformed {
            context: format!("{}: expected header stimulus_id,r", path.display()),
        });
    }
    let mut stimulus_ids = Vec::new();
    let mut r_values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let cell = record.get(1).unwrap_or("");
        let r = if cell.is_empty() {
            None
        } else {
            Some(cell.parse::<f64>().map_err(|_| Error::Malformed {
                context: format!(
                    "{} line {}: unparseable correlation {cell:?}",
                    path.display(),
                    idx + 2
                ),
            })?)
        };
        stimulus_ids.push(id);
        r_values.push(r);
    }
    Ok(PerStimulusCorrelations::from_parts(stimulus_ids, r_values))
}

/// Writes the `{mean_r, n_defined, n_undefined}` JSON summary.
pub fn write_rsa_json(path: &Path, correlations: &PerStimulusCorrelations) -> Result<()> {
    #[derive(Serialize)]
    struct RsaJson {
        mean_r: f64,
        n_defined: usize,
        n_undefined: usize,
    }
    let doc = RsaJson {
        mean_r: correlations.mean_r,
        n_defined: correlations.n_defined(),
        n_undefined: correlations.n_undefined,
    };
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn pearson_perfect_lines() {
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn pearson_matches_covariance_oracle() {
        let x: Vec<f64> = (0..80).map(|i| ((i * 37 % 101) as f64) * 0.13).collect();
        let y: Vec<f64> = (0..80).map(|i| ((i * 61 % 97) as f64) * 0.29).collect();
        let r = pearson(&x, &y).unwrap();

        let n = 80.0;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
        let sx = (x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / (n - 1.0)).sqrt();
        let sy = (y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_abs_diff_eq!(r, cov / (sx * sy), epsilon = 1e-12);
    }

    #[test]
    fn per_stimulus_csv_round_trips_including_undefined_rows() {
        let correlations = PerStimulusCorrelations::from_parts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Some(0.25), None, Some(-0.125)],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("per_stimulus_r.csv");
        write_per_stimulus_csv(&path, &correlations).unwrap();
        let reread = read_per_stimulus_csv(&path).unwrap();
        assert_eq!(reread.stimulus_ids, correlations.stimulus_ids);
        assert_eq!(reread.r_values, correlations.r_values);
        assert_eq!(reread.mean_r.to_bits(), correlations.mean_r.to_bits());
        assert_eq!(reread.n_undefined, 1);

        write_rsa_json(&dir.path().join("rsa.json"), &correlations).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rsa.json")).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["n_defined"], 2);
        assert_eq!(doc["n_undefined"], 1);
    }

    #[test]
    fn pearson_names_the_constant_side() {
        match pearson(&[1.0, 1.0], &[1.0, 2.0]) {
            Err(Error::ConstantInput { which }) => assert_eq!(which, "first"),
            other => panic!("expected ConstantInput, got {other:?}"),
        }
        match pearson(&[1.0, 3.0], &[5.0, 5.0]) {
            Err(Error::ConstantInput { which }) => assert_eq!(which, "second"),
            other => panic!("expected ConstantInput, got {other:?}"),
        }
    }

    fn rating(values: Array2<f64>, scale: f64) -> RatingMatrix {
        RatingMatrix::new(
            (0..values.nrows()).map(|i| format!("v{i}")).collect(),
            (0..values.ncols()).map(|j| format!("c{j}")).collect(),
            values,
            scale,
        )
        .unwrap()
    }

    #[test]
    fn self_correlation_is_one_per_row() {
        let m = rating(array![[1.0, 2.0, 3.0], [5.0, 1.0, 2.0]], 10.0);
        let c = per_stimulus_correlations(&m, &m).unwrap();
        assert_eq!(c.n_undefined, 0);
        for r in &c.r_values {
            assert_abs_diff_eq!(r.unwrap(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(c.mean_r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_rows_are_excluded_from_mean() {
        let a = rating(array![[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]], 10.0);
        let b = rating(array![[1.0, 2.0, 3.0], [1.0, 5.0, 9.0]], 10.0);
        let c = per_stimulus_correlations(&a, &b).unwrap();
        assert_eq!(c.n_undefined, 1);
        assert_eq!(c.r_values[1], None);
        assert_abs_diff_eq!(c.mean_r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn label_mismatch_is_rejected() {
        let a = rating(array![[1.0, 2.0]], 10.0);
        let mut b = a.clone();
        b.stimulus_ids[0] = "other".into();
        assert!(matches!(
            per_stimulus_correlations(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rdm_correlation_is_one_on_self() {
        let rdm = Rdm::new(
            vec!["a".into(), "b".into(), "c".into()],
            array![[0.0, 0.3, 0.7], [0.3, 0.0, 0.5], [0.7, 0.5, 0.0]],
        )
        .unwrap();
        assert_abs_diff_eq!(rdm_correlation(&rdm, &rdm).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rdm_correlation_is_permutation_invariant() {
        // Correlating D with E equals correlating PDPᵀ with PEPᵀ.
        let d = array![
            [0.0, 0.2, 0.4, 0.9],
            [0.2, 0.0, 0.6, 0.3],
            [0.4, 0.6, 0.0, 0.8],
            [0.9, 0.3, 0.8, 0.0]
        ];
        let e = array![
            [0.0, 0.5, 0.1, 0.2],
            [0.5, 0.0, 0.9, 0.4],
            [0.1, 0.9, 0.0, 0.7],
            [0.2, 0.4, 0.7, 0.0]
        ];
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let r0 = rdm_correlation(
            &Rdm::new(ids.clone(), d.clone()).unwrap(),
            &Rdm::new(ids.clone(), e.clone()).unwrap(),
        )
        .unwrap();

        let perm = [2usize, 0, 3, 1];
        let permute = |m: &Array2<f64>| {
            Array2::from_shape_fn((4, 4), |(i, j)| m[(perm[i], perm[j])])
        };
        let r1 = rdm_correlation(
            &Rdm::new(ids.clone(), permute(&d)).unwrap(),
            &Rdm::new(ids, permute(&e)).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(r0, r1, epsilon = 1e-12);
    }

    #[test]
    fn cohens_d_examples() {
        let a = [1.0, 1.0, 2.0, 2.0];
        assert_abs_diff_eq!(cohens_d(&a, &a).unwrap(), 0.0, epsilon = 1e-15);

        // Hand oracle: means 1.5 and 0.5, both variances 1/3, pooled sd
        // sqrt(1/3), so d = 1 / sqrt(1/3) = sqrt(3).
        let b = [0.0, 0.0, 1.0, 1.0];
        assert_abs_diff_eq!(cohens_d(&a, &b).unwrap(), 3.0_f64.sqrt(), epsilon = 1e-12);

        // Antisymmetry.
        assert_abs_diff_eq!(
            cohens_d(&a, &b).unwrap(),
            -cohens_d(&b, &a).unwrap(),
            epsilon = 1e-15
        );

        assert!(matches!(
            cohens_d(&[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::ConstantInput { .. })
        ));
    }
}
