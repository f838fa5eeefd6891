//! Scoring of transport plans: one-to-one and category-level matching rates,
//! Ward-clustered category derivation, and top-K stimulus selection.

mod ward;

pub use ward::{cut_to_k, ward_linkage, WardMerge};

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gwot::TransportPlan;
use crate::ingest::RatingMatrix;
use crate::rsa::PerStimulusCorrelations;

/// Partition of stimuli into k categories labeled 0..k−1.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAssignment {
    pub stimulus_ids: Vec<String>,
    pub category_of: IndexMap<String, usize>,
    pub k: usize,
}

impl CategoryAssignment {
    pub fn new(
        stimulus_ids: Vec<String>,
        category_of: IndexMap<String, usize>,
        k: usize,
    ) -> Result<Self> {
        let assignment = CategoryAssignment {
            stimulus_ids,
            category_of,
            k,
        };
        assignment.validate()?;
        Ok(assignment)
    }

    /// Every stimulus must be mapped, and the labels used must be exactly
    /// 0..k−1 (each appearing at least once).
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.k];
        for id in &self.stimulus_ids {
            let &label = self
                .category_of
                .get(id)
                .ok_or_else(|| Error::UnmappedStimulus { id: id.clone() })?;
            if label >= self.k {
                return Err(Error::InvalidParameter {
                    what: format!(
                        "stimulus {id} has category {label}, outside 0..{}",
                        self.k
                    ),
                });
            }
            seen[label] = true;
        }
        if let Some(unused) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidParameter {
                what: format!("category {unused} of {} has no stimuli", self.k),
            });
        }
        Ok(())
    }

    pub fn category(&self, id: &str) -> Result<usize> {
        self.category_of
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnmappedStimulus { id: id.to_string() })
    }
}

/// Binary ground-truth pairing matrix C: C_ik = 1 means "plan mass at (i,k)
/// counts as correct".
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub values: Array2<u8>,
}

impl AssignmentMatrix {
    /// The one-to-one truth for aligned stimulus lists.
    pub fn identity(n: usize) -> Self {
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            values[(i, i)] = 1;
        }
        AssignmentMatrix { values }
    }

    /// One-to-one truth where row i's correct partner is column perm[i].
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut values = Array2::zeros((n, n));
        for (i, &k) in perm.iter().enumerate() {
            values[(i, k)] = 1;
        }
        AssignmentMatrix { values }
    }

    /// Category-level truth: C_ik = 1 iff stimuli i and k (both axes indexed
    /// by the assignment's stimulus order) share a category.
    pub fn from_categories(categories: &CategoryAssignment) -> Result<Self> {
        let labels: Vec<usize> = categories
            .stimulus_ids
            .iter()
            .map(|id| categories.category(id))
            .collect::<Result<_>>()?;
        Ok(Self::from_labels(&labels))
    }

    /// Same-label truth over a raw label vector. Unlike
    /// [`AssignmentMatrix::from_categories`] this accepts sparse label sets,
    /// which arise when a full categorization is restricted to a subset of
    /// stimuli.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                if labels[i] == labels[k] {
                    values[(i, k)] = 1;
                }
            }
        }
        AssignmentMatrix { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Row argmax with ties resolved to the lowest column index; errors on an
/// all-zero (or non-finite) row.
fn row_argmax(plan: &TransportPlan, row: usize) -> Result<usize> {
    let r = plan.values.row(row);
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for (k, &v) in r.iter().enumerate() {
        if v.is_finite() && v > best {
            best = v;
            arg = Some(k);
        }
    }
    match arg {
        Some(k) if best > 0.0 => Ok(k),
        _ => Err(Error::EmptyPlanRow { row }),
    }
}

/// Percentage of rows whose plan argmax lands on a correct pairing:
/// (100/n) Σ_i C[i, argmax_k Γ_ik]. Each row consults a single winning
/// column, the lowest index among maxima.
pub fn matching_rate(plan: &TransportPlan, truth: &AssignmentMatrix) -> Result<f64> {
    let n = plan.values.nrows();
    if plan.values.ncols() != truth.values.ncols() || truth.values.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} but truth is {}x{}",
                n,
                plan.values.ncols(),
                truth.values.nrows(),
                truth.values.ncols()
            ),
        });
    }
    let mut hits = 0_usize;
    for i in 0..n {
        let k = row_argmax(plan, i)?;
        hits += truth.values[(i, k)] as usize;
    }
    Ok(100.0 * hits as f64 / n as f64)
}

/// Matching rate with "correct" relaxed to same-category membership. Both
/// plan axes must follow the assignment's stimulus order.
pub fn category_matching_rate(
    plan: &TransportPlan,
    categories: &CategoryAssignment,
) -> Result<f64> {
    let n = categories.stimulus_ids.len();
    if plan.values.nrows() != n || plan.values.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "plan is {}x{} but {n} stimuli are categorized",
                plan.values.nrows(),
                plan.values.ncols()
            ),
        });
    }
    let truth = AssignmentMatrix::from_categories(categories)?;
    matching_rate(plan, &truth)
}

/// Ward-clusters the stimulus rating vectors into exactly k categories.
pub fn cluster_categories(matrix: &RatingMatrix, k: usize) -> Result<CategoryAssignment> {
    let n = matrix.n_stimuli();
    if k < 2 || k > n {
        return Err(Error::InvalidParameter {
            what: format!("cluster count {k} outside 2..={n}"),
        });
    }
    let merges = ward_linkage(&matrix.values);
    let labels = cut_to_k(n, &merges, k);
    let mut category_of = IndexMap::new();
    for (id, &label) in matrix.stimulus_ids.iter().zip(labels.iter()) {
        category_of.insert(id.clone(), label);
    }
    CategoryAssignment::new(matrix.stimulus_ids.clone(), category_of, k)
}

/// The k stimulus ids with the highest defined per-stimulus correlation,
/// ordered by descending r; ties keep original stimulus order. Undefined
/// correlations never qualify.
pub fn select_top_k(correlations: &PerStimulusCorrelations, k: usize) -> Result<Vec<String>> {
    let defined: Vec<(usize, &String, f64)> = correlations
        .stimulus_ids
        .iter()
        .enumerate()
        .filter_map(|(i, id)| correlations.r_values[i].map(|r| (i, id, r)))
        .collect();
    if k > defined.len() {
        return Err(Error::TooFewSamples {
            context: "top-k selection over defined per-stimulus correlations",
            needed: k,
            got: defined.len(),
        });
    }
    let mut ranked = defined;
    ranked.sort_by(|x, y| y.2.total_cmp(&x.2)); // stable: ties keep input order
    Ok(ranked[..k].iter().map(|(_, id, _)| (*id).clone()).collect())
}

/// Theoretical chance level for one-to-one matching: 100/n percent.
pub fn chance_level_percent(n: usize) -> f64 {
    assert!(n > 0, "chance level needs at least one stimulus");
    100.0 / n as f64
}

/// Formats a percentage to three significant figures, e.g. 0.1818… → "0.182%".
pub fn format_percent(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}%");
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{value:.decimals$}%")
}

/// Summary row for a scored alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub matching_rate_pct: f64,
    pub category_matching_rate_pct: f64,
    pub k: usize,
    pub n: usize,
}

pub fn write_evaluation_json(path: &Path, report: &EvaluationReport) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)?;
    Ok(())
}

/// Writes one `stimulus_id,category` row per stimulus.
pub fn write_category_csv(path: &Path, categories: &CategoryAssignment) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["stimulus_id", "category"])?;
    for id in &categories.stimulus_ids {
        writer.write_record([id.as_str(), &categories.category(id)?.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a categorization written by [`write_category_csv`].
pub fn read_category_csv(path: &Path) -> Result<CategoryAssignment> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["stimulus_id", "category"] {
        return Err(Error::Malformed {
            context: format!(
                "{}: expected header stimulus_id,category",
                path.display()
            ),
        });
    }
    let mut stimulus_ids = Vec::new();
    let mut category_of = IndexMap::new();
    let mut max_label = 0_usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let label: usize = record.get(1).unwrap_or("").parse().map_err(|_| Error::Malformed {
            context: format!("{} line {}: unparseable category", path.display(), idx + 2),
        })?;
        if category_of.insert(id.clone(), label).is_some() {
            return Err(Error::DuplicateId { kind: "stimulus", id });
        }
        stimulus_ids.push(id);
        max_label = max_label.max(label);
    }
    CategoryAssignment::new(stimulus_ids, category_of, max_label + 1)
}
