//! Loading, validation, aggregation, splitting, and parsing of rating data.
//!
//! Everything downstream consumes a [`RatingMatrix`]: stimuli as rows,
//! emotion categories as columns, nonnegative intensities bounded by a
//! declared scale. This module produces such matrices from three sources:
//! per-rater time series (averaged per video, then per rater group), plain
//! rating CSVs, and free-form model-response text in `category: value` form.

use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

// --- domain types -----------------------------------------------------------

/// One rater's raw samples for one emotion category: for every video, the
/// sequence of intensity samples they recorded while watching it.
#[derive(Debug, Clone)]
pub struct RaterRecord {
    pub rater_id: String,
    pub emotion_category: String,
    /// video id → intensity samples, in recording order.
    pub per_video_series: IndexMap<String, Vec<f64>>,
}

impl RaterRecord {
    /// Checks that every sample is finite and within `[0, scale]`.
    pub fn validate(&self, scale: f64) -> Result<()> {
        for (video_id, series) in &self.per_video_series {
            for &v in series {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!(
                            "rater {:?}, category {:?}, video {:?}",
                            self.rater_id, self.emotion_category, video_id
                        ),
                    });
                }
                if v < 0.0 || v > scale {
                    return Err(Error::ValueOutOfRange {
                        context: format!(
                            "rater {:?}, category {:?}, video {:?}",
                            self.rater_id, self.emotion_category, video_id
                        ),
                        value: v,
                        scale,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Stimulus-by-category intensity matrix, the common currency of the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub stimulus_ids: Vec<String>,
    pub category_names: Vec<String>,
    /// rows = stimuli, columns = categories.
    pub values: Array2<f64>,
    /// Declared maximum of the rating scale (e.g. 100 for continuous ratings,
    /// 1 for proportion-style data).
    pub scale: f64,
}

impl RatingMatrix {
    /// Builds a matrix and enforces the type invariants: unique labels,
    /// matching shape, and every cell finite within `[0, scale]`.
    pub fn new(
        stimulus_ids: Vec<String>,
        category_names: Vec<String>,
        values: Array2<f64>,
        scale: f64,
    ) -> Result<Self> {
        let m = RatingMatrix {
            stimulus_ids,
            category_names,
            values,
            scale,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimulus_ids.len()
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_unique("stimulus", &self.stimulus_ids)?;
        check_unique("category", &self.category_names)?;
        if self.values.nrows() != self.stimulus_ids.len()
            || self.values.ncols() != self.category_names.len()
        {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "rating matrix is {}x{} but has {} stimulus ids and {} category names",
                    self.values.nrows(),
                    self.values.ncols(),
                    self.stimulus_ids.len(),
                    self.category_names.len()
                ),
            });
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter {
                what: format!("scale must be positive and finite, got {}", self.scale),
            });
        }
        for ((i, j), &v) in self.values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!(
                        "cell ({:?}, {:?})",
                        self.stimulus_ids[i], self.category_names[j]
                    ),
                });
            }
            if v < 0.0 || v > self.scale {
                return Err(Error::ValueOutOfRange {
                    context: format!(
                        "cell ({:?}, {:?})",
                        self.stimulus_ids[i], self.category_names[j]
                    ),
                    value: v,
                    scale: self.scale,
                });
            }
        }
        Ok(())
    }
}

fn check_unique(kind: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

/// A partition of (rater, category) pairs into two groups, disjoint within
/// every category so no rater's data for a category lands on both sides.
#[derive(Debug, Clone)]
pub struct GroupSplit {
    pub group1: Vec<(String, String)>,
    pub group2: Vec<(String, String)>,
}

impl GroupSplit {
    /// The records belonging to one side of the split, in record order.
    pub fn select<'a>(
        records: &'a [RaterRecord],
        group: &[(String, String)],
    ) -> Vec<&'a RaterRecord> {
        records
            .iter()
            .filter(|r| {
                group
                    .iter()
                    .any(|(rid, cat)| *rid == r.rater_id && *cat == r.emotion_category)
            })
            .collect()
    }
}

// --- operations --------------------------------------------------------------

/// Collapses each video's sample series to its arithmetic mean.
///
/// Samples are summed in ascending value order, which makes the result
/// bit-for-bit independent of recording order.
pub fn aggregate_time_series(record: &RaterRecord) -> Result<IndexMap<String, f64>> {
    let mut out = IndexMap::with_capacity(record.per_video_series.len());
    for (video_id, series) in &record.per_video_series {
        if series.is_empty() {
            return Err(Error::EmptySeries {
                rater_id: record.rater_id.clone(),
                video_id: video_id.clone(),
            });
        }
        let mut sorted = series.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let sum: f64 = sorted.iter().sum();
        out.insert(video_id.clone(), sum / series.len() as f64);
    }
    Ok(out)
}

/// Randomly halves the raters of every emotion category into two groups.
///
/// Categories are processed in first-appearance order and each category's
/// rater list is shuffled with a single seeded generator, so the split is a
/// pure function of `(records, seed)`. A category with an odd or sub-2 rater
/// count cannot be halved and is rejected by name.
pub fn split_groups(records: &[RaterRecord], seed: u64) -> Result<GroupSplit> {
    // (rater, category) pairs must be unique before grouping means anything.
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert((r.rater_id.as_str(), r.emotion_category.as_str())) {
            return Err(Error::DuplicateId {
                kind: "(rater, category)",
                id: format!("{}/{}", r.rater_id, r.emotion_category),
            });
        }
    }

    let mut by_category: IndexMap<&str, Vec<&str>> = IndexMap::new();
    for r in records {
        by_category
            .entry(r.emotion_category.as_str())
            .or_default()
            .push(r.rater_id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group1 = Vec::new();
    let mut group2 = Vec::new();
    for (category, raters) in &by_category {
        if raters.len() < 2 || raters.len() % 2 != 0 {
            return Err(Error::UnevenGroup {
                category: (*category).to_string(),
                raters: raters.len(),
            });
        }
        let mut shuffled = raters.clone();
        shuffled.shuffle(&mut rng);
        let half = shuffled.len() / 2;
        for (i, rater) in shuffled.iter().enumerate() {
            let pair = ((*rater).to_string(), (*category).to_string());
            if i < half {
                group1.push(pair);
            } else {
                group2.push(pair);
            }
        }
    }
    Ok(GroupSplit { group1, group2 })
}

/// Averages one group's records into a rating matrix: cell (video, category)
/// is the mean over that category's raters of their per-video mean intensity.
///
/// Every record must cover the same video set; categories missing from the
/// group are simply absent from the output, never zero-filled. Row order
/// follows the first record's video order; column order follows category
/// first appearance.
pub fn average_group(records: &[&RaterRecord], scale: f64) -> Result<RatingMatrix> {
    if records.is_empty() {
        return Err(Error::TooFewSamples {
            context: "average_group",
            needed: 1,
            got: 0,
        });
    }

    let stimulus_ids: Vec<String> = records[0].per_video_series.keys().cloned().collect();
    let mut missing = Vec::new();
    for r in records {
        for id in &stimulus_ids {
            if !r.per_video_series.contains_key(id) {
                missing.push(format!("{}/{}/{}", r.rater_id, r.emotion_category, id));
            }
        }
        for id in r.per_video_series.keys() {
            if !stimulus_ids.contains(id) {
                missing.push(format!(
                    "{}/{}/{} (extra)",
                    r.rater_id, r.emotion_category, id
                ));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingStimuli {
            context: "average_group".to_string(),
            missing,
        });
    }

    let mut categories: Vec<String> = Vec::new();
    let mut per_category: IndexMap<&str, Vec<IndexMap<String, f64>>> = IndexMap::new();
    for r in records {
        r.validate(scale)?;
        if !categories.iter().any(|c| c == &r.emotion_category) {
            categories.push(r.emotion_category.clone());
        }
        per_category
            .entry(r.emotion_category.as_str())
            .or_default()
            .push(aggregate_time_series(r)?);
    }

    let mut values = Array2::zeros((stimulus_ids.len(), categories.len()));
    for (j, category) in categories.iter().enumerate() {
        let rater_means = &per_category[category.as_str()];
        for (i, id) in stimulus_ids.iter().enumerate() {
            let sum: f64 = rater_means.iter().map(|m| m[id]).sum();
            values[(i, j)] = sum / rater_means.len() as f64;
        }
    }
    RatingMatrix::new(stimulus_ids, categories, values, scale)
}

/// The matrix with its category columns rearranged into `order`, which must
/// name exactly the matrix's categories. Group averages order columns by
/// their own records' category appearance, so two halves of a split need
/// this to become column-comparable.
pub fn reorder_categories(matrix: &RatingMatrix, order: &[String]) -> Result<RatingMatrix> {
    let same_set = order.len() == matrix.category_names.len()
        && order.iter().all(|c| matrix.category_names.contains(c))
        && matrix.category_names.iter().all(|c| order.contains(c));
    if !same_set {
        return Err(Error::DimensionMismatch {
            context: format!(
                "cannot reorder categories {:?} into {:?}",
                matrix.category_names, order
            ),
        });
    }
    let mut values = Array2::zeros((matrix.n_stimuli(), order.len()));
    for (j_new, name) in order.iter().enumerate() {
        let j_old = matrix
            .category_names
            .iter()
            .position(|c| c == name)
            .expect("checked above");
        values.column_mut(j_new).assign(&matrix.values.column(j_old));
    }
    RatingMatrix::new(
        matrix.stimulus_ids.clone(),
        order.to_vec(),
        values,
        matrix.scale,
    )
}

/// Parses model-response text of the form `category: value`, one per line.
///
/// Lines are matched case-insensitively against `expected_categories`;
/// markdown artifacts (fences, bullets, emphasis) and unrelated lines are
/// tolerated and skipped. Values are strict: anything non-numeric on a
/// matched line, any value outside `[0, scale]`, any missing category, and
/// any conflicting duplicate is an error naming the category or line.
pub fn parse_model_response(
    text: &str,
    expected_categories: &[String],
    scale: f64,
) -> Result<Vec<f64>> {
    let mut found: IndexMap<usize, f64> = IndexMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_number = idx + 1;
        let line = strip_markdown(raw_line);
        if line.is_empty() {
            continue;
        }
        let Some((name_part, value_part)) = line.split_once(':') else {
            continue;
        };
        let name = strip_emphasis(name_part);
        let Some(cat_idx) = expected_categories
            .iter()
            .position(|c| c.trim().eq_ignore_ascii_case(name))
        else {
            continue;
        };
        let value_str = strip_emphasis(value_part);
        let value: f64 = value_str.parse().map_err(|_| Error::UnparseableValue {
            line_number,
            line: raw_line.to_string(),
        })?;
        if !value.is_finite() {
            return Err(Error::UnparseableValue {
                line_number,
                line: raw_line.to_string(),
            });
        }
        if value < 0.0 || value > scale {
            return Err(Error::ValueOutOfRange {
                context: expected_categories[cat_idx].clone(),
                value,
                scale,
            });
        }
        if let Some(&previous) = found.get(&cat_idx) {
            if previous != value {
                return Err(Error::ConflictingDuplicate {
                    category: expected_categories[cat_idx].clone(),
                    first: previous,
                    second: value,
                });
            }
        } else {
            found.insert(cat_idx, value);
        }
    }

    expected_categories
        .iter()
        .enumerate()
        .map(|(i, category)| {
            found.get(&i).copied().ok_or_else(|| Error::MissingCategory {
                category: category.clone(),
            })
        })
        .collect()
}

/// Trims whitespace and line-level markdown decoration (fences, bullets,
/// enumeration prefixes). Bullet stripping must not run on value tokens,
/// where a leading `-` is a sign, so this is for whole lines only.
fn strip_markdown(s: &str) -> String {
    let mut t = s.trim();
    // Fence lines carry no data at all.
    if t.starts_with("```") {
        return String::new();
    }
    // Leading bullet or "1." / "1)" enumeration.
    t = t.trim_start_matches(['-', '*', '•', '>']).trim_start();
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && matches!(t[digits..].chars().next(), Some('.') | Some(')')) {
        // Only treat the prefix as enumeration when a rating line follows;
        // otherwise the digits could belong to the content itself.
        let rest = t[digits + 1..].trim_start();
        if rest.contains(':') {
            t = rest;
        }
    }
    t.to_string()
}

/// Trims whitespace and emphasis marks from a single token.
fn strip_emphasis(s: &str) -> &str {
    s.trim_matches(['*', '_', '`', ' ', '\t'])
}

/// Serializes a rating vector in the `category: value` prompt format that
/// [`parse_model_response`] reads back; parse ∘ format is the identity for
/// in-range vectors.
pub fn format_response(categories: &[String], values: &[f64]) -> String {
    categories
        .iter()
        .zip(values)
        .map(|(c, v)| format!("{c}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Elementwise mean of several rating vectors (e.g. repeated model queries).
pub fn average_responses(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = vectors.first() else {
        return Err(Error::TooFewSamples {
            context: "average_responses",
            needed: 1,
            got: 0,
        });
    };
    for v in vectors {
        if v.len() != first.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "response vectors have lengths {} and {}",
                    first.len(),
                    v.len()
                ),
            });
        }
    }
    Ok((0..first.len())
        .map(|i| vectors.iter().map(|v| v[i]).sum::<f64>() / vectors.len() as f64)
        .collect())
}

/// Divides every cell (and the declared scale) by `divisor`, e.g. mapping a
/// 0-9 scale onto 0-0.9 proportions.
pub fn rescale_proportions(matrix: &RatingMatrix, divisor: f64) -> Result<RatingMatrix> {
    if !(divisor.is_finite() && divisor > 0.0) {
        return Err(Error::InvalidParameter {
            what: format!("divisor must be positive, got {divisor}"),
        });
    }
    RatingMatrix::new(
        matrix.stimulus_ids.clone(),
        matrix.category_names.clone(),
        matrix.values.mapv(|v| v / divisor),
        matrix.scale / divisor,
    )
}

// --- file formats -------------------------------------------------------------

/// Reads the canonical rating CSV: header `stimulus_id,<category>,...`, one
/// row per stimulus, plain decimal numbers.
pub fn read_rating_csv(path: &Path, scale: f64) -> Result<RatingMatrix> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut header_iter = headers.iter();
    match header_iter.next() {
        Some("stimulus_id") => {}
        other => {
            return Err(Error::Malformed {
                context: format!(
                    "{}: first header cell must be \"stimulus_id\", got {:?}",
                    path.display(),
                    other.unwrap_or("")
                ),
            })
        }
    }
    let category_names: Vec<String> = header_iter.map(str::to_string).collect();

    let mut stimulus_ids = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != category_names.len() + 1 {
            return Err(Error::Malformed {
                context: format!(
                    "{}:{}: expected {} fields, got {}",
                    path.display(),
                    line,
                    category_names.len() + 1,
                    record.len()
                ),
            });
        }
        stimulus_ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Malformed {
                context: format!(
                    "{}:{}: unparseable number {:?}",
                    path.display(),
                    line,
                    field
                ),
            })?;
            cells.push(v);
        }
    }
    let n = stimulus_ids.len();
    let values = Array2::from_shape_vec((n, category_names.len()), cells).map_err(|e| {
        Error::Malformed {
            context: format!("{}: {}", path.display(), e),
        }
    })?;
    RatingMatrix::new(stimulus_ids, category_names, values, scale)
}

/// Writes the canonical rating CSV. Numbers use Rust's shortest-round-trip
/// formatting, so write → read reproduces the matrix bit-for-bit.
pub fn write_rating_csv(path: &Path, matrix: &RatingMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["stimulus_id".to_string()];
    header.extend(matrix.category_names.iter().cloned());
    writer.write_record(&header)?;
    for (i, id) in matrix.stimulus_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(matrix.values.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads long-format rater records: columns
/// `rater_id,category,stimulus_id,t_index,value`. Samples are ordered by
/// `t_index` within each (rater, category, video).
pub fn read_rater_records(path: &Path, scale: f64) -> Result<Vec<RaterRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let expected = ["rater_id", "category", "stimulus_id", "t_index", "value"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Malformed {
                context: format!(
                    "{}: header must be {:?}, got {:?}",
                    path.display(),
                    expected.join(","),
                    got.join(",")
                ),
            });
        }
    }

    // (rater, category) → video → (t_index, value)
    let mut acc: IndexMap<(String, String), IndexMap<String, Vec<(i64, f64)>>> = IndexMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |field: &str| Error::Malformed {
            context: format!(
                "{}:{}: unparseable field {:?}",
                path.display(),
                line,
                field
            ),
        };
        let t_index: i64 = record[3].trim().parse().map_err(|_| parse_err(&record[3]))?;
        let value: f64 = record[4].trim().parse().map_err(|_| parse_err(&record[4]))?;
        acc.entry((record[0].to_string(), record[1].to_string()))
            .or_default()
            .entry(record[2].to_string())
            .or_default()
            .push((t_index, value));
    }

    let mut records = Vec::with_capacity(acc.len());
    for ((rater_id, emotion_category), videos) in acc {
        let mut per_video_series = IndexMap::with_capacity(videos.len());
        for (video_id, mut samples) in videos {
            samples.sort_by_key(|&(t, _)| t);
            per_video_series.insert(video_id, samples.into_iter().map(|(_, v)| v).collect());
        }
        let record = RaterRecord {
            rater_id,
            emotion_category,
            per_video_series,
        };
        record.validate(scale)?;
        records.push(record);
    }
    Ok(records)
}
