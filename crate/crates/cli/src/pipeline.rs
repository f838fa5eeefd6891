//! Full-pipeline orchestration: load inputs → supervised comparison → RDMs →
//! histogram matching → transport alignment → categorization → matching rates
//! → null distributions → top-K subset scopes → report.
//!
//! Stages run sequentially; within-stage parallelism (solver restarts) lives
//! in the library. A stage failure writes a FAILED marker naming the stage and
//! aborts, leaving the artifacts written so far in place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use indexmap::IndexSet;
use ndarray::Array2;
use sha2::{Digest, Sha256};

use emalign::evaluation::{
    category_matching_rate, chance_level_percent, cluster_categories, format_percent,
    matching_rate, select_top_k, write_category_csv, write_evaluation_json, AssignmentMatrix,
    CategoryAssignment, EvaluationReport,
};
use emalign::gwot::{
    restart_schedule, solve_gwot, write_plan_csv, write_plan_json, write_solver_log, SolverConfig,
    SolverResult,
};
use emalign::ingest::{
    average_group, read_rater_records, read_rating_csv, reorder_categories, split_groups,
    write_rating_csv, GroupSplit, RatingMatrix,
};
use emalign::nullmodel::{
    null_top_k_selection, shuffle_ratings, summarize_null, write_null_json,
    write_null_samples_csv, NullSummary,
};
use emalign::rsa::{
    cohens_d, per_stimulus_correlations, rdm_correlation, write_per_stimulus_csv, write_rsa_json,
    PerStimulusCorrelations,
};
use emalign::structure::{build_rdm_with, drop_zero_rows, histogram_match, write_rdm_csv, Rdm};

use crate::config::{InputsConfig, MatchDirection, NullPairing, PipelineConfig, StructureConfig};
use crate::report::{
    NullBlock, PerStimulusBlock, Provenance, RunReport, ScopeReport, SkippedMetric, SolverBlock,
};

// --- seed derivation ----------------------------------------------------------
//
// Every randomized stage draws from base_seed + scope·SCOPE_STRIDE +
// stage·STAGE_STRIDE (wrapping), so no two stages or scopes share a seed
// stream. Solver restarts and null shuffles then index within their block.

pub(crate) mod stage {
    pub const SPLIT: u64 = 1;
    pub const SOLVE: u64 = 2;
    pub const NULL_PER_STIMULUS: u64 = 3;
    pub const NULL_RDM: u64 = 4;
    pub const NULL_GWOT: u64 = 5;
}

const SCOPE_STRIDE: u64 = 1_000_000_000_000;
const STAGE_STRIDE: u64 = 10_000_000_000;
/// Within the transport-null stage, solver seed blocks sit this far above the
/// shuffle seeds, spaced per shuffle.
const NULL_SOLVE_OFFSET: u64 = 100_000_000;
const NULL_SOLVE_SPACING: u64 = 1_000_000;

pub(crate) fn stage_seed(base: u64, scope_idx: u64, stage: u64) -> u64 {
    base.wrapping_add(scope_idx.wrapping_mul(SCOPE_STRIDE))
        .wrapping_add(stage.wrapping_mul(STAGE_STRIDE))
}

// --- stage wrapper --------------------------------------------------------

/// Runs one named stage; on failure writes the FAILED marker (stage name plus
/// cause) next to the artifacts and propagates the error.
fn run_stage<T>(
    outdir: &Path,
    name: &str,
    f: impl FnOnce() -> anyhow::Result<T>,
) -> anyhow::Result<T> {
    match f() {
        Ok(v) => Ok(v),
        Err(e) => {
            let _ = fs::write(
                outdir.join("FAILED"),
                format!("stage: {name}\ncause: {e:#}\n"),
            );
            Err(e.context(format!("pipeline stage '{name}' failed")))
        }
    }
}

/// Tags a library error with the shuffle index it occurred at.
fn at_shuffle<T>(index: usize, outcome: emalign::Result<T>) -> anyhow::Result<T> {
    outcome.map_err(|e| {
        emalign::Error::NullShuffle {
            index,
            source: Box::new(e),
        }
        .into()
    })
}

// --- input loading --------------------------------------------------------

pub(crate) struct LoadedInputs {
    pub a: RatingMatrix,
    pub b: RatingMatrix,
    pub dropped: Vec<String>,
}

/// Reads (or derives) the two rating matrices, removes all-zero rows from
/// both sides jointly, and enforces a shared stimulus set. When `artifacts`
/// is given, group averages derived from rater records are written there.
pub(crate) fn load_inputs(
    config: &PipelineConfig,
    artifacts: Option<&Path>,
    stage_seeds: &mut BTreeMap<String, u64>,
) -> anyhow::Result<LoadedInputs> {
    let (a, b) = match &config.inputs {
        InputsConfig::RatingCsv {
            path_a,
            path_b,
            scale,
        } => (
            read_rating_csv(path_a, *scale)
                .with_context(|| format!("reading {}", path_a.display()))?,
            read_rating_csv(path_b, *scale)
                .with_context(|| format!("reading {}", path_b.display()))?,
        ),
        InputsConfig::RaterRecords {
            records,
            scale,
            split_seed,
        } => {
            let recs = read_rater_records(records, *scale)
                .with_context(|| format!("reading {}", records.display()))?;
            let seed = split_seed.unwrap_or_else(|| stage_seed(config.seed, 0, stage::SPLIT));
            stage_seeds.insert("all/split".to_string(), seed);
            let split = split_groups(&recs, seed)?;
            let a = average_group(&GroupSplit::select(&recs, &split.group1), *scale)?;
            let b = average_group(&GroupSplit::select(&recs, &split.group2), *scale)?;
            // Each average orders columns by its own records' category
            // appearance, which differs between groups whenever the split
            // interleaves raters; realign both onto the full record order.
            let order = category_order(&recs);
            let a = reorder_categories(&a, &order)?;
            let b = reorder_categories(&b, &order)?;
            if let Some(dir) = artifacts {
                write_rating_csv(&dir.join("group1.csv"), &a)?;
                write_rating_csv(&dir.join("group2.csv"), &b)?;
                write_split_json(&dir.join("split.json"), &split)?;
            }
            (a, b)
        }
    };

    // Zero rows are dropped from BOTH sides so the row pairing stays intact.
    let (_, dropped_a) = drop_zero_rows(&a);
    let (_, dropped_b) = drop_zero_rows(&b);
    let mut dropped: IndexSet<String> = dropped_a.into_iter().collect();
    dropped.extend(dropped_b);
    for id in &dropped {
        eprintln!("dropping all-zero stimulus row: {id}");
    }
    let a = exclude_rows(&a, &dropped)?;
    let b = exclude_rows(&b, &dropped)?;

    if a.stimulus_ids != b.stimulus_ids {
        return Err(emalign::Error::DimensionMismatch {
            context: "the two inputs must describe the same stimuli in the same order"
                .to_string(),
        }
        .into());
    }
    let n = a.n_stimuli();
    if n < 3 {
        anyhow::bail!("pipeline needs at least 3 stimuli after dropping zero rows, got {n}");
    }
    if config.evaluation.k > n {
        anyhow::bail!(
            "evaluation.k = {} exceeds the {n} stimuli available",
            config.evaluation.k
        );
    }
    for &k in &config.evaluation.top_k {
        if k > n {
            anyhow::bail!("evaluation.top_k value {k} exceeds the {n} stimuli available");
        }
    }

    Ok(LoadedInputs {
        a,
        b,
        dropped: dropped.into_iter().collect(),
    })
}

/// Emotion categories in record first-appearance order.
pub(crate) fn category_order(records: &[emalign::ingest::RaterRecord]) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.emotion_category) {
            order.push(r.emotion_category.clone());
        }
    }
    order
}

fn write_split_json(path: &Path, split: &GroupSplit) -> anyhow::Result<()> {
    let side = |pairs: &[(String, String)]| -> Vec<serde_json::Value> {
        pairs
            .iter()
            .map(|(rater, category)| {
                serde_json::json!({ "rater_id": rater, "category": category })
            })
            .collect()
    };
    let doc = serde_json::json!({
        "group1": side(&split.group1),
        "group2": side(&split.group2),
    });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

// --- row subsetting ---------------------------------------------------------

/// The matrix without the named rows, original order preserved.
fn exclude_rows(matrix: &RatingMatrix, drop: &IndexSet<String>) -> anyhow::Result<RatingMatrix> {
    if drop.is_empty() {
        return Ok(matrix.clone());
    }
    let keep: Vec<usize> = matrix
        .stimulus_ids
        .iter()
        .enumerate()
        .filter(|(_, id)| !drop.contains(*id))
        .map(|(i, _)| i)
        .collect();
    select_rows(matrix, &keep)
}

/// Rows whose id is in `wanted`, kept in the matrix's own row order so subset
/// artifacts stay diffable against the full ones.
pub(crate) fn subset_by_ids(
    matrix: &RatingMatrix,
    wanted: &IndexSet<String>,
) -> anyhow::Result<RatingMatrix> {
    let keep: Vec<usize> = matrix
        .stimulus_ids
        .iter()
        .enumerate()
        .filter(|(_, id)| wanted.contains(*id))
        .map(|(i, _)| i)
        .collect();
    if keep.len() != wanted.len() {
        anyhow::bail!(
            "subset asks for {} stimuli but only {} are present in the matrix",
            wanted.len(),
            keep.len()
        );
    }
    select_rows(matrix, &keep)
}

fn select_rows(matrix: &RatingMatrix, keep: &[usize]) -> anyhow::Result<RatingMatrix> {
    let ids = keep
        .iter()
        .map(|&i| matrix.stimulus_ids[i].clone())
        .collect();
    let mut values = Array2::zeros((keep.len(), matrix.n_categories()));
    for (row, &i) in keep.iter().enumerate() {
        values.row_mut(row).assign(&matrix.values.row(i));
    }
    Ok(RatingMatrix::new(
        ids,
        matrix.category_names.clone(),
        values,
        matrix.scale,
    )?)
}

// --- histogram preprocessing ------------------------------------------------

/// Applies the configured histogram preprocessing and returns the RDM pair in
/// solver order plus the interpolation flag (None when matching is off).
/// When a directory is given, the rewritten RDM is written there.
pub(crate) fn prepare_rdms(
    cfg: &StructureConfig,
    rdm_a: &Rdm,
    rdm_b: &Rdm,
    artifact_dir: Option<&Path>,
) -> anyhow::Result<(Rdm, Rdm, Option<bool>)> {
    if !cfg.histogram_match {
        return Ok((rdm_a.clone(), rdm_b.clone(), None));
    }
    let (d1, d2, interpolated) = match cfg.histogram_match_direction {
        MatchDirection::BToA => {
            let matched = histogram_match(rdm_a, rdm_b)?;
            (rdm_a.clone(), matched.rdm, matched.interpolated)
        }
        MatchDirection::AToB => {
            let matched = histogram_match(rdm_b, rdm_a)?;
            (matched.rdm, rdm_b.clone(), matched.interpolated)
        }
    };
    if let Some(dir) = artifact_dir {
        let rewritten = match cfg.histogram_match_direction {
            MatchDirection::BToA => &d2,
            MatchDirection::AToB => &d1,
        };
        write_rdm_csv(&dir.join("rdm_matched.csv"), rewritten)?;
    }
    Ok((d1, d2, Some(interpolated)))
}

// --- null distributions -------------------------------------------------------

/// Per-stimulus correlation null: each shuffle contributes its mean r as a
/// sample; the defined per-stimulus values are pooled for the effect size.
/// In a top-K scope the subset is re-selected per shuffle from the shuffled
/// ratings, mirroring the observed selection protocol.
pub(crate) fn null_per_stimulus(
    full_a: &RatingMatrix,
    shuffle_target: &RatingMatrix,
    top_k: Option<usize>,
    n_shuffles: usize,
    base_seed: u64,
) -> anyhow::Result<(NullSummary, Vec<f64>)> {
    let mut samples = Vec::with_capacity(n_shuffles);
    let mut pooled = Vec::new();
    for s in 0..n_shuffles {
        let shuffled = shuffle_ratings(shuffle_target, base_seed.wrapping_add(s as u64));
        let correlations = match top_k {
            None => at_shuffle(s, per_stimulus_correlations(full_a, &shuffled))?,
            Some(k) => {
                let ids: IndexSet<String> = at_shuffle(s, null_top_k_selection(&shuffled, full_a, k))?
                    .into_iter()
                    .collect();
                let ref_sub = subset_by_ids(full_a, &ids)?;
                let shuf_sub = subset_by_ids(&shuffled, &ids)?;
                at_shuffle(s, per_stimulus_correlations(&ref_sub, &shuf_sub))?
            }
        };
        samples.push(correlations.mean_r);
        pooled.extend(correlations.r_values.iter().flatten().copied());
    }
    Ok((summarize_null("per_stimulus_mean_r", samples)?, pooled))
}

/// RDM-correlation null; same shuffle and subset protocol.
pub(crate) fn null_rdm_correlation(
    full_a: &RatingMatrix,
    rdm_ref_full: &Rdm,
    shuffle_target: &RatingMatrix,
    cfg: &StructureConfig,
    top_k: Option<usize>,
    n_shuffles: usize,
    base_seed: u64,
) -> anyhow::Result<NullSummary> {
    let mut samples = Vec::with_capacity(n_shuffles);
    for s in 0..n_shuffles {
        let shuffled = shuffle_ratings(shuffle_target, base_seed.wrapping_add(s as u64));
        let r = match top_k {
            None => {
                let rdm_shuf = at_shuffle(s, build_rdm_with(&shuffled, cfg.metric))?;
                at_shuffle(s, rdm_correlation(rdm_ref_full, &rdm_shuf))?
            }
            Some(k) => {
                let ids: IndexSet<String> = at_shuffle(s, null_top_k_selection(&shuffled, full_a, k))?
                    .into_iter()
                    .collect();
                let rdm_ref = at_shuffle(s, build_rdm_with(&subset_by_ids(full_a, &ids)?, cfg.metric))?;
                let rdm_shuf =
                    at_shuffle(s, build_rdm_with(&subset_by_ids(&shuffled, &ids)?, cfg.metric))?;
                at_shuffle(s, rdm_correlation(&rdm_ref, &rdm_shuf))?
            }
        };
        samples.push(r);
    }
    summarize_null("rdm_correlation", samples)
        .map_err(Into::into)
}

/// Transport-alignment null: every shuffle gets a full multi-restart solve
/// and is scored in the shuffled coordinates — one-to-one against the
/// identity pairing, category against the reference categorization.
#[allow(clippy::too_many_arguments)]
pub(crate) fn null_gwot(
    full_a: &RatingMatrix,
    shuffle_target: &RatingMatrix,
    categories: &CategoryAssignment,
    structure_cfg: &StructureConfig,
    solver_template: &SolverConfig,
    top_k: Option<usize>,
    n_shuffles: usize,
    base_seed: u64,
) -> anyhow::Result<(NullSummary, NullSummary)> {
    let mut matching_samples = Vec::with_capacity(n_shuffles);
    let mut category_samples = Vec::with_capacity(n_shuffles);
    for s in 0..n_shuffles {
        let shuffled = shuffle_ratings(shuffle_target, base_seed.wrapping_add(s as u64));
        let (a_s, b_s) = match top_k {
            None => (full_a.clone(), shuffled),
            Some(k) => {
                let ids: IndexSet<String> = at_shuffle(s, null_top_k_selection(&shuffled, full_a, k))?
                    .into_iter()
                    .collect();
                (subset_by_ids(full_a, &ids)?, subset_by_ids(&shuffled, &ids)?)
            }
        };
        let labels: Vec<usize> = a_s
            .stimulus_ids
            .iter()
            .map(|id| categories.category(id))
            .collect::<emalign::Result<_>>()?;
        let rdm_a = at_shuffle(s, build_rdm_with(&a_s, structure_cfg.metric))?;
        let rdm_b = at_shuffle(s, build_rdm_with(&b_s, structure_cfg.metric))?;
        let (d1, d2, _) = prepare_rdms(structure_cfg, &rdm_a, &rdm_b, None)?;
        let solver_config = SolverConfig {
            base_seed: base_seed
                .wrapping_add(NULL_SOLVE_OFFSET)
                .wrapping_add((s as u64).wrapping_mul(NULL_SOLVE_SPACING)),
            ..solver_template.clone()
        };
        let result = at_shuffle(s, solve_gwot(&d1, &d2, &solver_config))?;
        let n_s = a_s.n_stimuli();
        matching_samples.push(at_shuffle(
            s,
            matching_rate(&result.best_plan, &AssignmentMatrix::identity(n_s)),
        )?);
        category_samples.push(at_shuffle(
            s,
            matching_rate(&result.best_plan, &AssignmentMatrix::from_labels(&labels)),
        )?);
    }
    Ok((
        summarize_null("matching_rate", matching_samples)?,
        summarize_null("category_matching_rate", category_samples)?,
    ))
}

// --- scope execution ---------------------------------------------------------

struct PipelineCtx<'a> {
    config: &'a PipelineConfig,
    outdir: &'a Path,
    full_a: &'a RatingMatrix,
    full_b: &'a RatingMatrix,
    categories: &'a CategoryAssignment,
}

impl PipelineCtx<'_> {
    fn shuffle_target(&self) -> &RatingMatrix {
        match self.config.null.pairing {
            NullPairing::ShuffledReference => self.full_a,
            NullPairing::ShuffledOther => self.full_b,
        }
    }
}

/// Runs one evaluation scope end to end and returns its report block plus the
/// observed per-stimulus correlations (the full scope's feed the top-K
/// selection).
fn run_scope(
    ctx: &PipelineCtx<'_>,
    scope_idx: u64,
    scope_name: &str,
    subset: Option<&IndexSet<String>>,
    stage_seeds: &mut BTreeMap<String, u64>,
    skipped: &mut Vec<SkippedMetric>,
) -> anyhow::Result<(ScopeReport, PerStimulusCorrelations)> {
    let dir: PathBuf = match subset {
        None => ctx.outdir.to_path_buf(),
        Some(_) => {
            let d = ctx.outdir.join(scope_name);
            fs::create_dir_all(&d)?;
            d
        }
    };
    let stage_name = |step: &str| format!("{scope_name}/{step}");

    let (a, b) = match subset {
        None => (ctx.full_a.clone(), ctx.full_b.clone()),
        Some(ids) => (
            subset_by_ids(ctx.full_a, ids)?,
            subset_by_ids(ctx.full_b, ids)?,
        ),
    };
    let n = a.n_stimuli();
    let labels: Vec<usize> = a
        .stimulus_ids
        .iter()
        .map(|id| ctx.categories.category(id))
        .collect::<emalign::Result<_>>()?;
    let top_k = subset.map(|ids| ids.len());

    // -- supervised comparison
    let observed = run_stage(ctx.outdir, &stage_name("rsa"), || {
        let observed = per_stimulus_correlations(&a, &b)?;
        write_per_stimulus_csv(&dir.join("per_stimulus_r.csv"), &observed)?;
        write_rsa_json(&dir.join("rsa.json"), &observed)?;
        Ok(observed)
    })?;

    let (rdm_a, rdm_b, rdm_r) = run_stage(ctx.outdir, &stage_name("rdm"), || {
        let rdm_a = build_rdm_with(&a, ctx.config.structure.metric)?;
        let rdm_b = build_rdm_with(&b, ctx.config.structure.metric)?;
        write_rdm_csv(&dir.join("rdm_a.csv"), &rdm_a)?;
        write_rdm_csv(&dir.join("rdm_b.csv"), &rdm_b)?;
        let r = rdm_correlation(&rdm_a, &rdm_b)?;
        Ok((rdm_a, rdm_b, r))
    })?;

    // -- unsupervised alignment
    let (d1, d2, interpolated) = run_stage(ctx.outdir, &stage_name("histogram_match"), || {
        prepare_rdms(&ctx.config.structure, &rdm_a, &rdm_b, Some(&dir))
    })?;

    let solver_seed = stage_seed(ctx.config.seed, scope_idx, stage::SOLVE);
    stage_seeds.insert(stage_name("solve"), solver_seed);
    let n_restarts = ctx
        .config
        .solver
        .n_restarts
        .unwrap_or_else(|| restart_schedule(n));
    let solver_config = SolverConfig {
        n_restarts,
        max_fw_iterations: ctx.config.solver.max_fw_iterations,
        convergence_tol: ctx.config.solver.convergence_tol,
        base_seed: solver_seed,
        histogram_match_inputs: false, // applied above, direction-aware
    };
    let result: SolverResult = run_stage(ctx.outdir, &stage_name("solve"), || {
        let result = solve_gwot(&d1, &d2, &solver_config)?;
        write_plan_csv(
            &dir.join("plan.csv"),
            &result.best_plan,
            &a.stimulus_ids,
            &b.stimulus_ids,
        )?;
        write_plan_json(
            &dir.join("plan.json"),
            &result.best_plan,
            &a.stimulus_ids,
            &b.stimulus_ids,
        )?;
        write_solver_log(&dir.join("solver_log.jsonl"), &result)?;
        Ok(result)
    })?;

    // -- scoring
    let (matching_pct, category_pct) = run_stage(ctx.outdir, &stage_name("score"), || {
        let matching = matching_rate(&result.best_plan, &AssignmentMatrix::identity(n))?;
        // The full scope scores against the dense categorization; subsets may
        // lose whole categories, so they score against the raw labels.
        let category = match subset {
            None => category_matching_rate(&result.best_plan, ctx.categories)?,
            Some(_) => matching_rate(&result.best_plan, &AssignmentMatrix::from_labels(&labels))?,
        };
        write_evaluation_json(
            &dir.join("evaluation.json"),
            &EvaluationReport {
                matching_rate_pct: matching,
                category_matching_rate_pct: category,
                k: ctx.config.evaluation.k,
                n,
            },
        )?;
        Ok((matching, category))
    })?;

    // -- null distributions
    let shuffle_target = ctx.shuffle_target();

    let per_stim_seed = stage_seed(ctx.config.seed, scope_idx, stage::NULL_PER_STIMULUS);
    stage_seeds.insert(stage_name("null_per_stimulus_mean_r"), per_stim_seed);
    let (per_stim_null, pooled_null_r) =
        run_stage(ctx.outdir, &stage_name("null_per_stimulus_mean_r"), || {
            let (summary, pooled) = null_per_stimulus(
                ctx.full_a,
                shuffle_target,
                top_k,
                ctx.config.null.per_stimulus_r_shuffles,
                per_stim_seed,
            )?;
            write_null_json(&dir.join("null_per_stimulus_mean_r.json"), &summary)?;
            write_null_samples_csv(&dir.join("null_per_stimulus_mean_r_samples.csv"), &summary)?;
            Ok((summary, pooled))
        })?;

    let rdm_null_seed = stage_seed(ctx.config.seed, scope_idx, stage::NULL_RDM);
    stage_seeds.insert(stage_name("null_rdm_correlation"), rdm_null_seed);
    // In the full scope `rdm_a` is the full reference RDM; in a subset scope
    // the null re-selects per shuffle and never consults it.
    let rdm_null = run_stage(ctx.outdir, &stage_name("null_rdm_correlation"), || {
        let summary = null_rdm_correlation(
            ctx.full_a,
            &rdm_a,
            shuffle_target,
            &ctx.config.structure,
            top_k,
            ctx.config.null.rdm_correlation_shuffles,
            rdm_null_seed,
        )?;
        write_null_json(&dir.join("null_rdm_correlation.json"), &summary)?;
        write_null_samples_csv(&dir.join("null_rdm_correlation_samples.csv"), &summary)?;
        Ok(summary)
    })?;

    let gwot_null_seed = stage_seed(ctx.config.seed, scope_idx, stage::NULL_GWOT);
    stage_seeds.insert(stage_name("null_gwot"), gwot_null_seed);
    let null_solver_template = SolverConfig {
        n_restarts: ctx.config.null.gwot_restarts,
        base_seed: 0, // set per shuffle inside null_gwot
        ..solver_config.clone()
    };
    let (matching_null, category_null) = run_stage(ctx.outdir, &stage_name("null_gwot"), || {
        let (m, c) = null_gwot(
            ctx.full_a,
            shuffle_target,
            ctx.categories,
            &ctx.config.structure,
            &null_solver_template,
            top_k,
            ctx.config.null.gwot_shuffles_for(ctx.full_a.n_stimuli()),
            gwot_null_seed,
        )?;
        write_null_json(&dir.join("null_matching_rate.json"), &m)?;
        write_null_samples_csv(&dir.join("null_matching_rate_samples.csv"), &m)?;
        write_null_json(&dir.join("null_category_matching_rate.json"), &c)?;
        write_null_samples_csv(&dir.join("null_category_matching_rate_samples.csv"), &c)?;
        Ok((m, c))
    })?;

    // -- effect size
    let observed_defined: Vec<f64> = observed.r_values.iter().flatten().copied().collect();
    let effect = match cohens_d(&observed_defined, &pooled_null_r) {
        Ok(d) => Some(d),
        Err(e) => {
            skipped.push(SkippedMetric {
                metric: "cohens_d_per_stimulus_r".to_string(),
                scope: scope_name.to_string(),
                reason: e.to_string(),
            });
            None
        }
    };

    let nulls = [&per_stim_null, &rdm_null, &matching_null, &category_null]
        .into_iter()
        .map(|s| NullBlock {
            metric: s.metric_name.clone(),
            n_shuffles: s.n_shuffles,
            interval_95: s.interval_95,
        })
        .collect();

    let scope_report = ScopeReport {
        scope: scope_name.to_string(),
        n,
        per_stimulus: PerStimulusBlock {
            mean_r: if observed.mean_r.is_finite() {
                Some(observed.mean_r)
            } else {
                None
            },
            n_defined: observed.n_defined(),
            n_undefined: observed.n_undefined,
        },
        rdm_correlation: rdm_r,
        gwd: result.best_gwd,
        solver: SolverBlock {
            n_restarts,
            n_converged: result.converged_flags.iter().filter(|&&c| c).count(),
        },
        matching_rate_pct: matching_pct,
        category_matching_rate_pct: category_pct,
        k: ctx.config.evaluation.k,
        histogram_interpolated: interpolated,
        nulls,
        cohens_d_per_stimulus_r: effect,
    };
    Ok((scope_report, observed))
}

// --- entry point -------------------------------------------------------------

pub fn run_pipeline(config: &PipelineConfig, outdir: &Path) -> anyhow::Result<RunReport> {
    fs::create_dir_all(outdir)
        .with_context(|| format!("creating output directory {}", outdir.display()))?;
    // A fresh run invalidates any marker left by a previous failed attempt.
    let _ = fs::remove_file(outdir.join("FAILED"));

    let mut stage_seeds = BTreeMap::new();
    let mut skipped = Vec::new();

    let inputs = run_stage(outdir, "load_inputs", || {
        load_inputs(config, Some(outdir), &mut stage_seeds)
    })?;
    let n = inputs.a.n_stimuli();

    let categories = run_stage(outdir, "categorize", || {
        let categories = cluster_categories(&inputs.a, config.evaluation.k)?;
        write_category_csv(&outdir.join("categories.csv"), &categories)?;
        Ok(categories)
    })?;

    let ctx = PipelineCtx {
        config,
        outdir,
        full_a: &inputs.a,
        full_b: &inputs.b,
        categories: &categories,
    };

    let mut scopes = Vec::new();
    let (all_report, observed_full) =
        run_scope(&ctx, 0, "all", None, &mut stage_seeds, &mut skipped)?;
    scopes.push(all_report);

    for (i, &k_sel) in config.evaluation.top_k.iter().enumerate() {
        let scope_name = format!("top_{k_sel}");
        let ids = run_stage(outdir, &format!("{scope_name}/select"), || {
            Ok(select_top_k(&observed_full, k_sel)?
                .into_iter()
                .collect::<IndexSet<String>>())
        })?;
        let (scope_report, _) = run_scope(
            &ctx,
            (i + 1) as u64,
            &scope_name,
            Some(&ids),
            &mut stage_seeds,
            &mut skipped,
        )?;
        scopes.push(scope_report);
    }

    let report = RunReport {
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(config)?,
            base_seed: config.seed,
            stage_seeds,
            histogram_match: config.structure.histogram_match,
            histogram_match_direction: config.structure.histogram_match_direction.to_string(),
            null_pairing: config.null.pairing.to_string(),
            dropped_stimuli: inputs.dropped,
        },
        n_stimuli: n,
        chance_level_pct: chance_level_percent(n),
        chance_level_display: format_percent(chance_level_percent(n)),
        scopes,
        skipped,
    };
    run_stage(outdir, "report", || report.write(&outdir.join("report.json")))?;
    Ok(report)
}

/// SHA-256 over the canonical JSON form of the resolved configuration. The
/// output directory influences no numeric result, so it is excluded — runs
/// that differ only in where they write hash identically.
pub(crate) fn config_hash(config: &PipelineConfig) -> anyhow::Result<String> {
    let mut analysis_config = config.clone();
    analysis_config.outdir = None;
    let canonical = serde_json::to_vec(&analysis_config)?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
