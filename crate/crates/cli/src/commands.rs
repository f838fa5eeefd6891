//! The individual subcommands: thin artifact-IO shells around the library
//! operations, plus the full-pipeline entry point.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use indexmap::IndexSet;

use emalign::evaluation::{
    chance_level_percent, cluster_categories, format_percent, matching_rate, write_category_csv,
    write_evaluation_json, AssignmentMatrix, EvaluationReport,
};
use emalign::gwot::{
    read_plan_csv, restart_schedule, solve_gwot, write_plan_csv, write_plan_json,
    write_solver_log, SolverConfig,
};
use emalign::ingest::{
    average_group, read_rater_records, read_rating_csv, reorder_categories, split_groups,
    write_rating_csv, GroupSplit,
};
use emalign::nullmodel::{write_null_json, write_null_samples_csv, NullSummary};
use emalign::rsa::{per_stimulus_correlations, rdm_correlation, write_per_stimulus_csv,
    write_rsa_json};
use emalign::structure::{build_rdm, drop_zero_rows, read_rdm_csv, write_rdm_csv, write_rdm_json};
use emalign::synth::{generate, SynthConfig};

use crate::config::{resolve_outdir_flag, Overrides, PipelineConfig};
use crate::pipeline::{self, stage_seed};
use crate::{
    EvaluateArgs, GwotArgs, IngestArgs, NullArgs, NullMetricArg, PipelineArgs, RdmArgs, RsaArgs,
    SynthArgs,
};

fn ensure_outdir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

// --- synth ---------------------------------------------------------------------

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let config = SynthConfig {
        n_stimuli: args.stimuli,
        k: args.categories,
        n_dims: args.dims,
        scale: args.scale,
        noise_sigma: args.noise_sigma,
        item_sigma: args.item_sigma,
        min_separation_sigmas: args.separation,
        seed: args.seed,
    };
    let data = generate(&config)?;
    write_rating_csv(&outdir.join("view1.csv"), &data.view1)?;
    write_rating_csv(&outdir.join("view2.csv"), &data.view2)?;
    write_category_csv(&outdir.join("true_categories.csv"), &data.categories)?;
    println!(
        "wrote {} stimuli x {} dims with {} planted categories to {}",
        args.stimuli,
        args.dims,
        args.categories,
        outdir.display()
    );
    Ok(())
}

// --- ingest --------------------------------------------------------------------

pub fn cmd_ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let records = read_rater_records(&args.records, args.scale)
        .with_context(|| format!("reading {}", args.records.display()))?;
    let split = split_groups(&records, args.seed)?;
    let group1 = average_group(&GroupSplit::select(&records, &split.group1), args.scale)?;
    let group2 = average_group(&GroupSplit::select(&records, &split.group2), args.scale)?;
    // Keep both halves column-comparable regardless of which raters landed
    // where; see the same step in the pipeline input loader.
    let order = pipeline::category_order(&records);
    let group1 = reorder_categories(&group1, &order)?;
    let group2 = reorder_categories(&group2, &order)?;
    write_rating_csv(&outdir.join("group1.csv"), &group1)?;
    write_rating_csv(&outdir.join("group2.csv"), &group2)?;
    println!(
        "split {} rater-category records into groups of {} and {} series",
        records.len(),
        split.group1.len(),
        split.group2.len()
    );
    println!("wrote group1.csv and group2.csv to {}", outdir.display());
    Ok(())
}

// --- rdm -----------------------------------------------------------------------

pub fn cmd_rdm(args: &RdmArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let matrix = read_rating_csv(&args.input, args.scale)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (matrix, dropped) = drop_zero_rows(&matrix);
    for id in &dropped {
        eprintln!("dropping all-zero stimulus row: {id}");
    }
    let rdm = build_rdm(&matrix)?;
    write_rdm_csv(&outdir.join("rdm.csv"), &rdm)?;
    write_rdm_json(&outdir.join("rdm.json"), &rdm)?;
    println!(
        "wrote {0}x{0} dissimilarity matrix to {1} ({2} zero rows dropped)",
        rdm.n(),
        outdir.display(),
        dropped.len()
    );
    Ok(())
}

// --- rsa -----------------------------------------------------------------------

pub fn cmd_rsa(args: &RsaArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let a = read_rating_csv(&args.input_a, args.scale)
        .with_context(|| format!("reading {}", args.input_a.display()))?;
    let b = read_rating_csv(&args.input_b, args.scale)
        .with_context(|| format!("reading {}", args.input_b.display()))?;

    // Zero rows must be dropped from both sides to keep the pairing intact.
    let (_, dropped_a) = drop_zero_rows(&a);
    let (_, dropped_b) = drop_zero_rows(&b);
    let dropped: IndexSet<String> = dropped_a.into_iter().chain(dropped_b).collect();
    for id in &dropped {
        eprintln!("dropping all-zero stimulus row: {id}");
    }
    let a = exclude(&a, &dropped)?;
    let b = exclude(&b, &dropped)?;

    let observed = per_stimulus_correlations(&a, &b)?;
    write_per_stimulus_csv(&outdir.join("per_stimulus_r.csv"), &observed)?;
    write_rsa_json(&outdir.join("rsa.json"), &observed)?;
    let rdm_r = rdm_correlation(&build_rdm(&a)?, &build_rdm(&b)?)?;
    println!(
        "mean per-stimulus r: {} ({} defined, {} undefined)",
        observed.mean_r,
        observed.n_defined(),
        observed.n_undefined
    );
    println!("rdm correlation: {rdm_r}");
    println!("wrote per_stimulus_r.csv and rsa.json to {}", outdir.display());
    Ok(())
}

fn exclude(
    matrix: &emalign::ingest::RatingMatrix,
    drop: &IndexSet<String>,
) -> anyhow::Result<emalign::ingest::RatingMatrix> {
    if drop.is_empty() {
        return Ok(matrix.clone());
    }
    let wanted: IndexSet<String> = matrix
        .stimulus_ids
        .iter()
        .filter(|id| !drop.contains(*id))
        .cloned()
        .collect();
    pipeline::subset_by_ids(matrix, &wanted)
}

// --- gwot ----------------------------------------------------------------------

pub fn cmd_gwot(args: &GwotArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let d1 = read_rdm_csv(&args.rdm_a)
        .with_context(|| format!("reading {}", args.rdm_a.display()))?;
    let d2 = read_rdm_csv(&args.rdm_b)
        .with_context(|| format!("reading {}", args.rdm_b.display()))?;
    let config = SolverConfig {
        n_restarts: args.restarts.unwrap_or_else(|| restart_schedule(d1.n())),
        max_fw_iterations: args.max_iterations,
        convergence_tol: args.tol,
        base_seed: args.seed,
        // Rewrites the second RDM's values onto the first's distribution; to
        // match in the other direction, swap the inputs.
        histogram_match_inputs: args.histogram_match,
    };
    let result = solve_gwot(&d1, &d2, &config)?;
    write_plan_csv(
        &outdir.join("plan.csv"),
        &result.best_plan,
        &d1.stimulus_ids,
        &d2.stimulus_ids,
    )?;
    write_plan_json(
        &outdir.join("plan.json"),
        &result.best_plan,
        &d1.stimulus_ids,
        &d2.stimulus_ids,
    )?;
    write_solver_log(&outdir.join("solver_log.jsonl"), &result)?;
    let converged = result.converged_flags.iter().filter(|&&c| c).count();
    println!(
        "best gwd {} over {} restarts ({} converged)",
        result.best_gwd, config.n_restarts, converged
    );
    println!("wrote plan.csv, plan.json, solver_log.jsonl to {}", outdir.display());
    Ok(())
}

// --- evaluate --------------------------------------------------------------------

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let outdir = resolve_outdir_flag(args.outdir.clone());
    ensure_outdir(&outdir)?;
    let (plan, row_ids, col_ids) = read_plan_csv(&args.plan)
        .with_context(|| format!("reading {}", args.plan.display()))?;
    if row_ids != col_ids {
        return Err(emalign::Error::DimensionMismatch {
            context: "evaluation expects a self-alignment plan with identical row and column ids"
                .to_string(),
        }
        .into());
    }
    let categories = emalign::evaluation::read_category_csv(&args.categories)
        .with_context(|| format!("reading {}", args.categories.display()))?;
    // The categorization may cover a superset of the plan (a top-K plan
    // against the full categorization), so score against the looked-up labels.
    let labels: Vec<usize> = row_ids
        .iter()
        .map(|id| categories.category(id))
        .collect::<emalign::Result<_>>()?;
    let n = row_ids.len();
    let matching = matching_rate(&plan, &AssignmentMatrix::identity(n))?;
    let category = matching_rate(&plan, &AssignmentMatrix::from_labels(&labels))?;
    write_evaluation_json(
        &outdir.join("evaluation.json"),
        &EvaluationReport {
            matching_rate_pct: matching,
            category_matching_rate_pct: category,
            k: categories.k,
            n,
        },
    )?;
    println!(
        "one-to-one matching {}% | category matching {}% | chance {}",
        matching,
        category,
        format_percent(chance_level_percent(n))
    );
    println!("wrote evaluation.json to {}", outdir.display());
    Ok(())
}

// --- null ----------------------------------------------------------------------

pub fn cmd_null(args: &NullArgs) -> anyhow::Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    config.apply_overrides(&Overrides {
        outdir: args.outdir.clone(),
        seed: args.seed,
        restarts: None,
    });
    config.validate()?;
    let outdir = config.resolve_outdir();
    ensure_outdir(&outdir)?;

    let mut stage_seeds = BTreeMap::new();
    let inputs = pipeline::load_inputs(&config, None, &mut stage_seeds)?;
    let shuffle_target = match config.null.pairing {
        crate::config::NullPairing::ShuffledReference => &inputs.a,
        crate::config::NullPairing::ShuffledOther => &inputs.b,
    };
    let n = inputs.a.n_stimuli();

    let summary: NullSummary = match args.metric {
        NullMetricArg::PerStimulusMeanR => {
            let shuffles = args
                .shuffles
                .unwrap_or(config.null.per_stimulus_r_shuffles);
            let seed = stage_seed(config.seed, 0, pipeline::stage::NULL_PER_STIMULUS);
            let (summary, _) =
                pipeline::null_per_stimulus(&inputs.a, shuffle_target, None, shuffles, seed)?;
            summary
        }
        NullMetricArg::RdmCorrelation => {
            let shuffles = args
                .shuffles
                .unwrap_or(config.null.rdm_correlation_shuffles);
            let seed = stage_seed(config.seed, 0, pipeline::stage::NULL_RDM);
            let rdm_ref = emalign::structure::build_rdm_with(&inputs.a, config.structure.metric)?;
            pipeline::null_rdm_correlation(
                &inputs.a,
                &rdm_ref,
                shuffle_target,
                &config.structure,
                None,
                shuffles,
                seed,
            )?
        }
        NullMetricArg::MatchingRate | NullMetricArg::CategoryMatchingRate => {
            let shuffles = args
                .shuffles
                .unwrap_or_else(|| config.null.gwot_shuffles_for(n));
            let seed = stage_seed(config.seed, 0, pipeline::stage::NULL_GWOT);
            let categories = cluster_categories(&inputs.a, config.evaluation.k)?;
            let solver_template = SolverConfig {
                n_restarts: config.null.gwot_restarts,
                max_fw_iterations: config.solver.max_fw_iterations,
                convergence_tol: config.solver.convergence_tol,
                base_seed: 0, // set per shuffle
                histogram_match_inputs: false,
            };
            let (matching, category) = pipeline::null_gwot(
                &inputs.a,
                shuffle_target,
                &categories,
                &config.structure,
                &solver_template,
                None,
                shuffles,
                seed,
            )?;
            match args.metric {
                NullMetricArg::MatchingRate => matching,
                _ => category,
            }
        }
    };

    let json_path = outdir.join(format!("null_{}.json", summary.metric_name));
    let csv_path = outdir.join(format!("null_{}_samples.csv", summary.metric_name));
    write_null_json(&json_path, &summary)?;
    write_null_samples_csv(&csv_path, &summary)?;
    let (lo, hi) = summary.interval_95;
    println!(
        "{}: 95% null interval [{lo}, {hi}] from {} shuffles",
        summary.metric_name, summary.n_shuffles
    );
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

// --- pipeline --------------------------------------------------------------------

pub fn cmd_pipeline(args: &PipelineArgs) -> anyhow::Result<()> {
    let mut config = PipelineConfig::load(&args.config)?;
    config.apply_overrides(&Overrides {
        outdir: args.outdir.clone(),
        seed: args.seed,
        restarts: args.restarts,
    });
    config.validate()?;
    let outdir = config.resolve_outdir();

    let report = pipeline::run_pipeline(&config, &outdir)?;

    println!(
        "n stimuli: {} (chance level {})",
        report.n_stimuli, report.chance_level_display
    );
    for scope in &report.scopes {
        let mean_r = scope
            .per_stimulus
            .mean_r
            .map(|r| r.to_string())
            .unwrap_or_else(|| "undefined".to_string());
        println!(
            "[{}] mean r {} | rdm r {} | gwd {} | one-to-one {}% | category {}%",
            scope.scope,
            mean_r,
            scope.rdm_correlation,
            scope.gwd,
            scope.matching_rate_pct,
            scope.category_matching_rate_pct
        );
    }
    if !report.skipped.is_empty() {
        for s in &report.skipped {
            eprintln!("skipped {} in scope {}: {}", s.metric, s.scope, s.reason);
        }
    }
    println!("report: {}", outdir.join("report.json").display());
    Ok(())
}
