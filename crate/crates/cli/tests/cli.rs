//! End-to-end checks of the `emalign` binary: artifact layout, stdout/stderr
//! contracts, exit codes, output-directory resolution, and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn emalign() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emalign"));
    // Tests control the output directory explicitly; a leaking environment
    // default would redirect artifacts somewhere the assertions don't look.
    cmd.env_remove("EMALIGN_OUTDIR");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn emalign");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

/// Every file under `dir`, relative to it, sorted.
fn file_tree(dir: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).expect("read_dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(&path, base, out);
            } else {
                out.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn assert_trees_identical(a: &Path, b: &Path) {
    let files_a = file_tree(a);
    let files_b = file_tree(b);
    assert_eq!(files_a, files_b, "directory listings differ");
    for rel in &files_a {
        let bytes_a = fs::read(a.join(rel)).unwrap();
        let bytes_b = fs::read(b.join(rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{} differs between runs", rel.display());
    }
}

fn synth(dir: &Path, stimuli: usize, categories: usize, dims: usize, seed: u64) {
    run_ok(
        emalign()
            .args(["synth", "--stimuli", &stimuli.to_string()])
            .args(["--categories", &categories.to_string()])
            .args(["--dims", &dims.to_string()])
            .args(["--seed", &seed.to_string()])
            .arg("-o")
            .arg(dir),
    );
}

// --- synth -----------------------------------------------------------------

#[test]
fn synth_writes_dataset_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let d1 = tmp.path().join("d1");
    let d2 = tmp.path().join("d2");
    synth(&d1, 24, 4, 6, 11);
    synth(&d2, 24, 4, 6, 11);

    for name in ["view1.csv", "view2.csv", "true_categories.csv"] {
        assert!(d1.join(name).exists(), "missing {name}");
    }
    let view1 = emalign::ingest::read_rating_csv(&d1.join("view1.csv"), 9.0).unwrap();
    assert_eq!(view1.n_stimuli(), 24);
    assert_eq!(view1.n_categories(), 6);
    let cats = emalign::evaluation::read_category_csv(&d1.join("true_categories.csv")).unwrap();
    assert_eq!(cats.k, 4);
    assert_eq!(cats.stimulus_ids.len(), 24);

    assert_trees_identical(&d1, &d2);
}

// --- rdm -------------------------------------------------------------------

#[test]
fn rdm_drops_zero_rows_and_writes_zero_diagonal() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("ratings.csv");
    fs::write(
        &input,
        "stimulus_id,joy,fear,calm\n\
         s0,3,1,0.5\n\
         s1,0,0,0\n\
         s2,1,4,2\n\
         s3,2,2,5\n",
    )
    .unwrap();
    let outdir = tmp.path().join("out");
    let out = run_ok(
        emalign()
            .args(["rdm", "--scale", "9"])
            .arg("--input")
            .arg(&input)
            .arg("-o")
            .arg(&outdir),
    );

    assert!(stderr(&out).contains("dropping all-zero stimulus row: s1"));
    assert!(stdout(&out).contains("3x3"));
    assert!(stdout(&out).contains("1 zero rows dropped"));

    let rdm = emalign::structure::read_rdm_csv(&outdir.join("rdm.csv")).unwrap();
    assert_eq!(rdm.stimulus_ids, vec!["s0", "s2", "s3"]);
    for i in 0..3 {
        assert_eq!(rdm.values[(i, i)], 0.0);
        for j in 0..3 {
            assert_eq!(rdm.values[(i, j)], rdm.values[(j, i)]);
        }
    }
    assert!(outdir.join("rdm.json").exists());
}

// --- rsa -------------------------------------------------------------------

#[test]
fn rsa_of_identical_inputs_reports_unit_correlation() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("ratings.csv");
    fs::write(
        &input,
        "stimulus_id,joy,fear,calm,awe\n\
         s0,3,1,0.5,2\n\
         s1,1,4,2,0.5\n\
         s2,2,2,5,1\n\
         s3,0.5,3,1,4\n",
    )
    .unwrap();
    let outdir = tmp.path().join("out");
    run_ok(
        emalign()
            .args(["rsa", "--scale", "9"])
            .arg("--input-a")
            .arg(&input)
            .arg("--input-b")
            .arg(&input)
            .arg("-o")
            .arg(&outdir),
    );

    let rsa = read_json(&outdir.join("rsa.json"));
    assert!((rsa["mean_r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(rsa["n_defined"], 4);
    assert_eq!(rsa["n_undefined"], 0);

    let csv = fs::read_to_string(outdir.join("per_stimulus_r.csv")).unwrap();
    assert!(csv.starts_with("stimulus_id,r\n"));
    assert_eq!(csv.lines().count(), 5);
}

// --- gwot + evaluate ---------------------------------------------------------

#[test]
fn gwot_self_alignment_recovers_identity_and_evaluate_scores_it() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 12, 3, 8, 3);

    let rdm_dir = tmp.path().join("rdm");
    run_ok(
        emalign()
            .args(["rdm", "--scale", "9"])
            .arg("--input")
            .arg(data.join("view1.csv"))
            .arg("-o")
            .arg(&rdm_dir),
    );

    let solve = |dir: &Path| {
        run_ok(
            emalign()
                .args(["gwot", "--restarts", "60", "--seed", "4"])
                .arg("--rdm-a")
                .arg(rdm_dir.join("rdm.csv"))
                .arg("--rdm-b")
                .arg(rdm_dir.join("rdm.csv"))
                .arg("-o")
                .arg(dir),
        )
    };
    let g1 = tmp.path().join("g1");
    let g2 = tmp.path().join("g2");
    solve(&g1);
    solve(&g2);
    assert_trees_identical(&g1, &g2);

    // Aligning a structure with itself: the identity permutation reaches
    // exactly zero, so the solver must end at (numerically) zero.
    let (plan, row_ids, col_ids) =
        emalign::gwot::read_plan_csv(&g1.join("plan.csv")).unwrap();
    assert_eq!(row_ids, col_ids);
    plan.validate().unwrap();
    let log = fs::read_to_string(g1.join("solver_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 60);

    let eval_dir = tmp.path().join("eval");
    let out = run_ok(
        emalign()
            .arg("evaluate")
            .arg("--plan")
            .arg(g1.join("plan.csv"))
            .arg("--categories")
            .arg(data.join("true_categories.csv"))
            .arg("-o")
            .arg(&eval_dir),
    );
    assert!(stdout(&out).contains("one-to-one matching 100%"));
    assert!(stdout(&out).contains("category matching 100%"));

    let eval = read_json(&eval_dir.join("evaluation.json"));
    assert_eq!(eval["matching_rate_pct"], 100.0);
    assert_eq!(eval["category_matching_rate_pct"], 100.0);
    assert_eq!(eval["n"], 12);
}

// --- null --------------------------------------------------------------------

fn write_rating_csv_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let config = dir.join("config.toml");
    fs::write(
        &config,
        format!(
            "seed = 5\n\
             [inputs]\n\
             kind = \"rating_csv\"\n\
             path_a = {:?}\n\
             path_b = {:?}\n\
             scale = 9.0\n\
             {extra}",
            data.join("view1.csv"),
            data.join("view2.csv"),
        ),
    )
    .unwrap();
    config
}

#[test]
fn null_rejects_unknown_metric_listing_valid_names() {
    let out = emalign()
        .args(["null", "-c", "config.toml", "--metric", "bogus"])
        .output()
        .expect("spawn emalign");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for name in [
        "per_stimulus_mean_r",
        "rdm_correlation",
        "matching_rate",
        "category_matching_rate",
    ] {
        assert!(err.contains(name), "stderr does not list {name}:\n{err}");
    }
}

#[test]
fn null_single_shuffle_gives_degenerate_interval() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 9, 3, 5, 21);
    let config = write_rating_csv_config(
        tmp.path(),
        &data,
        "[evaluation]\nk = 3\n[null]\ngwot_restarts = 20\n",
    );

    let outdir = tmp.path().join("null");
    let out = run_ok(
        emalign()
            .args(["null", "--metric", "matching_rate", "--shuffles", "1"])
            .arg("-c")
            .arg(&config)
            .arg("-o")
            .arg(&outdir),
    );
    assert!(stdout(&out).contains("matching_rate: 95% null interval"));

    let null = read_json(&outdir.join("null_matching_rate.json"));
    assert_eq!(null["n_shuffles"], 1);
    let samples = null["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(null["lo"], samples[0]);
    assert_eq!(null["hi"], samples[0]);

    let csv = fs::read_to_string(outdir.join("null_matching_rate_samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus one sample:\n{csv}");
}

#[test]
fn null_rdm_correlation_writes_summary_and_samples() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 15, 3, 6, 8);
    let config = write_rating_csv_config(tmp.path(), &data, "");

    let outdir = tmp.path().join("null");
    run_ok(
        emalign()
            .args(["null", "--metric", "rdm_correlation", "--shuffles", "12"])
            .arg("-c")
            .arg(&config)
            .arg("-o")
            .arg(&outdir),
    );

    let null = read_json(&outdir.join("null_rdm_correlation.json"));
    assert_eq!(null["metric"], "rdm_correlation");
    assert_eq!(null["n_shuffles"], 12);
    assert_eq!(null["samples"].as_array().unwrap().len(), 12);
    let lo = null["lo"].as_f64().unwrap();
    let hi = null["hi"].as_f64().unwrap();
    assert!(lo <= hi);
    assert!((-1.0..=1.0).contains(&lo) && (-1.0..=1.0).contains(&hi));
}

// --- pipeline ----------------------------------------------------------------

const SMALL_PIPELINE_SECTIONS: &str = "[solver]\n\
     n_restarts = 40\n\
     [evaluation]\n\
     k = 4\n\
     top_k = [10]\n\
     [null]\n\
     per_stimulus_r_shuffles = 5\n\
     rdm_correlation_shuffles = 5\n\
     gwot_shuffles = 2\n\
     gwot_restarts = 10\n";

#[test]
fn pipeline_writes_report_and_scope_artifacts() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 20, 4, 6, 13);
    let config = write_rating_csv_config(tmp.path(), &data, SMALL_PIPELINE_SECTIONS);

    let outdir = tmp.path().join("run");
    let out = run_ok(emalign().args(["pipeline"]).arg("-c").arg(&config).arg("-o").arg(&outdir));
    let text = stdout(&out);
    assert!(text.contains("[all]"), "missing all-scope line:\n{text}");
    assert!(text.contains("[top_10]"), "missing top-10 line:\n{text}");
    assert!(text.contains("chance level 5.00%"), "n=20 chance:\n{text}");
    assert!(!outdir.join("FAILED").exists());

    for name in [
        "report.json",
        "categories.csv",
        "per_stimulus_r.csv",
        "rsa.json",
        "rdm_a.csv",
        "rdm_b.csv",
        "rdm_matched.csv",
        "plan.csv",
        "plan.json",
        "solver_log.jsonl",
        "evaluation.json",
        "null_per_stimulus_mean_r.json",
        "null_rdm_correlation.json",
        "null_matching_rate.json",
        "null_category_matching_rate.json",
        "top_10/plan.csv",
        "top_10/evaluation.json",
    ] {
        assert!(outdir.join(name).exists(), "missing artifact {name}");
    }

    let report = read_json(&outdir.join("report.json"));
    assert_eq!(report["n_stimuli"], 20);
    let scopes = report["scopes"].as_array().unwrap();
    assert_eq!(scopes.len(), 2);
    assert_eq!(scopes[0]["scope"], "all");
    assert_eq!(scopes[0]["n"], 20);
    assert_eq!(scopes[1]["scope"], "top_10");
    assert_eq!(scopes[1]["n"], 10);
    for scope in scopes {
        for rate in ["matching_rate_pct", "category_matching_rate_pct"] {
            let v = scope[rate].as_f64().unwrap();
            assert!((0.0..=100.0).contains(&v), "{rate} out of range: {v}");
        }
        assert_eq!(scope["nulls"].as_array().unwrap().len(), 4);
    }
    let provenance = &report["provenance"];
    assert_eq!(provenance["base_seed"], 5);
    assert!(provenance["config_sha256"].as_str().unwrap().len() == 64);
    assert!(provenance["stage_seeds"]["all/solve"].is_u64());
}

#[test]
fn pipeline_rater_records_inputs_write_split_artifacts() {
    let tmp = TempDir::new().unwrap();
    let records = tmp.path().join("records.csv");
    let mut csv = String::from("rater_id,category,stimulus_id,t_index,value\n");
    // Four raters, three emotion categories, eight stimuli, two samples per
    // series; stimulus v0 is rated zero by everyone and must be dropped.
    for rater in 0..4 {
        for cat in ["joy", "fear", "calm"] {
            for stim in 0..8 {
                for t in 0..2 {
                    let value = if stim == 0 {
                        0.0
                    } else {
                        // Deterministic rating-like values in (0, 9).
                        let h = (rater * 131 + stim * 17 + t * 7) % 70;
                        let base = match cat {
                            "joy" => stim as f64 * 0.9,
                            "fear" => (8 - stim) as f64 * 0.8,
                            _ => 2.0 + (stim % 3) as f64,
                        };
                        (base + h as f64 / 35.0).min(9.0)
                    };
                    csv.push_str(&format!("r{rater},{cat},v{stim},{t},{value}\n"));
                }
            }
        }
    }
    fs::write(&records, csv).unwrap();

    let config = tmp.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "seed = 9\n\
             [inputs]\n\
             kind = \"rater_records\"\n\
             records = {records:?}\n\
             scale = 9.0\n\
             [solver]\n\
             n_restarts = 40\n\
             [evaluation]\n\
             k = 3\n\
             [null]\n\
             per_stimulus_r_shuffles = 4\n\
             rdm_correlation_shuffles = 4\n\
             gwot_shuffles = 1\n\
             gwot_restarts = 10\n"
        ),
    )
    .unwrap();

    let outdir = tmp.path().join("run");
    let out = run_ok(emalign().args(["pipeline"]).arg("-c").arg(&config).arg("-o").arg(&outdir));
    assert!(stderr(&out).contains("dropping all-zero stimulus row: v0"));

    let split = read_json(&outdir.join("split.json"));
    let group1 = split["group1"].as_array().unwrap();
    let group2 = split["group2"].as_array().unwrap();
    assert_eq!(group1.len(), 6, "two raters per category on each side");
    assert_eq!(group2.len(), 6);

    let g1 = emalign::ingest::read_rating_csv(&outdir.join("group1.csv"), 9.0).unwrap();
    assert_eq!(g1.n_stimuli(), 8, "group averages keep the zero row on disk");

    let report = read_json(&outdir.join("report.json"));
    assert_eq!(report["n_stimuli"], 7);
    assert_eq!(report["provenance"]["dropped_stimuli"].as_array().unwrap()[0], "v0");
    assert!(report["provenance"]["stage_seeds"]["all/split"].is_u64());
}

#[test]
fn pipeline_mismatched_inputs_fail_with_stage_marker() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "stimulus_id,x,y\ns0,1,2\ns1,3,1\ns2,2,4\n").unwrap();
    fs::write(&b, "stimulus_id,x,y\nt0,1,2\nt1,3,1\nt2,2,4\n").unwrap();
    let config = tmp.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "[inputs]\nkind = \"rating_csv\"\npath_a = {a:?}\npath_b = {b:?}\nscale = 9.0\n\
             [evaluation]\nk = 3\n"
        ),
    )
    .unwrap();

    let outdir = tmp.path().join("run");
    let out = emalign()
        .args(["pipeline"])
        .arg("-c")
        .arg(&config)
        .arg("-o")
        .arg(&outdir)
        .output()
        .expect("spawn emalign");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("load_inputs"));

    let marker = fs::read_to_string(outdir.join("FAILED")).unwrap();
    assert!(marker.contains("stage: load_inputs"), "marker:\n{marker}");
    assert!(marker.contains("same stimuli"), "marker:\n{marker}");
}

#[test]
fn pipeline_constant_structure_fails_with_numerical_exit_code() {
    let tmp = TempDir::new().unwrap();
    // Orthogonal one-hot rating rows: every off-diagonal dissimilarity is
    // exactly 1, so the RDM correlation is undefined (zero variance).
    let n = 12;
    let mut csv = String::from("stimulus_id");
    for d in 0..n {
        csv.push_str(&format!(",c{d}"));
    }
    csv.push('\n');
    for i in 0..n {
        csv.push_str(&format!("s{i}"));
        for d in 0..n {
            csv.push_str(if d == i { ",5" } else { ",0" });
        }
        csv.push('\n');
    }
    let input = tmp.path().join("onehot.csv");
    fs::write(&input, csv).unwrap();

    let config = tmp.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "[inputs]\nkind = \"rating_csv\"\npath_a = {input:?}\npath_b = {input:?}\nscale = 9.0\n\
             [evaluation]\nk = 3\n"
        ),
    )
    .unwrap();

    let outdir = tmp.path().join("run");
    let out = emalign()
        .args(["pipeline"])
        .arg("-c")
        .arg(&config)
        .arg("-o")
        .arg(&outdir)
        .output()
        .expect("spawn emalign");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));

    let marker = fs::read_to_string(outdir.join("FAILED")).unwrap();
    assert!(marker.contains("stage: all/rdm"), "marker:\n{marker}");
}

#[test]
fn pipeline_rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 20, 4, 6, 13);
    let config = write_rating_csv_config(tmp.path(), &data, SMALL_PIPELINE_SECTIONS);

    let r1 = tmp.path().join("r1");
    let r2 = tmp.path().join("r2");
    run_ok(emalign().args(["pipeline"]).arg("-c").arg(&config).arg("-o").arg(&r1));
    run_ok(emalign().args(["pipeline"]).arg("-c").arg(&config).arg("-o").arg(&r2));
    assert_trees_identical(&r1, &r2);
}

// --- output-directory resolution ----------------------------------------------

#[test]
fn outdir_resolution_prefers_flag_then_config_then_env_then_default() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("ratings.csv");
    fs::write(
        &input,
        "stimulus_id,x,y\ns0,1,2\ns1,3,1\ns2,2,4\ns3,4,3\n",
    )
    .unwrap();

    // Environment default applies when no flag is given.
    let env_dir = tmp.path().join("from_env");
    run_ok(
        emalign()
            .env("EMALIGN_OUTDIR", &env_dir)
            .args(["rdm", "--scale", "9"])
            .arg("--input")
            .arg(&input),
    );
    assert!(env_dir.join("rdm.csv").exists());

    // The flag beats the environment.
    let flag_dir = tmp.path().join("from_flag");
    run_ok(
        emalign()
            .env("EMALIGN_OUTDIR", tmp.path().join("ignored"))
            .args(["rdm", "--scale", "9"])
            .arg("--input")
            .arg(&input)
            .arg("-o")
            .arg(&flag_dir),
    );
    assert!(flag_dir.join("rdm.csv").exists());
    assert!(!tmp.path().join("ignored").exists());

    // With neither flag nor environment, ./out under the working directory.
    let cwd = tmp.path().join("cwd");
    fs::create_dir(&cwd).unwrap();
    run_ok(
        emalign()
            .current_dir(&cwd)
            .args(["rdm", "--scale", "9"])
            .arg("--input")
            .arg(&input),
    );
    assert!(cwd.join("out/rdm.csv").exists());

    // A pipeline config's own outdir beats the environment but loses to the flag.
    let data = tmp.path().join("data");
    synth(&data, 12, 3, 5, 2);
    let cfg_dir = tmp.path().join("from_config");
    let config = tmp.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "seed = 3\noutdir = {cfg_dir:?}\n\
             [inputs]\nkind = \"rating_csv\"\n\
             path_a = {:?}\npath_b = {:?}\nscale = 9.0\n\
             [solver]\nn_restarts = 30\n\
             [evaluation]\nk = 3\n\
             [null]\nper_stimulus_r_shuffles = 2\nrdm_correlation_shuffles = 2\n\
             gwot_shuffles = 1\ngwot_restarts = 5\n",
            data.join("view1.csv"),
            data.join("view2.csv"),
        ),
    )
    .unwrap();
    run_ok(
        emalign()
            .env("EMALIGN_OUTDIR", tmp.path().join("ignored2"))
            .args(["pipeline"])
            .arg("-c")
            .arg(&config),
    );
    assert!(cfg_dir.join("report.json").exists());
    assert!(!tmp.path().join("ignored2").exists());

    let flag_over_config = tmp.path().join("flag_over_config");
    run_ok(
        emalign()
            .args(["pipeline"])
            .arg("-c")
            .arg(&config)
            .arg("-o")
            .arg(&flag_over_config),
    );
    assert!(flag_over_config.join("report.json").exists());
}
