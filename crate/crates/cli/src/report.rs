//! The end-of-run report: every measured metric plus enough provenance to
//! reproduce the run. Serialized as JSON with no timestamps, so a rerun with
//! the same config and seed is byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub n_stimuli: usize,
    /// Theoretical one-to-one chance level, 100/n percent.
    pub chance_level_pct: f64,
    /// The same value rounded to three significant figures for display.
    pub chance_level_display: String,
    /// One entry per evaluation scope: the full stimulus set first, then each
    /// top-K subset in config order.
    pub scopes: Vec<ScopeReport>,
    /// Metrics that were requested but could not be computed, with reasons.
    pub skipped: Vec<SkippedMetric>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    /// SHA-256 over the resolved configuration (after flag overrides).
    pub config_sha256: String,
    pub base_seed: u64,
    /// Derived per-stage seeds, keyed "scope/stage".
    pub stage_seeds: BTreeMap<String, u64>,
    pub histogram_match: bool,
    pub histogram_match_direction: String,
    pub null_pairing: String,
    /// All-zero stimulus rows removed before analysis.
    pub dropped_stimuli: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScopeReport {
    /// "all", or "top_<K>" for subset scopes.
    pub scope: String,
    pub n: usize,
    pub per_stimulus: PerStimulusBlock,
    pub rdm_correlation: f64,
    pub gwd: f64,
    pub solver: SolverBlock,
    pub matching_rate_pct: f64,
    pub category_matching_rate_pct: f64,
    pub k: usize,
    /// Whether histogram matching took the quantile-interpolation fallback;
    /// absent when matching was disabled.
    pub histogram_interpolated: Option<bool>,
    pub nulls: Vec<NullBlock>,
    /// Effect size of the observed per-stimulus correlations against the
    /// pooled null ones; absent (with a `skipped` entry) when undefined.
    pub cohens_d_per_stimulus_r: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerStimulusBlock {
    /// Mean over the defined per-stimulus correlations; absent if every row
    /// was undefined.
    pub mean_r: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverBlock {
    pub n_restarts: usize,
    pub n_converged: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullBlock {
    pub metric: String,
    pub n_shuffles: usize,
    /// (2.5th, 97.5th) percentiles of the null samples.
    pub interval_95: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedMetric {
    pub metric: String,
    pub scope: String,
    pub reason: String,
}

impl RunReport {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}
