//! Declarative pipeline configuration: a single TOML file with nested
//! sections. CLI flags override config keys; for the output directory the
//! full precedence is flag > config > $EMALIGN_OUTDIR > ./out.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use emalign::structure::Dissimilarity;

/// Environment variable supplying the default output directory.
pub const OUTDIR_ENV: &str = "EMALIGN_OUTDIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Single global seed; every randomized stage derives its own seed from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outdir: Option<PathBuf>,
    pub inputs: InputsConfig,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub null: NullSection,
}

/// Where the two rating matrices come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InputsConfig {
    /// Two pre-averaged rating matrices over the same stimulus set.
    #[serde(rename = "rating_csv")]
    RatingCsv {
        path_a: PathBuf,
        path_b: PathBuf,
        scale: f64,
    },
    /// Raw per-rater records, split into two balanced groups and averaged
    /// into one matrix per group.
    #[serde(rename = "rater_records")]
    RaterRecords {
        records: PathBuf,
        scale: f64,
        /// Seed for the rater split; derived from the global seed if absent.
        #[serde(default)]
        split_seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    pub metric: Dissimilarity,
    /// Equalize the two RDMs' value distributions before alignment.
    pub histogram_match: bool,
    pub histogram_match_direction: MatchDirection,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            metric: Dissimilarity::Cosine,
            histogram_match: true,
            histogram_match_direction: MatchDirection::BToA,
        }
    }
}

/// Which RDM gets rewritten: `b_to_a` rewrites the second input's values onto
/// the first's distribution, so the reference keeps its geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchDirection {
    #[serde(rename = "b_to_a")]
    BToA,
    #[serde(rename = "a_to_b")]
    AToB,
}

impl fmt::Display for MatchDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchDirection::BToA => "b_to_a",
            MatchDirection::AToB => "a_to_b",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Random restarts; absent means the size-based schedule
    /// (10,000 / 1,000 / 200 by stimulus count).
    pub n_restarts: Option<usize>,
    pub max_fw_iterations: usize,
    pub convergence_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            n_restarts: None,
            max_fw_iterations: 1000,
            convergence_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Cluster count for the category structure, derived from the first input.
    pub k: usize,
    /// Optional top-K subset scopes (e.g. [100, 250]); each re-runs the whole
    /// comparison on the K best-correlated stimuli.
    pub top_k: Vec<usize>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            k: 10,
            top_k: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NullSection {
    pub per_stimulus_r_shuffles: usize,
    pub rdm_correlation_shuffles: usize,
    /// Shuffles for the transport-based nulls; absent means 10 when the
    /// stimulus count is at most 500 and 1 above that (each shuffle costs a
    /// full multi-restart solve).
    pub gwot_shuffles: Option<usize>,
    /// Solver restarts per transport-null shuffle.
    pub gwot_restarts: usize,
    pub pairing: NullPairing,
}

impl Default for NullSection {
    fn default() -> Self {
        NullSection {
            per_stimulus_r_shuffles: 100,
            rdm_correlation_shuffles: 100,
            gwot_shuffles: None,
            gwot_restarts: 100,
            pairing: NullPairing::ShuffledReference,
        }
    }
}

impl NullSection {
    /// Resolved transport-null shuffle count for a given stimulus count.
    pub fn gwot_shuffles_for(&self, n: usize) -> usize {
        self.gwot_shuffles
            .unwrap_or(if n <= 500 { 10 } else { 1 })
    }
}

/// Which matrix gets shuffled when building null distributions. Both sides of
/// the comparison are supported; the report records the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullPairing {
    /// Compare the reference against a shuffled copy of itself.
    #[serde(rename = "reference_vs_shuffled_reference")]
    ShuffledReference,
    /// Compare the reference against a shuffled copy of the second input.
    #[serde(rename = "reference_vs_shuffled_other")]
    ShuffledOther,
}

impl fmt::Display for NullPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullPairing::ShuffledReference => "reference_vs_shuffled_reference",
            NullPairing::ShuffledOther => "reference_vs_shuffled_other",
        })
    }
}

/// CLI-flag overrides; each one, when present, replaces the config value.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub outdir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: PipelineConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, overrides: &Overrides) {
        if let Some(dir) = &overrides.outdir {
            self.outdir = Some(dir.clone());
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(restarts) = overrides.restarts {
            self.solver.n_restarts = Some(restarts);
        }
    }

    /// Everything checkable before data is loaded. `k` and the `top_k` values
    /// are re-checked against the actual stimulus count once inputs are read.
    pub fn validate(&self) -> anyhow::Result<()> {
        match &self.inputs {
            InputsConfig::RatingCsv {
                path_a,
                path_b,
                scale,
            } => {
                for path in [path_a, path_b] {
                    if !path.exists() {
                        bail!("input file {} does not exist", path.display());
                    }
                }
                check_scale(*scale)?;
            }
            InputsConfig::RaterRecords { records, scale, .. } => {
                if !records.exists() {
                    bail!("records file {} does not exist", records.display());
                }
                check_scale(*scale)?;
            }
        }
        if self.solver.n_restarts == Some(0) {
            bail!("solver.n_restarts must be positive");
        }
        if self.solver.max_fw_iterations == 0 {
            bail!("solver.max_fw_iterations must be positive");
        }
        if !(self.solver.convergence_tol > 0.0) {
            bail!("solver.convergence_tol must be positive");
        }
        if self.evaluation.k < 2 {
            bail!("evaluation.k must be at least 2");
        }
        for &k in &self.evaluation.top_k {
            if k == 0 {
                bail!("evaluation.top_k entries must be positive");
            }
        }
        if self.null.per_stimulus_r_shuffles == 0 {
            bail!("null.per_stimulus_r_shuffles must be positive");
        }
        if self.null.rdm_correlation_shuffles == 0 {
            bail!("null.rdm_correlation_shuffles must be positive");
        }
        if self.null.gwot_shuffles == Some(0) {
            bail!("null.gwot_shuffles must be positive");
        }
        if self.null.gwot_restarts == 0 {
            bail!("null.gwot_restarts must be positive");
        }
        Ok(())
    }

    /// Output directory after `apply_overrides`: config value if set,
    /// otherwise $EMALIGN_OUTDIR, otherwise ./out.
    pub fn resolve_outdir(&self) -> PathBuf {
        self.outdir.clone().unwrap_or_else(default_outdir)
    }
}

fn check_scale(scale: f64) -> anyhow::Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        bail!("inputs.scale must be a positive finite number");
    }
    Ok(())
}

/// Outdir resolution for subcommands without a config file:
/// flag > $EMALIGN_OUTDIR > ./out.
pub fn resolve_outdir_flag(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(default_outdir)
}

fn default_outdir() -> PathBuf {
    std::env::var_os(OUTDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}
