//! Crate-wide error type. Variants carry enough context to name the offending
//! stimulus, category, or line, since most call sites surface these messages
//! directly to the command line.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A rater submitted no samples for a video they claim to cover.
    #[error("rater {rater_id:?} has an empty sample series for video {video_id:?}")]
    EmptySeries { rater_id: String, video_id: String },

    /// Group splitting requires an even rater count of at least two per category.
    #[error("category {category:?} has {raters} rater(s); need an even count >= 2 to split")]
    UnevenGroup { category: String, raters: usize },

    /// Raters of one group disagree on which stimuli they cover.
    #[error("inconsistent stimulus coverage in {context}: missing {missing:?}")]
    MissingStimuli { context: String, missing: Vec<String> },

    /// An identifier appears twice where uniqueness is required.
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },

    /// A rating fell outside [0, scale].
    #[error("value {value} for {context:?} outside [0, {scale}]")]
    ValueOutOfRange {
        context: String,
        value: f64,
        scale: f64,
    },

    /// A value failed the finiteness check.
    #[error("non-finite value encountered at {context}")]
    NonFinite { context: String },

    /// Model-response text lacks a line for an expected category.
    #[error("response is missing category {category:?}")]
    MissingCategory { category: String },

    /// Model-response text rates the same category twice with different values.
    #[error("category {category:?} rated twice with conflicting values {first} and {second}")]
    ConflictingDuplicate {
        category: String,
        first: f64,
        second: f64,
    },

    /// A response line matched an expected category but its value did not parse.
    #[error("unparseable value on line {line_number}: {line:?}")]
    UnparseableValue { line_number: usize, line: String },

    /// Input file content that does not satisfy the documented format.
    #[error("malformed input: {context}")]
    Malformed { context: String },

    /// Cosine dissimilarity is undefined for all-zero rating rows.
    #[error("all-zero rating rows for stimuli {stimulus_ids:?}; cosine dissimilarity undefined")]
    ZeroRows { stimulus_ids: Vec<String> },

    /// Two structures that must agree in shape or labeling do not.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// Pearson correlation is undefined when one side has zero variance.
    #[error("correlation undefined: {which} input is constant")]
    ConstantInput { which: String },

    /// Fewer observations than the operation needs.
    #[error("{context} needs at least {needed} values, got {got}")]
    TooFewSamples {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    /// A transport plan violated nonnegativity or its marginal constraints.
    #[error("infeasible transport plan: {detail}")]
    InfeasiblePlan { detail: String },

    /// Factorial enumeration is only sane for tiny problems.
    #[error("brute force supports n <= {max}, got n = {n}")]
    TooLargeForBruteForce { n: usize, max: usize },

    /// A configuration value outside its documented domain.
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },

    /// A stimulus id that a category assignment does not cover.
    #[error("stimulus {id:?} has no category assignment")]
    UnmappedStimulus { id: String },

    /// Matching rates are undefined for a plan row with no mass.
    #[error("transport plan row {row} is all zeros; argmax undefined")]
    EmptyPlanRow { row: usize },

    /// A metric failed while evaluating a null shuffle; carries the shuffle index.
    #[error("null-model metric failed at shuffle {index}: {source}")]
    NullShuffle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical procedures on well-formed inputs, as
    /// opposed to malformed inputs or I/O problems. The CLI maps these to a
    /// distinct exit code.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ConstantInput { .. }
            | Error::InfeasiblePlan { .. }
            | Error::EmptyPlanRow { .. } => true,
            Error::NullShuffle { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
