//! Quantify how similar two "emotion structures" are.
//!
//! An emotion structure is the geometry of a stimulus-by-category rating
//! matrix: each stimulus (a video, say) is a point in category space, and the
//! structure is the pattern of pairwise dissimilarities between those points.
//! This crate compares two such structures along two complementary routes:
//!
//! * **Supervised** ([`rsa`]): with the stimulus correspondence fixed, Pearson
//!   correlations per stimulus and between the upper triangles of the two
//!   dissimilarity matrices.
//! * **Unsupervised** ([`gwot`]): with the correspondence unknown, Gromov-
//!   Wasserstein optimal transport searches for the coupling between the two
//!   stimulus sets that best preserves pairwise dissimilarity, and the
//!   resulting plan is scored by one-to-one and category [matching rates](evaluation).
//!
//! Significance is assessed against a shuffled-ratings control ([`nullmodel`]):
//! severing the stimulus-to-rating pairing and re-running a metric yields a
//! null distribution summarized by a 95% percentile interval.
//!
//! [`ingest`] loads and validates rating data, [`structure`] builds
//! dissimilarity matrices and equalizes their value distributions, and
//! [`synth`] generates planted-category datasets for tests and demos.

pub mod error;
pub mod evaluation;
pub mod gwot;
pub mod ingest;
pub mod nullmodel;
pub mod rsa;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
