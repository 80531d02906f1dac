//! Hierarchical image-caption evaluation over precomputed embeddings.
//!
//! A caption is scored against its image at two levels. Globally, the whole
//! image embedding is compared with the sentence embedding (gITC). Locally,
//! the embeddings of segmented image regions are matched against the
//! embeddings of subject-predicate-object phrases parsed from the caption;
//! precision measures how much of the caption is grounded in the image,
//! recall how much of the image the caption covers, and their harmonic mean
//! gives lITC. The reference-free score fuses gITC and lITC; when human
//! references are available the same construction between references and
//! candidate (gTTC, lTTC) joins the fusion.
//!
//! ```
//! use hice_core::{similarity::harmonic_mean, scoring::hice_score};
//! assert_eq!(harmonic_mean(&[0.5, 0.5]), 0.5);
//! # let _ = hice_score;
//! ```

pub mod benchmark;
pub mod bundle_io;
pub mod error;
pub mod model;
pub mod parallel;
pub mod report;
pub mod scoring;
pub mod similarity;
pub mod triplets;

pub use error::{BenchmarkError, BundleError, ReportError, ScoreError};
pub use model::{
    validate_bundle, Embedding, EvalBundle, PhraseEntry, RegionEntry, TextSide, ValidationIssue,
};
pub use parallel::Execution;
pub use scoring::{hice_score, ref_hice_score, AblationMode, ScoreBreakdown};
pub use triplets::{extract_triplets, render_phrase, Triplet};
