//! Subjectivity detection for news sentences.
//!
//! The crate covers the full pipeline around a binary SUBJ/OBJ task:
//!
//! - [`corpus`]: shared-task TSV ingestion, label and length statistics,
//!   anomaly detection and translation-curriculum merging.
//! - [`gateway`]: a chat-completions client with bounded concurrency,
//!   retries, an on-disk response cache and a scriptable mock backend.
//! - [`strategies`]: the three zero-shot prompting strategies (annotation,
//!   doubledown, perspective) and the two-stage verdict parser.
//! - [`calibration`]: temperature scaling, thresholded decisions, class
//!   weights and focal loss over two-class logits.
//! - [`metrics`]: confusion matrices, macro-F1 and baseline reports.
//!
//! The `cli` feature (on by default) adds the `subjscan` binary.

pub mod calibration;
pub mod corpus;
pub mod gateway;
pub mod metrics;
pub mod optimize;
pub mod strategies;

#[cfg(feature = "cli")]
pub mod cli;

pub use corpus::{Corpus, Label, LabeledSentence, Split};
