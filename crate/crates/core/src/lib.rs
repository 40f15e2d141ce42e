//! Completeness checking of data processing agreements (DPAs) against a
//! catalog of regulatory provisions.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`preprocess`] splits a DPA into sentences, tokenizes them and replaces
//!    party names with the generic `PROCESSOR` / `CONTROLLER` roles.
//! 2. [`embedding`] looks up a dense vector for every sentence through an
//!    [`embedding::EmbeddingProvider`] (a binary store file or an HTTP service).
//! 3. [`classifiers`] trains logistic regression, a linear SVM, a random
//!    forest, an MLP or a BiLSTM over those vectors, either as one binary
//!    model per provision or as a single multi-class model.
//! 4. Each sentence is classified.
//! 5. [`checker`] turns sentence predictions into per-provision
//!    satisfied/violated verdicts and renders a report.
//!
//! [`balance`] handles class imbalance and augmentation, [`fewshot`] trains a
//! contrastive few-shot classifier, and [`eval`] computes provision-level
//! metrics, Cohen's kappa and runtime tables.
//!
//! Data-parallel loops (per-provision training, forest trees, grid cells,
//! augmentation, nearest-neighbour scans) use rayon when the `parallel`
//! feature is enabled (the default) and plain iterators otherwise. Results
//! are identical either way.

pub mod balance;
pub mod checker;
pub mod classifiers;
pub mod corpus;
pub mod digest;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

/// Version string embedded in reports and manifests.
pub const TOOL_VERSION: &str = concat!("dpacheck ", env!("CARGO_PKG_VERSION"));
