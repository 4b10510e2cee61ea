//! Desk-scale contrastive-learning workbench.
//!
//! Implements metadata-driven positive-pair selection and hard-negative
//! strategies for MoCo-style pretraining on synthetic chest-X-ray-like
//! cohorts, plus the evaluation protocol (linear probe / end-to-end
//! fine-tuning on repeated small labeled splits, kNN checkpoint selection,
//! AUC reporting) needed to compare pairing criteria.
//!
//! Module map:
//! - [`cohort`]: synthetic cohort generation and CSV/blob ingestion.
//! - [`pair_index`]: metadata index, candidate sets `S_c(x)`, size control,
//!   label-conflict statistics.
//! - [`augment`]: restricted augmentation set (flip / small rotation /
//!   high-scale crop) and positive-pair view construction.
//! - [`engine`]: encoders, momentum update, negative queue, InfoNCE with
//!   weighted negatives, negative-selection strategies, training loop.
//! - [`eval`]: splits, kNN checkpoint selection, AUC, linear probe and
//!   end-to-end fine-tuning.
//! - [`config`] / [`runner`]: run configuration files and the experiment
//!   commands behind the CLI.

pub mod augment;
pub mod cohort;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod pair_index;
pub mod pixels;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
