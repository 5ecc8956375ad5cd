//! Core library for a multilingual personality recognition lab.
//!
//! The pipeline covers corpus handling with stratified splits, LLM-driven
//! translation augmentation (TOGA/PIGA) with label-leakage auditing,
//! linguistic metrics, a small reverse-mode autodiff engine, the CLAD
//! composite distillation loss, training protocols, evaluation statistics,
//! and embedding probes.

pub mod augment;
pub mod clad;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod grad;
pub mod linguistics;
pub mod par;
pub mod probe;
pub mod train;

pub use error::{Error, Result};
