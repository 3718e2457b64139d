//! Illumination-robust face verification.
//!
//! The pipeline runs in four stages: photometric normalization ([`imaging`],
//! [`ingi`]), subspace feature extraction ([`subspace`]), per-classifier match
//! scoring ([`scoring`]) and score fusion ([`fusion`]). [`evaluation`] runs the
//! verification protocol and [`commands`] wires everything into the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod imaging;
pub mod ingi;
pub mod linalg;
pub mod persist;
pub mod scoring;
pub mod subspace;

pub use error::{Error, Result};
pub use imaging::{Image, Landmarks};
