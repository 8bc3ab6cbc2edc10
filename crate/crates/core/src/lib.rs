//! Matryoshka concept bottleneck models at desk scale.
//!
//! The crate is organised along the pipeline it implements:
//!
//! - [`data`]: concept datasets (CSV / CUB attribute files), a synthetic generator
//!   with planted geometric level structure, and reproducible splits.
//! - [`info`]: plug-in mutual information and the greedy mRMR concept ordering.
//! - [`model`]: linear concept encoder with nested prediction heads, either one
//!   head per nesting level (standard) or one shared masked matrix (efficient).
//! - [`intervene`]: test-time intervention simulation, Accuracy@k curves,
//!   minimal sufficient levels and geometric-decay fitting.
//! - [`theory`]: cost-regime classification and simulation, and the
//!   Hellman-Raviv style intervention error bound.
//! - [`cli`]: the `mcbm` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod info;
pub mod intervene;
pub mod math;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
