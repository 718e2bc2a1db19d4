//! Law-level diagnostics for ensembles of periodic velocity fields.
//!
//! The crate measures spectral coverage, Wasserstein stability, rollout error
//! growth, sampler path regularity, hierarchy residuals and distributional
//! scores, and checks each of the inequalities that relate them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod certify;
pub mod ensemble;
pub mod error;
pub mod euler;
pub mod fields;
pub mod io;
pub mod par;
pub mod report;
pub mod rollout;
pub mod sampler;
pub mod scores;
pub mod stream;
pub mod suite;
pub mod transport;

pub use ensemble::{Ensemble, LawCurve};
pub use error::{Error, Result};
pub use fields::{Grid, GridField, SpecField};
pub use nalgebra;
