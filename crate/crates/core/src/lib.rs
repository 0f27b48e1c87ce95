//! Analytics and exact simulation for a telegraph process confined to
//! `[0, H]` whose boundaries absorb with probability `alpha` and otherwise
//! reflect.

// Guards are written `!(x < bound)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod mgf;
pub mod model;
pub mod montecarlo;
pub mod numfmt;
pub mod scaling;
pub mod simulate;
mod special;

pub use error::{Error, Param, Result};
pub use model::{exp_draw, validate_params, Boundary, ModelParams, RandomSource, SwitchingProb};
pub use special::{phi1, phi3};
