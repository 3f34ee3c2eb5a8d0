//! Sub-wavelength band structures, Dirac cones and envelope homogenization
//! for bubbly honeycomb and square phononic crystals.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod config;
pub mod error;
pub mod fields;
pub mod greens;
pub mod homogenize;
pub mod lattice;
pub mod operators;
pub mod optimize;
pub mod spectral;
pub mod special;

pub use error::{Error, Result};
