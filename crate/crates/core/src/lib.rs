//! Per-pulse emitter classification of interleaved radar pulse streams.
//!
//! Pulses are synthesized and stored by [`pdw`], expanded into periodic
//! wide-value features by [`wvembs`], optionally masked by [`masking`] and
//! classified token by token by the network in [`nn`]. [`pipeline`] wires
//! training and evaluation; [`cli`] is the command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod masking;
pub mod nn;
pub mod pdw;
pub mod pipeline;
pub mod seed;
pub mod wvembs;

pub use error::{Error, Result};
