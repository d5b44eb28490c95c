//! WiFi CSI sensing toolkit.
//!
//! * [`tissue`] synthesizes channel state information from a layered-tissue
//!   body model.
//! * [`pipeline`] reads and writes CSI datasets and prepares network inputs.
//! * [`nn`] is a small tensor and layer library with explicit backward passes.
//! * [`net`] assembles the generation / feature-learning / task network.
//! * [`eval`] holds metrics and the Gaussian naive Bayes baseline.
//! * [`cli`] drives the whole chain from the `csi-sense` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::needless_range_loop)]

mod binio;
pub mod cli;
pub mod error;
pub mod eval;
pub mod net;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod tissue;

pub use error::{Error, Result};
