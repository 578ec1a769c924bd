//! Layer-assignment search for convolutional networks.
//!
//! Given a target depth, decide how many layers each spatial-resolution group
//! receives. The search grows the best assignment one layer at a time: the
//! `n` one-hot increments of the current winner are trained inside a
//! weight-sharing supernet, re-calibrated, evaluated, and the best one is kept.
//! A brute-force oracle trains every assignment stand-alone to score the search.

pub mod assignments;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod search;
pub mod supernet;

pub use assignments::{AssignmentChain, LayerAssignment};
pub use error::{LasError, Result};
