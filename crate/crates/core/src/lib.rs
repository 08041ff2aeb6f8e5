// Index loops mirror the stencil formulas, and negated float comparisons
// are deliberate so that NaN fails every admissibility check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod config;
pub mod continuation;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod initial;
pub mod nonlinearity;
pub mod oracle;
pub mod output;
pub mod scheme;

pub use error::{Error, Result};
