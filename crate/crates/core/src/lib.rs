//! Top-k classification losses and their polyhedral surrogates.
//!
//! The crate evaluates the discrete top-k loss and four convex piecewise-linear
//! surrogates for it, enumerates the finite representative sets each surrogate
//! minimizes over, computes optimal reports for arbitrary label distributions,
//! audits when surrogate minimization followed by the argmax link recovers a
//! top-k optimal set, and runs the two desk-scale experiments (exact
//! risk/regret sweeps and linear-model training with Adam).

pub mod consistency;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod properties;
pub mod simplex;
pub(crate) mod util;

pub use error::{Error, Result};
pub use losses::LossId;
pub use simplex::{Label, LabelSpace, ProbVector, ScoreVector, TopKSet};
pub use util::format_sig12;
