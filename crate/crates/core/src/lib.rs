//! Streaming coresets and sketches for tall matrices presented row by row.
//!
//! The building blocks are online leverage scores and the online ℓ∞ coreset;
//! on top of them sit ℓp sketches, Lewis-weight machinery, sampling
//! embeddings, geometry queries, and regression/column-selection solvers.

pub mod css;
pub mod data;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lewis;
pub mod linalg;
pub mod linf_coreset;
pub mod lp;
pub mod lp_stream;
pub mod matrix;
pub mod online_scores;
pub mod parallel;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod sensitivity;
pub mod source;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, QuadraticForm};
