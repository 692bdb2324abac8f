//! Unsupervised cross-domain alignment with prototype/memory-bank optimal
//! transport and swapped-prediction representation learning.

pub mod error;
pub mod linalg;
pub mod ot;
pub mod correspondence;
pub mod representation;
pub mod data;
pub mod eval;
pub mod experiment;

pub use error::{Error, Result};
pub use linalg::Matrix;
