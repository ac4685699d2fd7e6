//! Functional model-X knockoffs for variable and edge selection with
//! false discovery rate control.
//!
//! The pipeline runs basis projection, per-variable FPCA, knockoff score
//! sampling, group-lasso fits on the augmented design and the knockoff filter.

pub mod basis;
pub mod experiment;
pub mod filter;
pub mod fpca;
pub mod grouplasso;
pub mod knockoff;
pub mod linalg;
pub mod simgen;
pub mod smoothing;
