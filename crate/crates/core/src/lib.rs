//! Two-level mesh graph networks for learned simulation on unstructured
//! triangular meshes.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod graphs;
pub mod kv;
pub mod mesh;
pub mod nn;
pub mod parallel;
pub mod processor;
pub mod solver;
pub mod training;

pub use error::{Error, Result};
