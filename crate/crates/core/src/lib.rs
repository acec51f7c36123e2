//! Counterfactual explanations for collaborative-filtering recommenders.
//!
//! The crate trains small NCF and FM models on rating logs, estimates how a
//! user's score for an item moves when one of their past interactions is
//! removed, and searches for the smallest set of interactions whose removal
//! changes the user's top-1 recommendation. An evaluation harness retrains
//! without the proposed set to check whether the explanation holds.

pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod influence;
pub mod models;
pub mod seed;

pub use error::{Error, Result};
