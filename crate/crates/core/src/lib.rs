//! Exemplar-based convex topic modeling.
//!
//! Terms are clustered by fitting a prior over exemplar terms that maximizes
//! a concave mixture likelihood built on sparse Dice co-occurrence
//! similarity. The fitted support is the topic set, so the number of topics
//! is an output rather than an input.
//!
//! The pipeline runs in six stages: [`corpus`] loading, [`vocabulary`]
//! filtering, [`similarity`] construction, [`solver`] fitting, document
//! [`scoring`], and label-alignment [`evaluation`]. [`pipeline`] wires them
//! together from a single [`pipeline::RunConfig`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod reduce;
pub mod report;
pub mod scoring;
pub mod similarity;
pub mod solver;
pub mod vocabulary;

pub use error::{Error, Result};
