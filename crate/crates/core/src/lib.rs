#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Constructive rewrites of ReLU networks into wide and deep counterparts.
//!
//! Univariate networks are rebuilt exactly. Multivariate networks are
//! split into simplices and rebuilt from fan-shaped blocks, agreeing with
//! the source up to a set of small measure. Classification variants use
//! binary-step units and De Morgan style rule networks.

pub mod classify;
pub mod error;
pub mod fanshape;
pub mod geometry;
pub mod netcore;
pub mod pwl1d;
pub mod regress;
pub mod verify;

pub use error::{Error, Result};
pub use netcore::{Activation, Network, Neuron, Src, StructureMetrics};
