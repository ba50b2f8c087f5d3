//! Generalised Bayesian networks (GDAGs): d-separation, classical models,
//! theory-independent inequalities, the C = I sufficient condition with its
//! reduction rules, small-GDAG enumeration, and entropic cones derived by
//! exact Fourier–Motzkin elimination.

pub mod classify;
pub mod dsep;
pub mod enumerate;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod inequalities;
pub mod models;

pub use dsep::{CISet, CIStatement, DsepWitness};
pub use error::{Error, Result};
pub use graph::{gdag, parse_gdag, GDag, NodeId, NodeKind, NodeSet};
