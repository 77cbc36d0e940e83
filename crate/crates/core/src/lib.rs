//! Counterfactual explanations for binary naive Bayes classifiers.
//!
//! The pipeline compiles a classifier into a reduced OBDD ([`odd`]), encodes
//! the diagram as an equivalent CNF over the feature variables ([`cnf`]), and
//! explains a prediction by enumerating the minimal correction subsets of that
//! CNF conjoined with the instance's unit clauses ([`mcs`], [`explain`]).
//! Each correction subset is a minimal set of feature flips that inverts the
//! prediction.

pub mod bench;
pub mod cli;
pub mod cnf;
pub mod error;
pub mod explain;
pub mod mcs;
pub mod model;
pub mod odd;
pub mod sat;

pub use error::{Error, Result};
