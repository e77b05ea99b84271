//! Coherence modeling through structural similarity between documents.
//!
//! The pipeline turns each document into a directed sentence graph
//! ([`sentgraph`]), summarizes the graph as a bag of k-node subgraph
//! isomorphism classes ([`census`]), links training documents through the
//! subgraph types they share in a weighted doc–subgraph graph
//! ([`hetgraph`]), and classifies document nodes with a two-layer graph
//! convolutional network ([`gcn`]). Test documents are attached to the frozen
//! training graph one at a time ([`pipeline`]).

pub mod census;
pub mod corpus;
mod error;
pub mod gcn;
pub mod hetgraph;
pub mod ndjson;
pub mod pipeline;
pub mod sentgraph;
pub mod synthetic;

pub use error::{Error, Result};
