//! DiscLSTM: emotion recognition in multiparty conversations with a
//! discourse-graph encoder feeding a bidirectional recurrent layer.
//!
//! The crate is self-contained: a small reverse-mode autodiff tape
//! ([`autodiff`]) carries the network ([`model`]) and its training loop
//! ([`training`]). [`corpus`] reads and writes dialogue files and embedding
//! blobs; [`cli`] wires everything into the `disclstm` binary.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod training;
