//! Streaming focus-driven tree cuts over sequences of topic trees.
//!
//! The crate covers the whole analytic pipeline: corpus ingest and tree
//! building ([`ingest`]), the Dirichlet compound multinomial likelihood
//! ([`dcm`]), the cut optimizer ([`treecut`]), display grouping
//! ([`postprocess`]), evaluation ([`metrics`]), river geometry ([`layout`])
//! and the sedimentation simulation ([`sediment`]).

pub mod cluster;
pub mod dcm;
pub mod error;
pub mod ingest;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod postprocess;
pub mod sediment;
pub mod synth;
pub mod treecut;
pub mod vecmath;

pub use error::{Error, Result};
