//! Shuffle-model differential privacy at desk scale: frequency estimation
//! and heavy-hitter detection built on a blanket-noise balls-into-bins core,
//! with an experiment harness and a privacy-audit engine.
//!
//! - [`params`]: derives every protocol constant from user-facing inputs.
//! - [`bib`]: the balls-into-bins mechanism and the exact / Monte Carlo
//!   privacy audits of its likelihood-ratio condition.
//! - [`fe`]: the small-domain (direct) and large-domain (hashed) frequency
//!   oracles with single-element and all-elements analyzers.
//! - [`hhd`]: prefix-tree heavy-hitter detection over layered FE instances.
//! - [`sim`]: dataset generators, the trusted shuffler, and experiment loops
//!   producing accuracy and recall reports.
//! - [`codec`]: bit-packed wire formats for bags and datasets.
//!
//! Everything randomized consumes substreams derived from one master seed
//! ([`rng`]), so results are reproducible and independent of the parallelism
//! degree; the `parallel` feature (default) runs the heavy loops on rayon.

pub mod bib;
pub mod codec;
pub mod error;
pub mod exec;
pub mod fe;
pub mod hhd;
pub mod params;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use params::{BibParams, FeParams, FeVariant, HhdParams};
