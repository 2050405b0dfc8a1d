//! Pseudorandomness measures of finite ±1 sequences and the machinery to
//! estimate the limit distribution of the normalized normality measure.
//!
//! The crate is organized around five pieces:
//!
//! * [`sequence`] — bit-packed ±1 sequences, patterns, parsing/rendering,
//!   and reproducible counter-based random generation.
//! * [`measures`] — the normality measure, well-distribution measure and
//!   correlation measure, each computed exactly with an argmax witness.
//! * [`restricted`] — block-restricted pattern counting, the restricted
//!   normality measure, and the sandwich bounds tying it to the full one.
//! * [`walk`] — block embedding into a lattice random walk, pattern weight
//!   tables, polytope membership, and exit-probability simulation (lattice
//!   and Gaussian-path routes).
//! * [`stats`] — deterministic parallel sampling of measure distributions,
//!   empirical CDFs with Kolmogorov–Smirnov queries, and tail-bound checks.

pub mod error;
pub mod measures;
pub mod report;
pub mod restricted;
pub mod sequence;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use report::{DeviationReport, LagTuple, Witness};
pub use sequence::{random_sequence, BinarySequence, Pattern, SeedSpec, SequenceFormat};
