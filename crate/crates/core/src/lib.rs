//! Classify urban zones by how they attract trips, and find the POI types
//! over-represented in each class.
//!
//! The pipeline reads zones, an origin-destination trip matrix, a road
//! network and POIs; builds per-zone features `[inflow, sd, mu, sigma]`;
//! clusters them with complete-linkage HAC under correlation distance; and
//! ranks POI types per class with a one-sided Fisher's exact test.

pub mod clustering;
pub mod error;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod pipeline;
pub mod poisig;
pub mod roadnet;
pub mod synth;

pub use error::{Error, Result};
