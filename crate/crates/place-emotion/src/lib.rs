//! Place-emotion analytics: construct place footprints from geotagged photo
//! points via density-based clustering and convex hulls, compute per-place
//! happiness indices from face-level emotion scores, quantify their
//! stability (parameter-grid concordance, bootstrap confidence intervals),
//! and relate place emotion to environmental factors via correlation and
//! multiple linear regression.

pub mod affect;
pub mod cli;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod pipeline;
pub mod stats;

pub use error::{Error, Result};
