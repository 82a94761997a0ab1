//! Stratified sampling of boxes with box and triangular-prism strata: exact
//! expected squared L2-discrepancy, samplers, and Monte-Carlo checks.

pub mod discrepancy;
pub mod error;
pub mod expectation;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod partitions;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{BoxStratum, DomainBox, Orientation, Partition, Stratum, TrianglePrism};
pub use partitions::{PairPosition, VariantName};
pub use sampling::PointSet;
