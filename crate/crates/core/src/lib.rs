//! Projection filters for scalar nonlinear filtering problems, together with
//! the SDE, manifold and density-family machinery they are built from.

// `!(x > 0.0)` is used deliberately so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod family;
pub mod filter;
pub mod fit;
pub mod geometry;
pub mod grid;
pub mod probe;
pub mod projection;
pub mod quadrature;
pub mod reference;
pub mod sde;

pub use error::{Error, Result};
pub use family::{DensityFamily, GaussianFamily, MetricMode};
pub use filter::{Filter, FilterKind, FilterModel};
pub use geometry::Embedding;
pub use grid::Grid;
pub use projection::{ProjectionKind, Projector};
pub use sde::{ItoSde, StratonovichSde};
