//! Numerical laboratory for conformal submersions with horizontal distribution.
//!
//! Everything is built on coordinate charts and central finite differences:
//! metrics, affine connections and their duals, the vertical/horizontal
//! splitting of a submersion, the fundamental tensors `T` and `A`, curvature
//! identity suites, and a fixed-step geodesic integrator with curve lifting
//! and projection checks.

pub mod chart;
pub mod connection;
pub mod error;
pub mod gallery;
pub mod geodesic;
pub mod report;
pub mod sample;
pub mod submersion;
pub mod suite;
pub mod tensors;

pub use chart::{Chart, Point, ScalarField, VectorField, DEFAULT_FD_STEP};
pub use connection::{Christoffel, ConnectionField, MetricField};
pub use error::GeomError;
pub use gallery::GeometryBundle;
pub use geodesic::CurveRecord;
pub use report::{IdentityId, ResidualReport};
pub use submersion::SubmersionMap;
