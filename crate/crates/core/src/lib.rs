//! Nonlinear Schrödinger equation on metric star graphs with point
//! interactions at the vertex: explicit standing waves, their variational
//! quantities, linear and orbital stability, time integration and
//! fast-soliton scattering.

pub mod discrete;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod graph;
pub mod quadrature;
pub mod scattering;
pub mod stability;
pub mod standing_waves;

pub use error::{NlsError, Result};
pub use graph::{GraphFunction, Quadrature, StarGrid, VertexCondition};
pub use standing_waves::{NlsParams, StationaryState};
