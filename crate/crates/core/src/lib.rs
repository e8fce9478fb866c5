//! Constructive pipeline for semi-stationary wild solutions of the isentropic
//! compressible Euler system: compactly supported pressure potentials,
//! Bogovskii lifts, strict subsolutions, localized-wave perturbation and
//! energy-admissibility checks, all on periodic pseudospectral grids.

pub mod admissibility;
pub mod bogovskii;
pub mod bump;
pub mod chi;
pub mod convex_integration;
pub mod domain;
pub mod error;
pub mod field;
pub mod geometry;
pub mod poisson;
pub mod persist;
pub mod pipeline;
pub mod pressure;
pub mod quadrature;
pub mod report;
pub mod subsolution;
pub mod wave;
pub mod weak;

pub use error::{Error, Result};
