//! Trefftz multiscale coarse spaces and two-level Schwarz solvers for the
//! Poisson equation on perforated planar domains.

pub mod coarse;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod numerics;
pub mod schwarz;
pub mod urban;

pub use error::{Error, Result};
