//! Numerics for finite-dimensional repeated interaction systems.

pub mod error;
pub mod model;
pub mod qlinalg;
pub mod semigroup;
pub mod thermo;
pub mod linres;
pub mod fcs;

pub use error::{Error, Result};
