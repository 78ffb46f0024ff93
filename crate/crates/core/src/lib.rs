//! Stochastic phase dynamics of bump attractors on the ring.

pub mod error;
pub mod grid;
pub mod manifold;
pub mod isochronal;
pub mod noise;
pub mod ring;
pub mod sim;
pub mod stats;
pub mod variational;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
