//! Forward models and tomographic reconstruction for harmonic oscillators,
//! coupled oscillator rings, free particles on a ring and particles in a box.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod osc_forward;
pub mod osc_recon;
pub mod ratio;
pub mod record;
pub mod semicontinuous;
pub mod states;

pub use error::{Error, Result};
pub use grid::SpatialGrid;
