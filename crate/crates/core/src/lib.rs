//! Linear alignment between independently learned latent spaces.
//!
//! The crate fits a linear map `W` with `z2 ≈ W z1` between two sets of
//! latents describing the same states, measures how well the two geometries
//! agree on held-out states, diagnoses the conditioning of `W`, and runs the
//! collaboration protocols built on top of it (probe migration,
//! teacher-student migration and mutual teaching). A synthetic linear world
//! with a known optimal map and a small self-contained JEPA trainer are
//! included for verification.
//!
//! Convention: `W` always maps view-1 coordinates to view-2 coordinates.

pub mod align;
pub mod collab;
pub mod container;
pub mod diagnostics;
pub mod error;
pub mod latentio;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod synthworld;
pub mod toyjepa;

pub use error::{Error, Result};
