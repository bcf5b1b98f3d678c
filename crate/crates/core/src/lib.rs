//! Computational coarse geometry on finite metric windows.

pub mod calculus;
pub mod certify;
pub mod cli;
pub mod cone;
pub mod covers;
pub mod error;
pub mod nerve;
pub mod report;
pub mod space;
pub mod sublinear;

pub use covers::{Cover, LinearityWitness, SetFamily, WitnessConfig};
pub use error::{Error, Result};
pub use space::{CoordNorm, Group, MetricWindow, SpaceRecipe, TOL};
