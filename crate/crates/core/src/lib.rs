//! Numerical laboratory for the Kähler–Ricci flow on rotationally symmetric
//! spheres.

pub mod conjheat;
pub mod error;
pub mod flow;
pub mod geom2d;
pub mod lgeo;
pub mod perelman;

pub use error::{Error, Result};
