//! Random walks driven by random isometries of R^d.

pub mod catalog;
pub mod conditions;
pub mod decomposition;
pub mod error;
pub mod group;
pub mod isometry;
pub mod limits;
pub mod measure;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod walker;

pub use error::{Error, Result};
pub use isometry::{Isometry, Rotation};
pub use measure::AtomicIsometryMeasure;
