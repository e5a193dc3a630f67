//! Point-target SAR simulation, time-domain back-projection and
//! navigation-error sensitivity analysis.

pub mod analysis;
pub mod backprojection;
pub mod container;
pub mod error;
pub mod geometry;
pub mod nav;
pub mod pipeline;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
