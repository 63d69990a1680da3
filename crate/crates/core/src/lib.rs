//! Reconstruction of implant surface meshes from four calibrated silhouettes.
//!
//! The crate is organised along the processing chain:
//!
//! 1. [`geometry`] – meshes, rigid transforms, STL, closest-point queries.
//! 2. [`imaging`] – point-source projection, silhouette rasterization,
//!    contour tracing, distance fields, synthetic cases, COCO exchange.
//! 3. [`registration`] – 6-DOF pose recovery from one or more contours.
//! 4. [`morphing`] – deformation of a template until its silhouettes match.
//! 5. [`evaluation`] – ICP alignment, per-vertex surface error, cohort statistics.
//! 6. [`kinematics`] – femorotibial translation / axial rotation traces.
//! 7. [`pipeline`] – case directories and the commands behind the CLI.

pub mod error;
pub mod geometry;
pub mod imaging;
pub mod registration;
pub mod morphing;
pub mod evaluation;
pub mod kinematics;
pub mod pipeline;

pub use error::{Error, Result};
