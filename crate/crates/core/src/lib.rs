//! Equiaffine (Blaschke) geometry of hypersurfaces in ℝ⁴ and detection of
//! pointwise symmetries of the pair (difference tensor, shape operator).
//!
//! * [`affine_core`]: jets, affine metric, affine normal and the pointwise
//!   apparatus in an orthonormal frame.
//! * [`symmetry`] and [`cubic`]: stabilizers in SO(3) and normal forms.
//! * [`catalog`]: closed-form surfaces with known symmetry.
//! * [`verifier`]: residuals of the structure equations, adapted frames and
//!   grid scans.
//! * [`report`]: run configuration and report rendering used by the binary.

pub mod affine_core;
pub mod catalog;
pub mod cubic;
pub mod error;
pub mod fd;
pub mod report;
pub mod series;
pub mod symmetry;
pub mod verifier;

pub use error::{GeomError, Result};
