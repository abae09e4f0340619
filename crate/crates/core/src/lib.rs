//! Monocular non-rigid surface tracking with neural deformation fields,
//! a thin-shell elasticity prior and a differentiable Gaussian-splat renderer.

pub mod diffmath;
pub mod error;
pub mod eval;
pub mod fields;
pub mod geometry;
pub mod shell;
pub mod scene_io;
pub mod splat;
pub mod track;

pub use error::{Error, Result};
