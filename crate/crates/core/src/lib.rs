//! Unified affine-body / soft-body incremental potential contact engine for
//! robots carrying vision-based tactile sensors.
//!
//! Stiff links and objects are reduced to 12-DoF affine bodies, gel pads are
//! Neo-Hookean tetrahedral solids, and every time step minimizes one
//! barrier-augmented incremental potential over the stacked state `{y; x}`
//! with a projected Newton solver whose line search is filtered by continuous
//! collision detection. Kinematic robot actuation enters as augmented
//! Lagrangian equality constraints, and the deformed gel pads are turned into
//! depth/normal maps, marker flows and point clouds by [`tactile`].

// `!(x > 0.0)` also rejects NaN, which is the point of every such check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abd;
pub mod autodiff;
pub mod contact;
pub mod energy;
mod error;
pub mod math;
pub mod mesh;
pub mod robot;
pub mod solver;
pub mod tactile;

pub use error::{Error, Result};
