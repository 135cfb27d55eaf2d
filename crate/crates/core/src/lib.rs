//! Neural unsigned distance fields over quaternion pose space.
//!
//! The crate models the set of plausible poses of a kinematic skeleton as
//! the zero level set of a learned scalar field on the product of unit
//! 3-spheres. It provides:
//!
//! - quaternion/pose primitives and the weighted geodesic pose metric ([`so3`]),
//! - forward kinematics for the synthetic skeleton ([`fk`]),
//! - synthetic training manifolds, kNN labeling, and a brute-force distance
//!   oracle ([`manifold`]), with a versioned binary dataset format ([`dataset`]),
//! - the hierarchical field network with exact first- and second-order
//!   derivative passes ([`model`]),
//! - curriculum training ([`train`]), gradient-descent projection onto the
//!   zero set ([`project`]), and downstream pose optimization tasks
//!   ([`tasks`]).

pub mod dataset;
pub mod error;
pub mod fk;
pub mod manifold;
pub mod model;
pub mod project;
pub mod tasks;
pub mod train;
pub mod so3;

pub use error::{Error, FormatError, Result};
