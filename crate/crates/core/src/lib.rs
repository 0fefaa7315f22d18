//! Exact simulation and limit-theory diagnostics for ergodic automorphisms
//! of the torus `T^d = R^d / Z^d`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
pub mod error;
pub mod limits;
pub mod matrix;
pub mod observable;
pub mod poly;
pub mod rng;
pub mod serde_biguint;
pub mod spectral;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
pub use matrix::IntMatrix;
pub use torus::{random_point, Orbit, OrbitCursor, RationalTorusPoint, TorusAutomorphism};
