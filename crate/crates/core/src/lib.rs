//! Semi-parametric demand learning and best-response pricing for competing
//! sellers.
//!
//! Each seller faces expected demand `psi_i(theta_i . p)`, a single-index model
//! with an unknown s-concave link `psi_i` and an unknown unit index vector
//! `theta_i`. The crate provides
//!
//! - [`links`]: link functions, the `d_s` / `h_s` transforms, virtual
//!   valuations and s-concavity checks;
//! - [`equilibrium`]: best responses, Picard iteration to the Nash
//!   equilibrium, and uniqueness / curvature certificates;
//! - [`theta`]: the linear index estimator and Monte-Carlo oracles for the
//!   surrogate link;
//! - [`shape`]: least squares under s-concavity via exact concave-cone
//!   projection;
//! - [`engine`]: the explore-then-best-respond market simulator;
//! - [`harness`]: experiment grids, scaling-law fits, CSV and SVG output.

pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod interval;
pub mod links;
pub mod rng;
pub mod shape;
pub mod theta;

pub use error::{Error, Result};
pub use interval::Interval;
pub use links::{LinkFamily, LinkSpec};
