//! Diffusion-based 6-DOF grasp generation with an on-generator trained
//! discriminator, analytic grasp oracles and evaluation metrics.

pub mod autodiff;
pub mod diffusion;
pub mod discriminator;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod se3;
pub mod shape;
pub mod suite;

pub use error::{Error, Result};
