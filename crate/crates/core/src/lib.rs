pub mod autograd;
pub mod blend;
pub mod bvh;
pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod kinematics;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod pyramid;
pub mod rotation;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
