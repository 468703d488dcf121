//! Planar Gaussian splatting for radio radiance fields: a differentiable
//! angular renderer, two-stage training (geometry, then interaction gains),
//! a ray-tracing oracle for ground truth, and channel-level evaluation.

pub mod channel;
pub mod error;
pub mod geomtrain;
pub mod io;
pub mod math;
pub mod oracle;
pub mod optim;
pub mod projection;
pub mod rftrain;
pub mod scene;
pub mod sh;
pub mod spectrum;
pub mod splat;

pub use error::{Error, Result};
