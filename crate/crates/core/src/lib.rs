//! Compact streaming of dynamic 3D Gaussian scenes.
//!
//! A frame-0 Gaussian scene is transmitted once; subsequent frames carry
//! either a small set of keypoints whose motion drives their neighbors, or
//! (every `s` frames) a sparse, masked set of attribute residuals that
//! corrects accumulated error. The math and optimization code is generic over
//! the scalar type; the bitstream and the streaming pipeline use `f32`.

pub mod codec;
pub mod corrector;
pub mod error;
pub mod gaussian;
pub mod keypoint;
pub mod linalg;
pub mod motion;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision scene, as carried by the bitstream.
pub type Scene = gaussian::SceneState<f32>;
/// Double-precision scene for reference computations.
pub type Scene64 = gaussian::SceneState<f64>;
pub type Gaussian = gaussian::GaussianPoint<f32>;
pub type Camera = gaussian::Camera<f32>;
pub type Image = render::Image<f32>;
