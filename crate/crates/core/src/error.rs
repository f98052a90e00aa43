use thiserror::Error;

use crate::codec::CodecError;
use crate::stream::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("degenerate covariance (singular or not positive definite)")]
    SingularCovariance,

    #[error("zero-norm quaternion")]
    ZeroQuaternion,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("gaussian {index} has a non-finite attribute")]
    NonFiniteGaussian { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("backward requested without a matching forward pass")]
    StaleForward,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimization diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("session: {0}")]
    Session(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
