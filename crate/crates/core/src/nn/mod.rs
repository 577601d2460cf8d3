//! Hand-wired neural network primitives: each layer exposes an explicit
//! forward and an analytic backward so custom gradients can be spliced in.

mod activation;
mod adam;
mod affine;
mod batchnorm;
mod init;
mod loss;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
pub use adam::{AdamConfig, AdamState};
pub use affine::{affine_backward, affine_forward, Affine, AffineGrads};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNorm, BnCache, BnGrads};
pub use init::xavier_init;
pub use loss::{bce_loss, clamp_probability, PROB_CLAMP};

/// Whether a layer is being trained or only evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
