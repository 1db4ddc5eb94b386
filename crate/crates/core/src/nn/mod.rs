//! Minimal dense-tensor neural network kernels.
//!
//! Everything is `f64`, row-major, batch-first (`N, C, H, W` for images,
//! `N, D` for vectors). Forward passes are pure: they return a cache that the
//! matching backward pass consumes, and batch-norm running statistics are only
//! touched by an explicit [`Sequential::commit_running_stats`].

mod adam;
mod gemm;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{backprop_gradients, gradcheck, gradcheck_with, GradcheckReport};
pub use layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, dropout_forward, maxpool2d_backward, maxpool2d_forward, relu_backward,
    relu_forward, BatchNormCache, Conv2dCache, LayerKind, LayerParams, MaxPoolCache,
    BN_EPS, BN_MOMENTUM,
};
pub use loss::{mae_loss, mse_loss};
pub use network::{Cache, Gradients, Layer, Mode, ParamGrad, Sequential};
pub use rng::Rng;
pub use tensor::Tensor;
