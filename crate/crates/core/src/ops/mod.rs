//! Differentiable layer operations (forward and backward).

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward};
pub use conv::{conv2d_backward, conv2d_backward_with, conv2d_forward};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout, dropout_backward, DropoutMask, Mode};
pub use loss::{bce_loss, BCE_EPSILON};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolIndices};
