pub mod captcha;
pub mod data;
pub mod error;
pub mod eval;
pub mod image;
pub mod model;
pub mod ops;
pub mod optim;
pub mod pgm;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod vuln;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{LayerGrads, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub use model::{ModelParams32, ModelParams64};
