pub mod error;
pub mod layer;
pub mod mpo;
pub mod persistence;
pub mod scalar;
pub mod svd;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use layer::{LayerGrads, MpoLinear};
pub use mpo::{BondProfile, MpoFactorization, ShapePlan};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Mpo64 = MpoFactorization<f64>;
pub type Mpo32 = MpoFactorization<f32>;
pub type MpoLinear64 = MpoLinear<f64>;
pub type MpoLinear32 = MpoLinear<f32>;
