//! Dark-video analysis toolkit.
//!
//! Darkness quantification of clips, a temporal-consistency encoder with its
//! losses, luminance adaptation with per-pixel filters, a toy reflect
//! augmented transformer classifier, and corpus curation. Numerical code is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the type.

pub mod config;
pub mod curate;
pub mod error;
pub mod gdq;
pub mod init;
pub mod lam;
pub mod pipeline;
pub mod ram;
pub mod scalar;
pub mod tcm;
pub mod tensor;
pub mod video;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type TcmParams32 = tcm::TcmParams<f32>;
pub type FilterGenerator32 = lam::FilterGenerator<f32>;
pub type FilterBank32 = lam::FilterBank<f32>;
pub type Backbone32 = ram::Backbone<f32>;
