//! Self-organized operational residual networks for single-image
//! super-resolution.
//!
//! The crate carries its own small reverse-mode autodiff ([`autograd`]) over
//! rank-4 `f32` tensors, the layers built from it ([`nn`]), the EDSR,
//! Self-ONN and hybrid models ([`model`]), a PNG dataset pipeline
//! ([`data`]), the training loop with exact resume ([`train`]) and PSNR/SSIM
//! evaluation ([`metrics`]). [`cli`] holds the command implementations used
//! by the `sornet` binary.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{count_params, Arch, Model, ModelSpec};
pub use tensor::{Shape, Tensor};
